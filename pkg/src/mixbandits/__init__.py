"""UCB-style bandit policies for arms whose rewards are φ-mixing processes."""
from .errors import (CertificationError, ConfigError, ContractError, InfeasibleError,
                     MixBanditError, SummabilityError, UnboundedRegretError)
from .mixing_math import BlockGeometry, MixingProfile
from .processes import Alphabet, ArmProcess, make_finite_range_arm, make_iid_arm, make_markov_arm
from .rewards import BlockReward
from .policies import (BlockUCB, ClassicalUCB, ComboUCB, FixedArmPolicy, GenericUCB,
                       RestlessUCB, UniformPolicy)
from .environments import RunRecord, run_rested, run_restless

__version__ = "0.1.0"
