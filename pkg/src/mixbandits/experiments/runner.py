"""Seeded run matrices, aggregation and declared assertions.

Bundle layout under the config's output directory::

    config.yaml            canonical config actually run
    runs/seed_<s>.csv      one RunRecord per seed (environments CSV schema)
    runs/seed_<s>.json     its summary
    aggregate.json         mean/stderr regret at checkpoints, bound, warnings
    bounds.csv             t, mean_regret, stderr, bound
    assertions.json        per-assertion report
    tails_<i>.csv          concentration_lab only (oracle CSV schema)
    lab.json               concentration_lab summary
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..environments import config_digest, run_rested, run_restless
from ..errors import MixBanditError, UnboundedRegretError
from ..mixing_math import (MixingProfile, ZERO, block_ucb_regret_bound, combo_regret_bound,
                           restless_regret_bound)
from ..oracle import block_mean_value, binomial_mean_tail, tail_estimate, value_table
from .config import ExperimentConfig, PolicySpec, config_from_dict, dump_config


def checkpoints(horizon: int) -> list:
    """Steps ⌈10^{j/8}⌉ up to the horizon, plus the horizon itself."""
    out = set()
    j = 0
    while True:
        x = 10.0 ** (j / 8.0)
        r = round(x)
        t = r if abs(x - r) < 1e-9 else math.ceil(x)
        if t > horizon:
            break
        out.add(t)
        j += 1
    out.add(horizon)
    return sorted(out)


def atomic_write(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass
class Oracle:
    """Per-arm gaps and the optimal (arm, m, b) for a policy's regret definition."""

    gaps: list
    best: tuple
    values: list
    notes: list = field(default_factory=list)


def policy_oracle(cfg: ExperimentConfig, policy) -> Oracle:
    arms = cfg.build_arms()
    notes: list = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if cfg.policy.kind == "combo_ucb":
            table = value_table(arms, policy.rewards, policy.s)
            k, m, b = table.best
            return Oracle(table.gaps.tolist(), (k, m, b), table.arm_values.tolist(), table.notes)
        lengths = policy.block_lengths()
        mus = [block_mean_value(rw, arm, m, seed=k, notes=notes)
               for k, (arm, rw, m) in enumerate(zip(arms, policy.rewards, lengths))]
    k = int(np.argmax(mus))
    b = 0 if cfg.policy.kind == "restless_ucb" else policy.b
    top = max(mus)
    return Oracle([top - v for v in mus], (k, lengths[k], b), mus, notes)


def regret_bound(cfg: ExperimentConfig, policy, gaps, t: float) -> Optional[float]:
    """Theoretical regret bound at step t for the configured policy, or None."""
    if t < 2:
        return None
    kind = cfg.policy.kind
    try:
        if kind == "block_ucb":
            return block_ucb_regret_bound(policy.profiles, policy.geometry, gaps,
                                          policy.alpha, t)
        if kind == "ucb" and cfg.scenario == "rested_fixed":
            profiles = [a.build().profile for a in cfg.arms]
            if all(p.kind == ZERO for p in profiles):
                return block_ucb_regret_bound([MixingProfile.zero()] * len(gaps),
                                              policy.geometry, gaps, policy.alpha, t)
            return None
        if kind == "combo_ucb":
            return combo_regret_bound(gaps, policy.s, policy.alpha, t)
        if kind == "restless_ucb":
            return restless_regret_bound(gaps, policy.alpha, t)
    except UnboundedRegretError:
        return math.inf
    return None


def _run_one(cfg_dict: dict, policy_dict: Optional[dict], seed: int, gaps: list,
             out_dir: Optional[str], digest: str):
    cfg = config_from_dict(cfg_dict)
    spec = cfg.policy
    if policy_dict is not None:
        spec = PolicySpec.parse(policy_dict, "policy", len(cfg.arms))
    policy = cfg.build_policy(spec, seed)
    runner = run_restless if cfg.scenario == "restless" else run_rested
    record = runner(policy, cfg.build_arms(), cfg.horizon, seed, gaps=gaps,
                    config_hash=digest)
    if out_dir is not None:
        runs = Path(out_dir) / "runs"
        atomic_write(runs / f"seed_{seed}.csv", record.csv_text())
        atomic_write(runs / f"seed_{seed}.json", record.summary_json() + "\n")
    return record


def _map_seeds(cfg: ExperimentConfig, seeds, gaps, out_dir, digest, jobs: int,
               policy: Optional[PolicySpec] = None) -> list:
    cfg_dict = cfg.to_dict()
    pol = None if policy is None else policy.to_dict()
    args = [(cfg_dict, pol, s, gaps, out_dir, digest) for s in seeds]
    if jobs <= 1 or len(seeds) <= 1:
        return [_run_one(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_one, *a) for a in args]
        return [f.result() for f in futures]


@dataclass
class Bundle:
    out_dir: Path
    config: ExperimentConfig
    aggregate: dict
    assertions: list
    records: list = field(default_factory=list, repr=False)
    lab: Optional[list] = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def report(self) -> str:
        lines = []
        for a in self.assertions:
            lines.append(f"{'PASS' if a['passed'] else 'FAIL'}  {a['kind']}: {a['detail']}")
        if not lines:
            lines.append("no assertions declared")
        return "\n".join(lines)


def _aggregate(cfg, policy, records, oracle: Oracle) -> dict:
    points = checkpoints(cfg.horizon)
    cum = np.array([[r.cum_regret[t - 1] for t in points] for r in records])
    mean = cum.mean(axis=0)
    n = len(records)
    stderr = cum.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(points))
    rows = []
    for i, t in enumerate(points):
        bound = regret_bound(cfg, policy, oracle.gaps, t)
        rows.append({"t": t, "mean": float(mean[i]), "stderr": float(stderr[i]),
                     "bound": bound})
    warn = sorted(set(oracle.notes) | {w for r in records for w in r.summary.get("warnings", [])})
    return {
        "name": cfg.name,
        "scenario": cfg.scenario,
        "policy": cfg.policy.to_dict(),
        "horizon": cfg.horizon,
        "seeds": list(cfg.seeds),
        "gaps": list(oracle.gaps),
        "oracle_values": list(oracle.values),
        "oracle_best": list(oracle.best),
        "checkpoints": rows,
        "final_mean_regret": float(mean[-1]),
        "warnings": warn,
    }


def _bounds_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "mean_regret", "stderr", "bound"])
    for r in rows:
        w.writerow([r["t"], repr(r["mean"]), repr(r["stderr"]),
                    "" if r["bound"] is None else repr(float(r["bound"]))])
    return buf.getvalue()


def _check_sim(spec, cfg, records, agg, oracle, seeds, out_dir, digest, jobs) -> dict:
    kind = spec.kind
    rows = agg["checkpoints"]
    if kind == "zero_regret":
        worst = max(float(np.abs(r.cum_regret).max()) for r in records)
        return {"passed": worst <= 1e-12, "detail": f"max |cumulative regret| = {worst:.3g}"}
    if kind == "identical_choices":
        bad = []
        for other in spec.policies:
            recs = _map_seeds(cfg, seeds, oracle.gaps, None, digest, jobs, other)
            for mine, theirs in zip(records, recs):
                same = (np.array_equal(mine.arms, theirs.arms)
                        and np.array_equal(mine.m, theirs.m)
                        and np.array_equal(mine.b, theirs.b))
                if not same:
                    step = int(np.argmax(mine.arms != theirs.arms)) + 1
                    bad.append(f"{other.kind} seed {mine.seed} first differs at step {step}")
        names = ", ".join(p.kind for p in spec.policies)
        detail = (f"{cfg.policy.kind} vs {names} over {len(records)} seeds: "
                  + ("identical" if not bad else "; ".join(bad[:5])))
        return {"passed": not bad, "detail": detail}
    if kind == "regret_below_bound":
        checked = [r for r in rows if r["bound"] is not None]
        if not checked:
            return {"passed": False, "detail": "no theoretical bound for this policy"}
        over = [r for r in checked if r["mean"] > r["bound"]]
        last = checked[-1]
        detail = (f"at t={last['t']}: mean regret {last['mean']:.2f} vs bound "
                  f"{last['bound']:.2f}; {len(over)} of {len(checked)} checkpoints exceed")
        return {"passed": not over, "detail": detail}
    if kind == "log_growth":
        pts = [r for r in rows if r["t"] >= spec.start and r["t"] >= 2]
        ratios = [r["mean"] / math.log(r["t"]) for r in pts]
        worst = 0.0
        for a, b in zip(ratios, ratios[1:]):
            if a > 0:
                worst = max(worst, b / a - 1.0)
            elif b > 0:
                worst = math.inf
        ok = len(ratios) >= 2 and worst <= spec.tolerance
        detail = (f"regret/log t at t>={spec.start}: "
                  + ", ".join(f"{x:.3f}" for x in ratios)
                  + f"; largest step-to-step rise {worst:.1%} (tolerance {spec.tolerance:.0%})")
        return {"passed": ok, "detail": detail}
    if kind == "optimal_share":
        k, m, b = oracle.best
        shares = [r.selection_share(k, m, b, spec.final_fraction) for r in records]
        avg = float(np.mean(shares))
        detail = (f"(arm {k}, m={m}, b={b}) share of final {spec.final_fraction:.0%}: "
                  f"{avg:.4f} averaged over {len(records)} seeds (threshold {spec.threshold})")
        return {"passed": avg >= spec.threshold, "detail": detail}
    raise MixBanditError(f"unhandled assertion {kind}")


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, write: bool = True) -> Bundle:
    """Run every seed of ``cfg`` and evaluate its assertions.

    Gaps come from the exact oracle, or a Monte Carlo estimate (recorded in
    ``warnings``) when enumeration is infeasible.
    """
    if cfg.is_lab:
        return run_lab(cfg, write)
    out_dir = Path(cfg.output)
    # a run is identified by what it simulates, not where it is written or which seeds ran
    digest = config_digest({k: v for k, v in cfg.to_dict().items() if k not in ("output", "seeds")})
    if write:
        (out_dir / "runs").mkdir(parents=True, exist_ok=True)
        atomic_write(out_dir / "config.yaml", dump_config(cfg))
    policy = cfg.build_policy()
    oracle = policy_oracle(cfg, policy)
    seeds = list(cfg.seeds)
    records = _map_seeds(cfg, seeds, oracle.gaps, str(out_dir) if write else None,
                         digest, jobs)
    agg = _aggregate(cfg, policy, records, oracle)
    agg["config_hash"] = digest
    results = []
    for spec in cfg.assertions:
        res = _check_sim(spec, cfg, records, agg, oracle, seeds, out_dir, digest, jobs)
        results.append({"kind": spec.kind, **res})
    agg["assertions"] = results
    if write:
        atomic_write(out_dir / "aggregate.json", json.dumps(agg, indent=2) + "\n")
        atomic_write(out_dir / "bounds.csv", _bounds_csv(agg["checkpoints"]))
        atomic_write(out_dir / "assertions.json", json.dumps(results, indent=2) + "\n")
    return Bundle(out_dir, cfg, agg, results, records)


def _binomial_column(spec_arm, reward_spec, case, table) -> Optional[list]:
    """Exact tail for i.i.d. {0,1} arms under the block mean; None otherwise."""
    if spec_arm.kind != "iid" or reward_spec.kind != "block_mean":
        return None
    if tuple(spec_arm.alphabet) != (0.0, 1.0):
        return None
    p = spec_arm.probs[1]
    strict = case.mode != "block"
    return [binomial_mean_tail(p, case.n * case.m, r.eps, strict) for r in table.rows]


def run_lab(cfg: ExperimentConfig, write: bool = True) -> Bundle:
    """Concentration lab: empirical tails of block estimators against their bounds."""
    lab = cfg.concentration
    out_dir = Path(cfg.output)
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        atomic_write(out_dir / "config.yaml", dump_config(cfg))
    arms = cfg.build_arms()
    rewards = cfg.build_rewards()
    seed = cfg.seeds[0]
    cases = []
    notes: list = []
    for i, case in enumerate(lab.cases):
        arm, rw = arms[case.arm], rewards[case.reward]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mu = block_mean_value(rw, arm, case.m, seed=i, notes=notes)
        case_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        table = tail_estimate(arm, rw, case.m, case.b, case.mode, case.n, lab.epsilons,
                              lab.trials, case_seed, mu, lab.level)
        exact = _binomial_column(cfg.arms[case.arm], cfg.rewards[case.reward], case, table)
        if write:
            table.to_csv(out_dir / f"tails_{i}.csv")
        rows = []
        for j, r in enumerate(table.rows):
            row = {"eps": r.eps, "empirical": r.empirical, "wilson_lo": r.wilson_lo,
                   "wilson_hi": r.wilson_hi, "bound": r.bound,
                   "bound_two_sided": r.bound_two_sided, "pass": r.passed}
            if exact is not None:
                row["exact"] = exact[j]
                row["exact_in_ci"] = r.wilson_lo <= exact[j] <= r.wilson_hi
            rows.append(row)
        cases.append({**case.to_dict(), "mu": table.mu, "normalizer": table.normalizer,
                      "passed": table.passed, "rows": rows})
    results = []
    for spec in cfg.assertions:
        if spec.kind == "tails_dominated":
            bad = [f"case {i} eps={r['eps']}" for i, c in enumerate(cases)
                   for r in c["rows"] if not r["pass"]]
            detail = (f"{len(cases)} cases x {len(lab.epsilons)} eps, Wilson "
                      f"{lab.level:.0%} upper vs bound: "
                      + ("all dominated" if not bad else "exceeded at " + ", ".join(bad[:5])))
            results.append({"kind": spec.kind, "passed": not bad, "detail": detail})
        elif spec.kind == "binomial_match":
            checked = [(i, r) for i, c in enumerate(cases) for r in c["rows"] if "exact" in r]
            bad = [f"case {i} eps={r['eps']}" for i, r in checked if not r["exact_in_ci"]]
            detail = (f"{len(checked)} (case, eps) pairs with an exact binomial tail: "
                      + ("all inside the Wilson interval" if not bad
                         else "outside at " + ", ".join(bad[:5])))
            results.append({"kind": spec.kind, "passed": bool(checked) and not bad,
                            "detail": detail})
    summary = {"name": cfg.name, "trials": lab.trials, "level": lab.level, "seed": seed,
               "cases": cases, "assertions": results, "warnings": sorted(set(notes))}
    if write:
        atomic_write(out_dir / "lab.json", json.dumps(summary, indent=2) + "\n")
        atomic_write(out_dir / "assertions.json", json.dumps(results, indent=2) + "\n")
    return Bundle(out_dir, cfg, summary, results, lab=cases)


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.6g}"
    return str(x)


def _table(header, rows) -> str:
    cells = [list(map(_fmt, header))] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


def _safe(fn, *args):
    try:
        return fn(*args)
    except MixBanditError:
        return None


def bounds_report(cfg: ExperimentConfig) -> str:
    """Λ / M / 𝓜 / u_k / regret-bound tables for a config, without simulating."""
    from ..mixing_math import (BlockGeometry, divisor_weight, lambda_sum, m_sum,
                               restless_m_sum, solve_uk)
    from ..oracle import tail_bounds

    arms = cfg.build_arms()
    out = [f"# {cfg.name} ({cfg.scenario})"]
    if cfg.is_lab:
        lab = cfg.concentration
        for i, case in enumerate(lab.cases):
            prof = arms[case.arm].profile
            geo = BlockGeometry(case.m, case.b)
            out.append(f"\ncase {i}: arm {case.arm} ({prof.kind} {prof.params}), mode "
                       f"{case.mode}, m={case.m}, b={case.b}, n={case.n}")
            out.append(f"Lambda(n)={_fmt(_safe(lambda_sum, prof, geo, case.n))}  "
                       f"M(b)={_fmt(_safe(m_sum, prof, case.b))}  "
                       f"restless M(b)={_fmt(_safe(restless_m_sum, prof, case.b))}")
            rows = [(eps, *tail_bounds(case.mode, prof, case.m, case.b, case.n, eps))
                    for eps in lab.epsilons]
            out.append(_table(("eps", "bound", "two_sided"), rows))
        return "\n".join(out)

    policy = cfg.build_policy()
    oracle = policy_oracle(cfg, policy)
    T = cfg.horizon
    spec = cfg.policy
    out.append(f"policy {spec.kind}, alpha={spec.alpha}, horizon={T}")
    if oracle.notes:
        out.extend(f"warning: {n}" for n in oracle.notes)
    rows = []
    if spec.kind == "combo_ucb":
        out.append(f"s={spec.s}, divisor sum={divisor_weight(spec.s)}, "
                   f"best (arm, m, b)={oracle.best}")
        for k, arm in enumerate(arms):
            prof = arm.profile
            ms = {b: _safe(m_sum, prof, b) for _, b in policy.combos}
            rows.append((k, prof.kind, oracle.values[k], oracle.gaps[k],
                         " ".join(f"{b}:{_fmt(v)}" for b, v in sorted(ms.items()))))
        out.append(_table(("arm", "profile", "value", "gap", "M(b) by b"), rows))
    elif spec.kind == "restless_ucb":
        for k, arm in enumerate(arms):
            prof = arm.profile
            idle = sum(policy.m_k) - policy.m_k[k]
            rows.append((k, prof.kind, policy.m_k[k], oracle.values[k], oracle.gaps[k],
                         _safe(restless_m_sum, prof, 0), _safe(restless_m_sum, prof, idle)))
        out.append(_table(("arm", "profile", "m_k", "mu", "gap", "rM(0)",
                           "rM(others' m)"), rows))
    else:
        geo = policy.geometry
        for k, arm in enumerate(arms):
            prof = arm.profile
            gap = oracle.gaps[k]
            uk = _safe(solve_uk, prof, geo, gap, spec.alpha, T) if gap > 0 and T > 1 else None
            rows.append((k, prof.kind, oracle.values[k], gap, _safe(lambda_sum, prof, geo, T),
                         _safe(m_sum, prof, geo.b), _safe(restless_m_sum, prof, geo.b), uk))
        out.append(f"m={geo.m}, b={geo.b}")
        out.append(_table(("arm", "profile", "mu", "gap", "Lambda(T)", "M(b)", "rM(b)",
                           "u_k"), rows))
    pts = checkpoints(T)
    out.append("\n" + _table(("t", "regret_bound"),
                             [(t, regret_bound(cfg, policy, oracle.gaps, t)) for t in pts]))
    return "\n".join(out)
