"""Evaluation protocols: normalized metrics, sweeps, and ablations.

Metrics: reward_norm = R_pi / R_max (dataset maximum reward return) and
cost_norm = C_pi / L where L = threshold_fraction * C_max. A run is "safe"
at a threshold when cost_norm <= 1.1 (finite-sample tolerance above the
nominal 1.0 boundary).

All sweeps are zero-shot: one fixed checkpoint evaluated under different
(reward target, cost budget) pairs, no retraining.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import AugmentConfig, OfflineDataset
from .envs import rollout
from .errors import ConfigError, ContractError
from .goals import GoalNets
from .policy import PolicyNet, TargetTracker, act, update_tracker

SAFETY_TOLERANCE = 1.1
MONOTONE_TOLERANCE = 0.02

EVAL_COLUMNS = ("threshold_frac", "threshold_cost", "seed", "episode",
                "reward_return", "cost_return", "reward_norm", "cost_norm")


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    episodes_per_point: int = 10
    seeds: tuple = (0, 1, 2, 3, 4)
    target_reward_fraction: float = 1.05

    def __post_init__(self):
        if not all(0.0 < f <= 1.0 for f in self.thresholds):
            raise ConfigError("thresholds must be fractions in (0, 1]")
        if self.episodes_per_point < 1:
            raise ConfigError("episodes_per_point must be >= 1")


def reward_target_table(dataset, thresholds=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6,
                                             0.7, 0.8, 0.9)) -> dict:
    """Per-threshold reward targets: the best budget-feasible return from
    the initial state, read off the dataset by the brute-force oracle.

    Deployment pairs each cost budget with an ambitious-but-plausible
    reward target (the benchmark convention); a reward target far above
    what any budget-compatible data achieves leaves the conditioned nets
    extrapolating. The table is computed once at training time and shipped
    with the checkpoint, so threshold sweeps stay zero-shot.
    """
    from .envs import make_env
    from .oracle import ProbeQuery, brute_force_goal, default_state_tolerance

    env = make_env(dataset.env_meta)
    start = env.reset()
    tol = default_state_tolerance(dataset.env_meta)
    table = {}
    rewards, _ = dataset.total_returns()
    fallback = float(rewards.max())
    for frac in thresholds:
        ans = brute_force_goal(dataset, ProbeQuery(start, 0, frac * dataset.c_max, tol))
        table[_frac_key(frac)] = ans.v_r_star if ans.feasible else fallback
    return table


def _frac_key(frac: float) -> str:
    return repr(round(float(frac), 6))


def resolve_reward_target(frac: float, r_max: float, fraction: float,
                          table: "dict | None") -> float:
    if table and _frac_key(frac) in table:
        return fraction * table[_frac_key(frac)]
    return fraction * r_max


@dataclass
class EvalReport:
    rows: list                     # dict per (threshold, seed, episode)
    summary: list                  # dict per threshold with mean +/- std
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {"rows": self.rows, "summary": self.summary, "metadata": self.metadata}
        return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"

    def to_csv(self) -> str:
        lines = [",".join(EVAL_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(repr(row[c]) for c in EVAL_COLUMNS))
        return "\n".join(lines) + "\n"


def run_episode(env, pol: PolicyNet, nets: GoalNets, r_target: float,
                c_target: float, trace: "list | None" = None) -> tuple[float, float]:
    """One deterministic rollout with target bookkeeping; returns (R, C)."""
    T = env.spec.episode_length
    tracker = TargetTracker(r_target, c_target)
    state = env.reset()
    total_r = total_c = 0.0
    for t in range(T):
        action = act(pol, nets, state, tracker, T)
        next_state, r, c, _ = env.step(state, action, t)
        if trace is not None:
            v_r, v_c = nets.values(state[None, :], np.array([tracker.r_remaining]),
                                   np.array([tracker.c_remaining]),
                                   np.array([float(t)]))
            trace.append({"t": t, "state": state.tolist(), "action": action.tolist(),
                          "reward": r, "cost": c,
                          "r_remaining": tracker.r_remaining,
                          "c_remaining": tracker.c_remaining,
                          "v_r": float(v_r[0]), "v_c": float(v_c[0])})
        tracker = update_tracker(tracker, r, c)
        total_r += r
        total_c += c
        state = next_state
    return total_r, total_c


def _point_rows(env, pol, nets, frac, r_target, c_target, r_max, seeds, episodes):
    rows = []
    for seed in seeds:
        for episode in range(episodes):
            reward, cost = run_episode(env, pol, nets, r_target, c_target)
            rows.append({
                "threshold_frac": float(frac),
                "threshold_cost": float(c_target),
                "seed": int(seed),
                "episode": int(episode),
                "reward_return": reward,
                "cost_return": cost,
                "reward_norm": reward / r_max,
                "cost_norm": cost / c_target if c_target > 0 else float(cost > 0) * np.inf,
            })
    return rows


def _summarize(rows, key_fields=("threshold_frac",)):
    summary = []
    keys = sorted({tuple(row[k] for k in key_fields) for row in rows})
    for key in keys:
        group = [r for r in rows if tuple(r[k] for k in key_fields) == key]
        entry = dict(zip(key_fields, key))
        for col in ("reward_return", "cost_return", "reward_norm", "cost_norm"):
            values = np.array([g[col] for g in group])
            entry[f"{col}_mean"] = float(values.mean())
            entry[f"{col}_std"] = float(values.std(ddof=1)) if values.size > 1 else 0.0
        entry["n"] = len(group)
        summary.append(entry)
    return summary


def evaluate(pol: PolicyNet, nets: GoalNets, env, cfg: EvalConfig, r_max: float,
             c_max: float, metadata: "dict | None" = None, jobs: int = 1,
             target_table: "dict | None" = None) -> EvalReport:
    """Roll out every (threshold, seed, episode) point and aggregate.

    Reward targets come from ``target_table`` (per-threshold plausible
    targets, the deployment convention) scaled by ``target_reward_fraction``;
    without a table they fall back to a flat fraction of r_max. Aggregation
    pools the sample std over all (seed, episode) pairs per threshold; the
    pooling choice is recorded in the report metadata.
    """
    if env.spec.state_dim != pol.norm.state_mean.shape[0]:
        raise ContractError(
            f"env state_dim {env.spec.state_dim} != checkpoint "
            f"state_dim {pol.norm.state_mean.shape[0]}")
    points = [(frac,
               resolve_reward_target(frac, r_max, cfg.target_reward_fraction,
                                     target_table),
               frac * c_max)
              for frac in cfg.thresholds]
    work = [(env, pol, nets, frac, rt, ct, r_max, cfg.seeds, cfg.episodes_per_point)
            for frac, rt, ct in points]
    if jobs > 1:
        import multiprocessing as mp

        with mp.Pool(jobs) as pool:
            chunks = pool.starmap(_point_rows, work)
    else:
        chunks = [_point_rows(*args) for args in work]
    rows = [row for chunk in chunks for row in chunk]
    meta = {"r_max": r_max, "c_max": c_max,
            "target_reward_fraction": cfg.target_reward_fraction,
            "reward_targets": {repr(p[0]): p[1] for p in points},
            "episodes_per_point": cfg.episodes_per_point,
            "seeds": list(cfg.seeds),
            "pooling": "sample std over all (seed, episode) pairs per threshold"}
    if metadata:
        meta.update(metadata)
    return EvalReport(rows, _summarize(rows), meta)


def threshold_sweep(pol: PolicyNet, nets: GoalNets, env, thresholds, r_max: float,
                    c_max: float, metadata: "dict | None" = None,
                    episodes_per_point: int = 10, seeds=(0, 1, 2, 3, 4),
                    target_reward_fraction: float = 0.95, jobs: int = 1,
                    target_table: "dict | None" = None) -> EvalReport:
    """Zero-shot sweep of one checkpoint across cost thresholds."""
    cfg = EvalConfig(tuple(thresholds), episodes_per_point, tuple(seeds),
                     target_reward_fraction)
    return evaluate(pol, nets, env, cfg, r_max, c_max, metadata, jobs,
                    target_table=target_table)


def sweep_gates(report: EvalReport) -> dict:
    """Safety and monotonicity checks over a threshold sweep summary."""
    summary = sorted(report.summary, key=lambda s: s["threshold_frac"])
    costs_ok = all(s["cost_norm_mean"] <= SAFETY_TOLERANCE for s in summary)
    rewards = [s["reward_norm_mean"] for s in summary]
    monotone_ok = all(b >= a - MONOTONE_TOLERANCE for a, b in zip(rewards, rewards[1:]))
    return {"cost_within_tolerance": costs_ok,
            "reward_non_decreasing": monotone_ok,
            "passed": costs_ok and monotone_ok}


ROBUSTNESS_COLUMNS = ("model", "reward_target", "threshold_cost",
                      "reward_return", "cost_return", "reward_norm", "cost_norm")


def robustness_sweep(pol: PolicyNet, nets: GoalNets, env, threshold_frac: float,
                     reward_targets, r_max: float, c_max: float,
                     alternates: "dict | None" = None) -> list:
    """Fixed cost budget, varying reward targets, optional comparison models.

    Returns one row per (model, reward target). ``alternates`` maps a label
    to another (policy, goal nets) pair, e.g. a no-relabel checkpoint.
    """
    models = {"default": (pol, nets)}
    if alternates:
        models.update(alternates)
    c_target = threshold_frac * c_max
    rows = []
    for label in sorted(models):
        m_pol, m_nets = models[label]
        for target in reward_targets:
            reward, cost = run_episode(env, m_pol, m_nets, float(target), c_target)
            rows.append({
                "model": label,
                "reward_target": float(target),
                "threshold_cost": float(c_target),
                "reward_return": reward,
                "cost_return": cost,
                "reward_norm": reward / r_max,
                "cost_norm": cost / c_target if c_target > 0 else float("inf"),
            })
    return rows


ABLATION_KINDS = ("alpha_sweep", "no_tsra", "no_relabel", "no_reshape")
ALPHA_SWEEP_VALUES = (0.5, 0.6, 0.8, 0.9, 0.99)


def ablation_variants(kind: str, cfg: AugmentConfig, alpha: float) -> dict:
    """Per-variant (AugmentConfig, alpha) pairs for one ablation study."""
    if kind == "alpha_sweep":
        return {f"alpha_{a}": (cfg, a) for a in ALPHA_SWEEP_VALUES}
    if kind == "no_tsra":
        return {"no_tsra": (dataclasses.replace(cfg, tsra=False), alpha)}
    if kind == "no_relabel":
        return {"no_relabel": (dataclasses.replace(cfg, delta=0.0, relabel_cost=False), alpha)}
    if kind == "no_reshape":
        return {"no_reshape": (dataclasses.replace(cfg, epsilon=0.0), alpha)}
    raise ConfigError(f"unknown ablation kind {kind!r} (known: {', '.join(ABLATION_KINDS)})")


def run_ablation(kind: str, dataset: OfflineDataset, cfg: AugmentConfig, hyper,
                 alpha: float, iterations: int, root_seed: int, env,
                 eval_cfg: EvalConfig, schedule: str = "interleaved") -> dict:
    """Train each variant plus the default identically and evaluate both.

    Every variant reuses the same named seed streams, so runs differ only
    in the component under study.
    """
    from .config import seed_streams
    from .training import train_gas

    variants = dict(ablation_variants(kind, cfg, alpha))
    variants["default"] = (cfg, alpha)
    table = reward_target_table(dataset, eval_cfg.thresholds)
    out = {}
    for name in sorted(variants):
        v_cfg, v_alpha = variants[name]
        result = train_gas(dataset, v_cfg, hyper, v_alpha, iterations,
                           seed_streams(root_seed), schedule)
        report = evaluate(result.pol, result.nets, env, eval_cfg,
                          dataset.r_max, dataset.c_max,
                          metadata={"variant": name, "alpha": v_alpha,
                                    "delta": v_cfg.delta, "epsilon": v_cfg.epsilon,
                                    "q_percent": v_cfg.q_percent, "tsra": v_cfg.tsra},
                          target_table=table)
        out[name] = {"result": result, "report": report}
    return out


def write_text(path, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def rows_to_csv(columns, rows) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(row[c]) for c in columns))
    return "\n".join(lines) + "\n"
