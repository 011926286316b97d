"""Goal-guided deterministic policy and the test-time target bookkeeping.

The policy maps (state, reward target, cost target, goal values, t'/T) to a
tanh-squashed action and is trained by constrained advantage-weighted
regression: squared action error weighted by
``1(V^C < c_hat) * |alpha - 1(A_R < 0)|``, with the goal nets frozen.

At test time a tracker carries the remaining targets: after each step the
observed reward and cost are subtracted and the remainders clamp at zero so
the policy's inputs stay inside the trained range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import AugmentConfig, OfflineDataset, ReshapeIndex, TransitionBatch, sample_batch
from .errors import ContractError, NonFiniteError, SchemaError
from .goals import GoalNets, InputNorm, goal_inputs, read_bundle, write_bundle, _diagnose
from .nn import Mlp, OptimState, expectile_weight


def policy_layer_sizes(state_dim: int, action_dim: int, n_layers: int,
                       hidden: int, embedding: int) -> list:
    if n_layers < 2:
        raise ContractError(f"need at least 2 weight layers, got {n_layers}")
    return [state_dim + 5, embedding] + [hidden] * (n_layers - 2) + [action_dim]


def policy_inputs(norm: InputNorm, states, r_hat, c_hat, v_r, v_c, t_prime) -> np.ndarray:
    """[normalized state, r_hat/rs, c_hat/cs, V^R/rs, V^C/cs, t'/T]."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    cols = [np.asarray(v, dtype=np.float64).reshape(-1)
            for v in (r_hat, c_hat, v_r, v_c, t_prime)]
    return np.column_stack([
        norm.normalize_states(states),
        cols[0] / norm.r_scale,
        cols[1] / norm.c_scale,
        cols[2] / norm.r_scale,
        cols[3] / norm.c_scale,
        cols[4] / norm.horizon,
    ])


@dataclass
class PolicyNet:
    net: Mlp
    norm: InputNorm
    action_dim: int

    @classmethod
    def create(cls, norm: InputNorm, state_dim: int, action_dim: int, n_layers: int,
               hidden: int, embedding: int, rng: np.random.Generator) -> "PolicyNet":
        sizes = policy_layer_sizes(state_dim, action_dim, n_layers, hidden, embedding)
        net = Mlp.init(sizes, rng)
        # zero output layer: the policy starts at the neutral action, and
        # regions the constrained regression never weights stay near it
        net.weights[-1][...] = 0.0
        return cls(net, norm, action_dim)

    def forward(self, states, r_hat, c_hat, v_r, v_c, t_prime) -> np.ndarray:
        z = policy_inputs(self.norm, states, r_hat, c_hat, v_r, v_c, t_prime)
        return np.tanh(self.net.forward(z))

    def copy(self) -> "PolicyNet":
        return PolicyNet(self.net.copy(), self.norm, self.action_dim)


def policy_loss(batch: TransitionBatch, nets: GoalNets, pol: PolicyNet, alpha: float,
                adv=None):
    """Constrained AWR loss and gradients (into the policy net only).

    ``adv`` may carry precomputed (a_r, feasible, v_r, v_c) from the same
    batch and iterate; otherwise they are recomputed with the frozen goal
    nets. Returns (l_pi, grads, weights).
    """
    if len(batch) == 0:
        raise ContractError("policy loss needs a non-empty batch")
    if adv is None:
        from .goals import compute_advantages

        adv = compute_advantages(batch, nets)
    w = adv.feasible * expectile_weight(adv.a_r, alpha)
    z = policy_inputs(pol.norm, batch.states, batch.r_hat, batch.c_hat,
                      adv.v_r, adv.v_c, batch.t_prime)
    raw, cache = pol.net.forward_cached(z)
    actions = np.tanh(raw)
    err = actions - batch.actions
    n = float(len(batch))
    l_pi = float(np.mean(w * np.sum(err * err, axis=1)))
    upstream = (2.0 / n) * w[:, None] * err * (1.0 - actions * actions)
    grads = pol.net.backward(cache, upstream)
    return l_pi, grads, w


@dataclass(frozen=True)
class TargetTracker:
    """Remaining (reward, cost) targets during an episode."""

    r_remaining: float
    c_remaining: float
    t: int = 0


def update_tracker(tracker: TargetTracker, reward: float, cost: float) -> TargetTracker:
    """Subtract the observed step and clamp both remainders at zero."""
    return TargetTracker(
        r_remaining=max(tracker.r_remaining - reward, 0.0),
        c_remaining=max(tracker.c_remaining - cost, 0.0),
        t=tracker.t + 1,
    )


def act(pol: PolicyNet, nets: GoalNets, state, tracker: TargetTracker, T: int) -> np.ndarray:
    """Deterministic action from the current state and remaining targets."""
    if tracker.t >= T:
        raise ContractError(f"act called at t={tracker.t} >= T={T}")
    state = np.asarray(state, dtype=np.float64)
    r = np.array([tracker.r_remaining])
    c = np.array([tracker.c_remaining])
    tp = np.array([tracker.t], dtype=np.float64)
    v_r, v_c = nets.values(state[None, :], r, c, tp)
    return pol.forward(state[None, :], r, c, v_r, v_c, tp)[0]


def train_policy(dataset: OfflineDataset, reshape: "ReshapeIndex | None",
                 cfg: AugmentConfig, nets: GoalNets, pol: PolicyNet,
                 optim: OptimState, iterations: int, alpha: float, batch_size: int,
                 rng_batch: np.random.Generator, rng_relabel: np.random.Generator,
                 log_every: int = 100) -> list:
    """Policy-only loop against frozen goal nets; returns [(iter, l_pi)] rows."""
    history = []
    for it in range(1, iterations + 1):
        batch = sample_batch(dataset, reshape, cfg, batch_size, rng_batch, rng_relabel)
        l_pi, grads, _ = policy_loss(batch, nets, pol, alpha)
        if not np.isfinite(l_pi):
            raise NonFiniteError(_diagnose(it, batch, l_pi=l_pi))
        optim.apply(pol.net, *grads)
        if it % log_every == 0:
            history.append((it, l_pi))
    return history


def save_policy(path, pol: PolicyNet, meta: dict) -> None:
    meta = dict(meta)
    meta["action_dim"] = pol.action_dim
    write_bundle(path, {"policy": pol.net}, pol.norm, meta)


def load_policy(path) -> tuple[PolicyNet, dict]:
    tagged, norm, meta = read_bundle(path)
    if set(tagged) != {"policy"}:
        raise SchemaError(f"policy bundle must contain exactly one policy net, got {sorted(tagged)}")
    return PolicyNet(tagged["policy"], norm, int(meta["action_dim"])), meta
