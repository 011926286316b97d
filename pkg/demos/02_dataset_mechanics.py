"""The three data mechanisms: segment augmentation, relabeling, reshaping.

Run: python demos/02_dataset_mechanics.py
"""

import numpy as np

import gas

env = gas.make_env(gas.chainrun_spec(32), seed=0)
data = gas.generate_offline_dataset(env, gas.stitch_mix(), 200, seed=0)
rewards, costs = data.total_returns()
print(f"corpus: {data.n} trajectories, R_max={data.r_max:.1f}, C_max={data.c_max:.0f}")

# No single trajectory is optimal at intermediate budgets; compositions are.
for budget in (4, 8, 16):
    best = max(r for r, c in zip(rewards, costs) if c <= budget)
    print(f"  budget {budget:2d}: best single trajectory {best:5.2f} "
          f"vs analytic optimum {gas.chainrun_optimum(32, budget):5.2f}")

# --- segment sampling (every window length, not just suffixes) ----------------

rng = np.random.default_rng(0)
cfg = gas.AugmentConfig()          # delta=0.1, q=10%, epsilon=0.5, 10 bins
index = gas.build_reshape_index(data, cfg.q_percent, cfg.cost_bins)
batch = gas.sample_batch(data, index, cfg, 4096, rng)
lengths = batch.gamma - batch.t + 1
print(f"\nsampled segment lengths: min={lengths.min()} max={lengths.max()} "
      f"mean={lengths.mean():.1f}")
print(f"pseudo-time t' spans [{batch.t_prime.min()}, {batch.t_prime.max()}]")

# --- relabeling: jittered reward targets, stretched cost targets --------------

print(f"\nreward targets stay inside the +/-10% band: "
      f"{np.all(batch.r_hat <= 1.1 * batch.r_seg + 1e-12)}")
print(f"cost targets stretch toward C_max: mean c_seg={batch.c_seg.mean():.2f} "
      f"-> mean c_hat={batch.c_hat.mean():.2f}")

# --- reshaping: favor the best reward per cost level ---------------------------

members = index.member_traj_ids
print(f"\nreshaped subset: {len(members)} of {data.n} trajectories")
print(f"mean reward, all: {rewards.mean():.2f}  subset: {rewards[members].mean():.2f}")
frac = gas.sample_batch(data, index, cfg, 100_000, rng).from_reshape.mean()
print(f"mixture hit fraction at epsilon={cfg.epsilon}: {frac:.3f}")

# --- file round trip ------------------------------------------------------------

import tempfile
from pathlib import Path

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "corpus.gasdset"
    gas.save_dataset(data, path)
    again = gas.load_dataset(path)
    print(f"\nround trip lossless: "
          f"{np.array_equal(again.reward_prefix, data.reward_prefix)}")
