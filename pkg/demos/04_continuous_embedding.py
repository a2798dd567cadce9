"""The continuous-time embedding and its stopping times.

The discrete chain viewed at the n-th event of the branching process has
the same law as n steps of the chain; this script checks the match on
small trees, then follows tau_n - log(n)/lambda* and the normalised
population along one long run.
"""

import math

import numpy as np

from pavd import analysis, rates, sim_cmj
from pavd.rates import DerivedSequences

model = rates.constant_model(2.0)
seqs = DerivedSequences(model)

print("=== outcome-sequence law at the 3rd event vs exact enumeration ===")
law = analysis.enumerate_small_chain(model, 3)
counts = {}
runs = 50_000
for s in range(runs):
    bp = sim_cmj.BPState(model, seqs=seqs, record_events=True)
    bp.run_until_events(3, np.random.default_rng(np.random.SeedSequence((3, s))))
    key = tuple(bp.events)
    counts[key] = counts.get(key, 0) + 1
emp = {k: v / runs for k, v in counts.items()}
tv = analysis.tv_distance(law.probs, emp)
print(f"TV distance over {len(law.probs)} outcomes at {runs} runs: {tv:.4f}")

print("\n=== one long trajectory: stopping times and population ===")
bp = sim_cmj.BPState(model, seqs=seqs)
rng = np.random.default_rng(11)
for n in (100, 1_000, 10_000, 100_000):
    bp.run_until_events(n, rng)
    if bp.alive_count == 0:
        print(f"n={n}: extinct")
        break
    obs = bp.continuous_observables(lambda_star=1.0)
    centred = bp.taus[n - 1] - math.log(n)
    print(
        f"n={n:>7,}  tau_n={bp.taus[n-1]:8.3f}  tau_n - log n = {centred:+.3f}  "
        f"alive={obs.alive_count:>6,}  W_hat={obs.w_hat:.3f}"
    )
print("(tau_n - log(n)/lambda* settles to a random constant; W_hat stabilises)")

print("\n=== lifetimes straight from the chain construction ===")
rng = np.random.default_rng(5)
for label, m in (("d=1 constant", rates.constant_model(2.0)),
                 ("RdY1", rates.rdy1_model())):
    L = sim_cmj.sample_lifetimes(m, 200_000, rng)
    print(f"{label:14s} mean L={L.mean():.4f}  P(L>4)={np.mean(L > 4):.5f}")
print("For d constant the lifetime is exactly exponential with rate 1.")
