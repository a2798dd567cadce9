"""The Laplace-transform series, its root, and the distributions it yields.

For constant rates b = c, d = 1 the transform is c/(lambda+1), so the
growth rate is exactly c - 1; for general models the series is summed
with certified remainders and the root is bracketed by bisection.
"""

import math

from pavd import malthus, rates
from pavd.rates import DerivedSequences, assumption_report

print("=== transform values and the Malthusian root ===")
for label, model in (
    ("b=2, d=1", rates.constant_model(2.0)),
    ("b=5, d=1", rates.constant_model(5.0)),
    ("RaO", rates.rao_model()),
    ("RdY1", rates.rdy1_model()),
):
    seqs = DerivedSequences(model)
    sol = malthus.solve_malthusian(seqs, tol=1e-11)
    row = [f"{malthus.mu_hat(seqs, lam).value:7.4f}" for lam in (0.5, 1.0, 2.0)]
    print(
        f"{label:10s} mu(0.5,1,2) = {row}   lambda* = {sol.lambda_star:.6f} "
        f"(residual {sol.residual:.1e}, abscissa {sol.lambda_underline})"
    )

print("\nFor b(i)=i+1 without death the series telescopes: mu(2) = 1 exactly,")
seqs_pa = DerivedSequences(rates.RateModel(b=rates.Affine(1, 1), d=rates.Constant(0.0)))
print(f"computed: {malthus.mu_hat(seqs_pa, 2.0).value:.12f}; below the abscissa it diverges:",
      malthus.mu_hat(seqs_pa, 0.9).status)

print("\n=== offspring law for the RaO model ===")
model = rates.rao_model()
seqs = DerivedSequences(model)
dist = malthus.OffspringDistribution(seqs)
print("k, P(D>=k), P(D=k):")
for k in range(6):
    print(f"{k}: {dist.tail(k):8.5f}  {dist.pmf(k):8.5f}")
total = math.fsum(dist.pmf(k) for k in range(200)) + dist.tail(201)
print(f"telescoped mass over k<=200 plus tail: {total:.15f}")

print("\n=== limiting degree distributions, constant rates ===")
b2 = rates.constant_model(2.0)
s2 = DerivedSequences(b2)
sol2 = malthus.solve_malthusian(s2, tol=1e-12)
d2 = malthus.OffspringDistribution(s2)
pa, _ = malthus.limiting_degree_distribution(sol2, d2, "alive", k_max=6)
pb, _ = malthus.limiting_degree_distribution(sol2, d2, "born", k_max=6)
print("k   alive       born        2^-(k+1)")
for k in range(7):
    print(f"{k}   {pa[k]:.6f}   {pb[k]:.6f}   {0.5 ** (k + 1):.6f}")

print("\n=== predicted scaling constants ===")
for label, model in (("b=2,d=1", b2), ("RdY1", rates.rdy1_model())):
    seqs = DerivedSequences(model)
    sol = malthus.solve_malthusian(seqs)
    pc = malthus.predicted_constants(sol, seqs, assumption_report(model), 1e6)
    print(f"{label}: theorem={pc.theorem}, exponents={pc.exponents}")
