"""
The pointwise error expansion
=============================

Break the predicted subsample-density error at a tuple z into its groups
(constant, N^-r1, N^-2r1, N^-2r2, 1/N) for a few estimator models.
"""
from gds import CatalogFunction, DensitySpec, ExpansionInputs, PerturbationSpec, theorem_ratio

uniform, beta = DensitySpec("uniform"), DensitySpec("beta", (2, 2))
cos_bias = CatalogFunction("sinusoidal", {"amplitude": 0.9, "phase": 1.5707963267948966}.items())

cases = {
    "exact density, uniform data -> beta target": (uniform, beta, PerturbationSpec()),
    "vanishing cosine bias, f = g = uniform": (uniform, uniform, PerturbationSpec(a1=cos_bias, r1=0.45)),
    "persistent bias tau(x) = 0.2 sin": (
        uniform,
        uniform,
        PerturbationSpec(tau=CatalogFunction("sinusoidal", {"amplitude": 0.2}.items())),
    ),
}
z = [0.125, 0.3]
for name, (f, g, spec) in cases.items():
    bd = theorem_ratio(ExpansionInputs(f, g, spec, 2, z))
    print(f"\n{name}  (rate: {bd.rate_exponent})")
    for group, value in bd.groups.items():
        print(f"  {group:7s} {value:+.6f}")
    print("  total at N = 1e3, 1e5:", [f"{bd.total(N):+.5f}" for N in (1e3, 1e5)])
