"""
Shifted reciprocal normal moments
=================================

E[(p + sigma W)^-j] for standard normal W, from a Dawson-function base case
and a forward recurrence, next to the truncated large-N series whose
coefficients alpha_j(k) have a closed form.
"""
import numpy as np

from gds import SRNParams, alpha_coeff, srn_moment, srn_moment_series

# the first alpha coefficients: row j = 1 holds the odd double factorials
for j in range(1, 5):
    print(f"alpha_{j}:", [alpha_coeff(j, k) for k in range(j - 1, j + 4)])

# the moment for sigma = N^-1/2 and the series truncated at K terms
print("\n     N      exact E[h]    K=1 err    K=2 err    K=3 err")
for N in (1e2, 1e3, 1e4):
    exact = srn_moment(SRNParams(1.0, N**-0.5), 1)
    errs = [abs(srn_moment_series(0, 0, 1, 0.5, 0.5, N, 1, K) - exact) for K in (1, 2, 3)]
    print(f"{N:8.0f}  {exact:.12f}  " + "  ".join(f"{e:.2e}" for e in errs))

# each extra term buys one more power of N^-2 r2 = N^-1
Ns = np.array([1e2, 1e3, 1e4])
for K in (1, 2, 3):
    errs = [abs(srn_moment_series(0, 0, 1, 0.5, 0.5, N, 1, K) - srn_moment(SRNParams(1.0, N**-0.5), 1)) for N in Ns]
    print(f"K={K}: log-log slope {np.polyfit(np.log(Ns), np.log(errs), 1)[0]:.3f}")
