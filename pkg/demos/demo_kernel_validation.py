"""Probe kernels for membership in the admissible class.

The validator gathers numerical evidence for each condition (Volterra
property, vanishing at t = 0, continuity, non-null support, the derivative
envelope |df/dt| <= C0 |s|^-beta |t-s|^-gamma with far-past decay theta, and
integrability of |df/ds|^(1+eta)(|s|^q v 1)), fitting the constants by
log-log regression.  For the fractional kernel the fitted exponents land on
the closed-form values gamma = theta = 1 - d with beta at the 0 boundary.
"""

import numpy as np

from levyvolterra.kernels import (KernelHandle, frac_kernel, indicator_kernel,
                                  validate_class_K)

print("=== fractional kernels: fitted exponents vs closed form ===")
for d in (0.1, 0.25, 0.4):
    rep = validate_class_K(frac_kernel(d))
    print(f"d = {d}: accepted={rep.accepted}  gamma={rep.gamma:.4f} "
          f"(want {1-d}), theta={rep.theta:.4f} (want {1-d}), beta={rep.beta:.4f}")

print("\n=== indicator kernel: trivial envelope ===")
rep = validate_class_K(indicator_kernel())
print(rep.to_text())


def crafted_violator():
    """Not a Volterra kernel: f(t,s) = 1 on [0, t+1], nonzero for s in (t, t+1]."""
    def f(t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        return np.where((s >= 0.0) & (s <= t + 1.0), 1.0, 0.0)
    zero = lambda t, s: np.zeros(np.broadcast(np.asarray(t), np.asarray(s)).shape)
    return KernelHandle(eval=f, eval_dt=zero, eval_ds=zero, tau=0.0,
                        label="shifted-indicator", dt_zero=True)


print("\n=== a crafted violator is rejected with the offending condition ===")
rep = validate_class_K(crafted_violator())
print(rep.to_text())
