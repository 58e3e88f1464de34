"""Tabulate the amplifier for a few marginals next to its cubic surrogate.

The sign of the cubic coefficient follows the sign of 3 m2 - m4, i.e. of
minus the excess kurtosis: super-linear amplifiers go with localization.
"""
import numpy as np

from rfloc.flow import MarginalSpec, phi, phi_taylor3
from rfloc.stimulus import kur_excess_kurtosis

MARGINALS = {
    "two-point": MarginalSpec.two_point(),
    "gaussian": MarginalSpec.gaussian(),
    "alg_sigmoid(30)": MarginalSpec.alg_sigmoid(30.0),
    "alg_sigmoid(10)": MarginalSpec.alg_sigmoid(10.0),
    "alg_sigmoid(5)": MarginalSpec.alg_sigmoid(5.0),
}

if __name__ == "__main__":
    a = np.array([0.2, 0.5, 0.8, 0.95])
    print(f"{'marginal':16s} {'c1':>7s} {'c3':>8s}  phi(a)/(c1 a) at a = {a}")
    for name, m in MARGINALS.items():
        c1, c3 = phi_taylor3(m)
        ratio = phi(m, a) / (c1 * a)
        print(f"{name:16s} {c1:7.4f} {c3:+8.4f}  {np.round(ratio, 3)}")
    for k in (5.8, 5.9):
        print(f"Kur({k}) excess kurtosis {kur_excess_kurtosis(k):+.4f}")
