"""Quadrature rules on the reference triangle and the unit interval."""
from __future__ import annotations

import numpy as np

# Dunavant 6-point rule, exact for polynomials of degree <= 4.
# Barycentric points, weights normalised to sum to one.
_A1, _B1 = 0.445948490915965, 0.108103018168070
_A2, _B2 = 0.091576213509771, 0.816847572980459
_W1, _W2 = 0.223381589678011, 0.109951743655322

TRI_BARY = np.array([
    [_A1, _A1, _B1],
    [_A1, _B1, _A1],
    [_B1, _A1, _A1],
    [_A2, _A2, _B2],
    [_A2, _B2, _A2],
    [_B2, _A2, _A2],
])
TRI_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])
# reference coordinates (xi, eta) = (lambda_1, lambda_2)
TRI_POINTS = TRI_BARY[:, 1:]

# 3-point Gauss-Legendre on [0, 1], exact to degree 5
EDGE_POINTS = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


def gauss_interval(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w
