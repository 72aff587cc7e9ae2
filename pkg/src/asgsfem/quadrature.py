"""Symmetric quadrature rules on the reference triangle.

Points are barycentric triples, weights sum to the reference area 1/2, so
that an element integral is ``sum(w * f(x_q)) * |det J|``.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 3) barycentric
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def npoints(self):
        return len(self.weights)


def _orbit3(a):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)]


def _orbit6(a, b):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _rule(groups, degree):
    pts, wts = [], []
    for weight, orbit in groups:
        pts.extend(orbit)
        wts.extend([weight] * len(orbit))
    return QuadratureRule(np.array(pts), 0.5 * np.array(wts), degree)


# Dunavant (1985) rules; weights normalised to one before the 1/2 factor.
_RULES = {
    1: _rule([(1.0, [(1 / 3, 1 / 3, 1 / 3)])], 1),
    2: _rule([(1 / 3, _orbit3(1 / 6))], 2),
    4: _rule(
        [
            (0.223381589678011, _orbit3(0.445948490915965)),
            (0.109951743655322, _orbit3(0.091576213509771)),
        ],
        4,
    ),
    5: _rule(
        [
            (0.225, [(1 / 3, 1 / 3, 1 / 3)]),
            (0.132394152788506, _orbit3(0.470142064105115)),
            (0.125939180544827, _orbit3(0.101286507323456)),
        ],
        5,
    ),
    6: _rule(
        [
            (0.116786275726379, _orbit3(0.249286745170910)),
            (0.050844906370207, _orbit3(0.063089014491502)),
            (0.082851075618374, _orbit6(0.053145049844817, 0.310352451033784)),
        ],
        6,
    ),
}
_RULES[3] = _RULES[4]


def triangle_rule(degree=4):
    """Return the lowest-order tabulated rule exact for ``degree``."""
    for d in sorted(_RULES):
        if d >= degree:
            return _RULES[d]
    raise ValueError(f"no triangle rule of degree {degree} (max {max(_RULES)})")


def gauss_line(npoints=3):
    """Gauss-Legendre rule mapped to [0, 1]: (points, weights)."""
    x, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (x + 1.0), 0.5 * w
