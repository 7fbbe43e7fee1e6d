"""Shared numerical helpers for the test suite.

These are deliberately independent of the package internals: convolutions are
done with fixed-order Gauss-Legendre quadrature and matrix exponentials with a
scaling-and-squaring Taylor sum, so they can serve as oracles for the exact
algebra and the graph kernels.
"""

from __future__ import annotations

import numpy as np

from heatglue.expmix import ExpMix, evaluate

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(120)


def gl_convolve_value(f: ExpMix, g: ExpMix, t: float) -> float:
    """(f*g)(t) by quadrature of the defining integral, plus atom rules.

    Only the non-atomic value at t is returned (atoms of both factors act as
    point masses at zero, so f.atom*g(t) + g.atom*f(t) appears here while
    f.atom*g.atom would sit in the atom of the product).
    """
    s = 0.5 * t * (_GL_NODES + 1.0)
    w = 0.5 * t * _GL_WEIGHTS
    fa = np.array([evaluate(f, si) for si in s]) if f.terms else np.zeros_like(s)
    gb = np.array([evaluate(g, t - si) for si in s]) if g.terms else np.zeros_like(s)
    total = float(np.dot(w, fa * gb))
    if f.atom:
        total += f.atom * (evaluate(g, t) if g.terms else 0.0)
    if g.atom:
        total += g.atom * (evaluate(f, t) if f.terms else 0.0)
    return total


def taylor_expm(a: np.ndarray, order: int = 24) -> np.ndarray:
    """exp(a) by scaling and squaring of a plain Taylor sum."""
    a = np.asarray(a, dtype=float)
    norm = np.abs(a).sum(axis=1).max() if a.size else 0.0
    squarings = 0
    while norm > 0.5:
        norm /= 2.0
        squarings += 1
    b = a / (2.0**squarings)
    acc = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, order + 1):
        term = term @ b / k
        acc = acc + term
    for _ in range(squarings):
        acc = acc @ acc
    return acc
