"""Bessel functions, Gauss-Hermite rules and Gaussian-weighted pole integrals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import wofz

from .errors import DomainError, ParameterError

SQRT_PI = math.sqrt(math.pi)

_RESCALE_AT = 1e250
_SERIES_BELOW = 1e-6


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for integrals of the form  int exp(-x^2) f(x) dx."""

    nodes: tuple[float, ...]
    weights: tuple[float, ...]
    order: int

    def __post_init__(self):
        if len(self.nodes) != self.order or len(self.weights) != self.order:
            raise ParameterError("nodes and weights must both have length `order`")

    def integrate(self, f) -> complex:
        x = np.asarray(self.nodes)
        return np.sum(np.asarray(self.weights) * f(x))


def _series_orders(nmax: int, x: float) -> np.ndarray:
    # two-term power series, exact to double precision for |x| < 1e-6
    out = np.zeros(nmax + 1)
    half = 0.5 * x
    term = 1.0
    for n in range(nmax + 1):
        if n > 0:
            term *= half / n
            if term == 0.0:
                break
        out[n] = term * (1.0 - half * half / (n + 1))
    return out


def bessel_j_orders(nmax: int, x: float) -> np.ndarray:
    """Return ``[J_0(x), ..., J_nmax(x)]`` by downward Miller recurrence.

    The recurrence starts well above ``max(nmax, |x|)`` and is normalised with
    ``J_0 + 2 * sum_k J_2k = 1``. Absolute error is below 1e-12 for |x| <= 50.
    """
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"Bessel argument must be finite, got {x!r}")
    if nmax < 0:
        raise ParameterError("nmax must be non-negative")
    ax = abs(x)
    if ax < _SERIES_BELOW:
        out = _series_orders(nmax, ax)
    else:
        top = max(nmax, ax)
        start = int(top + 30 + math.sqrt(40.0 * top))
        start += start % 2
        vals = np.zeros(start + 2)
        vals[start] = 1.0
        two_over_x = 2.0 / ax
        for k in range(start, 0, -1):
            vals[k - 1] = k * two_over_x * vals[k] - vals[k + 1]
            if abs(vals[k - 1]) > _RESCALE_AT:
                vals[k - 1 :] /= _RESCALE_AT
        norm = vals[0] + 2.0 * math.fsum(vals[2 : start + 1 : 2])
        out = vals[: nmax + 1] / norm
    if x < 0:
        out = out.copy()
        out[1::2] *= -1.0
    return out


def bessel_j(order: int, x: float) -> float:
    """First-kind Bessel function of integer order."""
    order = int(order)
    n = abs(order)
    val = float(bessel_j_orders(n, x)[n])
    if order < 0 and n % 2:
        val = -val
    return val


def bessel_j_range(nlo: int, nhi: int, x: float) -> np.ndarray:
    """``J_n(x)`` for every integer n in ``[nlo, nhi]``; negative orders by reflection."""
    top = max(abs(nlo), abs(nhi))
    pos = bessel_j_orders(top, x)
    n = np.arange(nlo, nhi + 1)
    out = pos[np.abs(n)]
    return np.where((n < 0) & (n % 2 == 1), -out, out)


def _hermite_eval(z: float, n: int) -> tuple[float, float]:
    """Orthonormal Hermite polynomial h_n(z) and h_{n-1}(z) by recurrence."""
    p1, p2 = math.pi**-0.25, 0.0
    for j in range(1, n + 1):
        p3 = p2
        p2 = p1
        p1 = z * math.sqrt(2.0 / j) * p2 - math.sqrt((j - 1) / j) * p3
    return p1, p2


@lru_cache(maxsize=64)
def gauss_hermite(order: int) -> QuadratureRule:
    """Gauss-Hermite rule for weight exp(-x^2), exact up to degree 2*order-1.

    Starting nodes are eigenvalues of the symmetric Jacobi matrix; each is then
    polished by Newton iteration on the orthonormal Hermite recurrence, which
    also yields the weights ``2 / (sqrt(2n) h_{n-1}(x))^2``.
    """
    order = int(order)
    if not 2 <= order <= 256:
        raise ParameterError(f"Gauss-Hermite order must be in [2, 256], got {order}")
    n = order
    off = np.sqrt(np.arange(1, n) / 2.0)
    guesses = np.linalg.eigvalsh(np.diag(off, 1) + np.diag(off, -1))
    m = (n + 1) // 2
    x = np.zeros(n)
    w = np.zeros(n)
    for i in range(m):
        z = float(-guesses[i])
        for _ in range(20):
            p1, p2 = _hermite_eval(z, n)
            pp = math.sqrt(2.0 * n) * p2
            dz = p1 / pp
            z -= dz
            if abs(dz) <= 1e-15 * max(1.0, abs(z)):
                break
        p1, p2 = _hermite_eval(z, n)
        pp = math.sqrt(2.0 * n) * p2
        x[i], x[n - 1 - i] = z, -z
        w[i] = w[n - 1 - i] = 2.0 / (pp * pp)
    if n % 2:
        x[m - 1] = 0.0
    idx = np.argsort(x)
    return QuadratureRule(tuple(x[idx].tolist()), tuple(w[idx].tolist()), n)


def gaussian_pole_integral(z) -> np.ndarray:
    """``int exp(-x^2) / (x - z) dx`` over the real line for non-real ``z``.

    Uses the Faddeeva function: ``i*pi*w(z)`` in the upper half plane and the
    conjugate reflection below it.
    """
    z = np.asarray(z, dtype=complex)
    upper = z.imag > 0
    zz = np.where(upper, z, np.conj(z))
    val = 1j * np.pi * wofz(zz)
    return np.where(upper, val, np.conj(val))


def gaussian_double_pole_integral(z) -> np.ndarray:
    """``int exp(-x^2) / (x - z)^2 dx``, the z-derivative of the simple-pole integral."""
    z = np.asarray(z, dtype=complex)
    upper = z.imag > 0
    zz = np.where(upper, z, np.conj(z))
    val = 1j * np.pi * (-2.0 * zz * wofz(zz) + 2j / SQRT_PI)
    return np.where(upper, val, np.conj(val))
