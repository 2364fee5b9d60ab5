"""Generalized Vandermonde determinants and Schur polynomials.

Conventions: for strictly increasing exponents i_1 < ... < i_k,

    V_{i_1..i_k}(x) = det[x_h ** i_p]_{p, h}

and the classical Vandermonde is V_{0..k-1}(x) = prod_{p<q} (x_q - x_p). The
generalized determinant factorizes as V_{0..k-1} * s_lam with partition
lam = (i_k - k + 1, ..., i_2 - 1, i_1). The Schur polynomial is evaluated
independently of the determinant through the Jacobi-Trudi identity
s_lam = det[h_{lam_p - p + q}] with complete homogeneous polynomials h_m.
"""

from __future__ import annotations

import itertools

import numpy as np


def _check_indices(indices) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if np.any(idx < 0):
        raise ValueError("exponents must be non-negative")
    if np.any(np.diff(idx) <= 0):
        raise ValueError(f"exponents must be strictly increasing, got {idx.tolist()}")
    return idx


def generalized_vandermonde(indices, x) -> complex:
    """det[x_h ** i_p] for a single point set ``x`` of length k."""
    idx = _check_indices(indices)
    x = np.asarray(x, dtype=complex).reshape(-1)
    if len(idx) != len(x):
        raise ValueError("need as many exponents as variables")
    if len(x) == 0:
        return 1.0 + 0j
    return complex(np.linalg.det(x[None, :] ** idx[:, None]))


def vandermonde(x) -> np.ndarray:
    """prod_{p<q} (x_q - x_p), batched over leading axes."""
    x = np.asarray(x, dtype=complex)
    k = x.shape[-1]
    out = np.ones(x.shape[:-1], dtype=complex)
    for p, q in itertools.combinations(range(k), 2):
        out = out * (x[..., q] - x[..., p])
    return out


def schur_partition(indices) -> tuple[int, ...]:
    """lam(i_1..i_k) = (i_k - k + 1, ..., i_2 - 1, i_1)."""
    idx = _check_indices(indices)
    k = len(idx)
    return tuple(int(idx[k - 1 - p] - (k - 1 - p)) for p in range(k))


def complete_homogeneous(m_max: int, x) -> np.ndarray:
    """h_0..h_{m_max} of the variables in the last axis of ``x``; shape (..., m_max+1)."""
    x = np.asarray(x, dtype=complex)
    h = np.zeros(x.shape[:-1] + (m_max + 1,), dtype=complex)
    h[..., 0] = 1.0
    for j in range(x.shape[-1]):
        xj = x[..., j]
        for m in range(1, m_max + 1):
            h[..., m] = h[..., m] + xj * h[..., m - 1]
    return h


def schur_polynomial(partition, x) -> np.ndarray:
    """s_lam(x) via Jacobi-Trudi, batched over leading axes of ``x``."""
    lam = [int(p) for p in partition if p > 0]
    x = np.asarray(x, dtype=complex)
    if not lam:
        return np.ones(x.shape[:-1], dtype=complex)
    if any(a < b for a, b in zip(lam, lam[1:])):
        raise ValueError(f"partition must be non-increasing, got {partition}")
    ell = len(lam)
    top = lam[0] + ell
    h = complete_homogeneous(top, x)
    M = np.zeros(x.shape[:-1] + (ell, ell), dtype=complex)
    for p in range(ell):
        for q in range(ell):
            m = lam[p] - p + q
            if 0 <= m <= top:
                M[..., p, q] = h[..., m]
    return np.linalg.det(M)


def vandermonde_schur_det(indices, x) -> tuple[complex, complex]:
    """Generalized Vandermonde computed directly and as V_{0..k-1} * s_lam.

    Returns the pair ``(direct, factored)``; the two agree up to roundoff.
    """
    direct = generalized_vandermonde(indices, x)
    factored = complex(vandermonde(np.asarray(x, dtype=complex)) * schur_polynomial(schur_partition(indices), x))
    return direct, factored


def schur_monomial_count(partition, k: int) -> int:
    """Number of semistandard tableaux of shape ``partition`` with entries <= k.

    Equals s_lam(1, ..., 1); used as an independent check of the Jacobi-Trudi code.
    """
    lam = [int(p) for p in partition if p > 0]
    num = 1
    den = 1
    for i in range(len(lam)):
        for j in range(lam[i]):
            num *= k + j - i
            conj = sum(1 for r in lam if r > j)
            den *= (lam[i] - j) + (conj - i) - 1
    return num // den if den else 0


# -- closed forms for the built-in kernels ---------------------------------


def bergman_detj_closed_form(R: float, N: int, pts) -> np.ndarray:
    """det J[D] of the Bergman kernel as |V|^2 sum_I c_I |s_lam(I)|^2.

    ``pts`` has shape (..., k, 2); the points are read as complex numbers.
    """
    pts = np.asarray(pts, dtype=float)
    z = pts[..., 0] + 1j * pts[..., 1]
    k = z.shape[-1]
    if k > N:
        return np.zeros(z.shape[:-1])
    if k == 0:
        return np.ones(z.shape[:-1])
    total = np.zeros(z.shape[:-1])
    for I in itertools.combinations(range(1, N + 1), k):
        c = np.prod([(1 + i) / (np.pi * (1 - R ** (2 * (i + 1)))) for i in I])
        total = total + c * np.abs(schur_polynomial(schur_partition(I), z)) ** 2
    return np.abs(vandermonde(z)) ** 2 * total


def dyson_det_closed_form(N: int, theta) -> np.ndarray:
    """det[K(t_i, t_j)] = 2^(N(N-1)) / N^N prod_{i<j} sin^2(pi (t_j - t_i) / N)."""
    t = np.asarray(theta, dtype=float)
    n = t.shape[-1]
    prod = np.ones(t.shape[:-1])
    for i, j in itertools.combinations(range(n), 2):
        prod = prod * np.sin(np.pi * (t[..., j] - t[..., i]) / N) ** 2
    return 2.0 ** (N * (N - 1)) / float(N) ** N * prod


def dyson_det_exponential_form(N: int, theta) -> np.ndarray:
    """Same determinant as (1/N^N) prod_{i<j} |e^(2 i pi t_j/N) - e^(2 i pi t_i/N)|^2."""
    t = np.asarray(theta, dtype=float)
    w = np.exp(2j * np.pi * t / N)
    return np.abs(vandermonde(w)) ** 2 / float(N) ** N


def elementary_symmetric(values, k: int) -> float:
    """e_k of a list of numbers."""
    e = np.zeros(k + 1)
    e[0] = 1.0
    for v in values:
        e[1:] = e[1:] + v * e[:-1]
    return float(e[k])


__all__ = [
    "bergman_detj_closed_form",
    "complete_homogeneous",
    "dyson_det_closed_form",
    "dyson_det_exponential_form",
    "elementary_symmetric",
    "generalized_vandermonde",
    "schur_monomial_count",
    "schur_partition",
    "schur_polynomial",
    "vandermonde",
    "vandermonde_schur_det",
]
