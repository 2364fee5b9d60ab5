"""Finite-rank spectral kernels and the determinantal quantities built on them.

A kernel is stored through its spectral data

    K(x, y) = sum_j lam_j phi_j(x) conj(phi_j(y)),

with eigenfunctions orthonormal in L^2(D, rho dx). The interaction kernel
J has eigen-coefficients lam_j / (1 - lam_j). Every quantity below is
evaluated from the matrix ``Phi W Phi^H`` where ``Phi[p, j] = phi_j(x_p)``
and ``W`` holds the relevant spectral weights, so kernel, interaction and
Janossy computations share one code path.

Functions whose names start with ``batch_`` take stacked configurations of
shape (B, n, d) and skip domain checks; they are what the Monte Carlo code
calls.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .basis import Basis, BergmanBasis, FourierBasis
from .domain import DomainDescriptor

PROJECTION_TOL = 1e-14


class UnsupportedOperatorError(ValueError):
    """The interaction operator J does not exist for projection kernels."""


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PointConfiguration:
    """A finite point set in R^d, stored as an (n, d) array.

    The order of the rows carries no meaning.
    """

    points: np.ndarray
    dimension: int = field(default=0)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        d = self.dimension or (pts.shape[-1] if pts.ndim == 2 and pts.shape[-1] else 1)
        pts = pts.reshape(-1, d)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "dimension", d)

    @classmethod
    def empty(cls, d: int) -> "PointConfiguration":
        return cls(np.zeros((0, d)), d)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)

    def permuted(self, perm) -> "PointConfiguration":
        return PointConfiguration(self.points[np.asarray(perm)], self.dimension)

    def __eq__(self, other):
        return (
            isinstance(other, PointConfiguration)
            and self.dimension == other.dimension
            and np.array_equal(self.points, other.points)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SpectralKernel:
    """Finite-rank Hermitian kernel with spectrum in [0, 1].

    Either every eigenvalue equals 1 (a projection kernel) or all are
    strictly below 1; mixed spectra are rejected because neither the
    interaction operator nor the projection shortcut applies to them.
    """

    domain: DomainDescriptor
    eigenvalues: np.ndarray
    basis: Basis
    spec: dict | None = None

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).reshape(-1)
        if lam.shape[0] != self.basis.size:
            raise ValueError(
                f"{lam.shape[0]} eigenvalues but {self.basis.size} eigenfunctions"
            )
        if np.any(lam < 0) or np.any(lam > 1):
            raise ValueError("eigenvalues must lie in [0, 1]")
        ones = np.abs(lam - 1.0) <= PROJECTION_TOL
        if np.any(ones) and not np.all(ones):
            raise ValueError("mixed spectra (some but not all eigenvalues equal to 1) are not supported")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def density(self):
        return self.basis.density

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.eigenvalues > 0))

    @property
    def is_projection(self) -> bool:
        return self.size > 0 and bool(np.all(np.abs(self.eigenvalues - 1.0) <= PROJECTION_TOL))

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def j_weights(self) -> np.ndarray:
        if self.is_projection:
            raise UnsupportedOperatorError("J[D] is undefined for a projection kernel")
        lam = self.eigenvalues
        return lam / (1.0 - lam)

    @property
    def interaction_weights(self) -> np.ndarray:
        """Weights of the matrix whose log-determinant is minus the potential.

        ``lam / (1 - lam)`` (the interaction kernel) in general; the kernel's
        own eigenvalues for projection kernels.
        """
        return self.eigenvalues.copy() if self.is_projection else self.j_weights

    @property
    def kernel_id(self) -> str:
        payload = json.dumps(self.spec, sort_keys=True) if self.spec else repr(
            (self.domain.to_dict(), self.eigenvalues.tolist(), type(self.basis).__name__)
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def phi(self, x) -> np.ndarray:
        """Eigenfunction values (..., N); periodic axes are wrapped first."""
        return self.basis.values(self.domain.wrap(x))

    def phi_grad(self, x) -> np.ndarray:
        return self.basis.gradients(self.domain.wrap(x))


def as_points(k: SpectralKernel, cfg, check: bool = True) -> np.ndarray:
    if isinstance(cfg, PointConfiguration):
        pts = cfg.points
    else:
        pts = np.asarray(cfg, dtype=float).reshape(-1, k.dimension)
    if pts.shape[-1] != k.dimension:
        raise ValueError(f"points have dimension {pts.shape[-1]}, kernel has {k.dimension}")
    if check:
        k.domain.check(pts)
    return pts


# -- pointwise kernels ------------------------------------------------------


def _pair_eval(k: SpectralKernel, weights, x, y) -> complex:
    x = as_points(k, [x])
    y = as_points(k, [y])
    return complex(np.sum(weights * k.phi(x)[0] * np.conj(k.phi(y)[0])))


def kernel_eval(k: SpectralKernel, x, y) -> complex:
    """K(x, y)."""
    return _pair_eval(k, k.eigenvalues, x, y)


def j_kernel_eval(k: SpectralKernel, x, y) -> complex:
    """J[D](x, y); raises UnsupportedOperatorError for projection kernels."""
    return _pair_eval(k, k.j_weights, x, y)


def weighted_matrix(k: SpectralKernel, pts: np.ndarray, weights) -> np.ndarray:
    """Matrix [sum_j w_j phi_j(x_p) conj(phi_j(x_q))], batched over leading axes."""
    Phi = k.phi(pts)
    return np.einsum("...pj,j,...qj->...pq", Phi, np.asarray(weights), Phi.conj())


def kernel_matrix(k: SpectralKernel, pts) -> np.ndarray:
    return weighted_matrix(k, np.asarray(pts, dtype=float), k.eigenvalues)


def j_matrix(k: SpectralKernel, pts) -> np.ndarray:
    return weighted_matrix(k, np.asarray(pts, dtype=float), k.j_weights)


# -- determinants -----------------------------------------------------------


def hermitian_slogdet(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real determinant of Hermitian PSD matrices via LU, as (det, log|det|).

    Batched over leading axes. The imaginary residue of the LU determinant
    must stay below 1e-8 of its modulus (plus a roundoff allowance relative
    to the Hadamard bound prod_i M_ii). Determinants below roundoff level,
    n * 64 * eps times the Hadamard bound, are exact zeros with log -inf.
    """
    M = np.asarray(M)
    n = M.shape[-1]
    lead = M.shape[:-2]
    if n == 0:
        return np.ones(lead), np.zeros(lead)
    sign, logabs = np.linalg.slogdet(M)
    diag = np.abs(np.einsum("...ii->...i", M))
    hadamard = np.sum(np.log(np.maximum(diag, 1e-300)), axis=-1)
    rel = np.exp(np.minimum(logabs - hadamard, 0.0))
    singular = (sign == 0) | (rel < n * 64 * np.finfo(float).eps)
    bad_phase = np.abs(np.imag(sign)) * rel > 1e-8 * rel + 1e-10
    if np.any(bad_phase & ~singular):
        raise NumericalError("determinant of a Hermitian matrix has a non-negligible imaginary part")
    re = np.real(sign)
    det = np.where(singular, 0.0, re * np.exp(logabs))
    log = np.where(singular | (re <= 0), -np.inf, logabs)
    return det, log


def gram_slogdet(k: SpectralKernel, pts: np.ndarray, weights) -> tuple[np.ndarray, np.ndarray]:
    """det and log det of [sum_j w_j phi_j(x_p) conj(phi_j(x_q))] for (B, n, d).

    The matrix is A A^H with A = Phi sqrt(w), so its determinant is
    prod_i |R_ii|^2 for the QR factorization A^H = Q R. Working with the
    factor keeps the relative error at eps * cond(A) instead of
    eps * cond(A)^2, which matters near coincident points. A diagonal entry
    below n * 64 * eps of its row norm counts as an exact zero.
    """
    pts = np.asarray(pts, dtype=float)
    lead, n = pts.shape[:-2], pts.shape[-2]
    if n == 0:
        return np.ones(lead), np.zeros(lead)
    w = np.asarray(weights, dtype=float)
    keep = w > 0
    if n > int(np.count_nonzero(keep)):
        return np.zeros(lead), np.full(lead, -np.inf)
    A = k.phi(pts)[..., keep] * np.sqrt(w[keep])
    R = np.linalg.qr(np.swapaxes(A, -1, -2).conj(), mode="r")
    diag = np.abs(np.einsum("...ii->...i", R))
    norms = np.linalg.norm(A, axis=-1)
    singular = np.any(diag <= n * 64 * np.finfo(float).eps * norms, axis=-1)
    with np.errstate(divide="ignore"):
        log = 2 * np.sum(np.log(diag), axis=-1)
    log = np.where(singular, -np.inf, log)
    return np.where(singular, 0.0, np.exp(log)), log


def correlation_fn(k: SpectralKernel, cfg) -> float:
    """rho_n(x_1..x_n) = det[K(x_p, x_q)]."""
    pts = as_points(k, cfg)
    if len(pts) > k.rank:
        return 0.0
    return float(gram_slogdet(k, pts, k.eigenvalues)[0])


def fredholm_det(k: SpectralKernel) -> float:
    """Det(Id - K_D) = prod_j (1 - lam_j)."""
    if k.is_projection:
        raise UnsupportedOperatorError("Det(Id - K) vanishes for a projection kernel")
    return float(np.prod(1.0 - k.eigenvalues))


def log_fredholm_det(k: SpectralKernel) -> float:
    if k.is_projection:
        raise UnsupportedOperatorError("Det(Id - K) vanishes for a projection kernel")
    return float(np.sum(np.log1p(-k.eigenvalues)))


def batch_log_interaction_det(k: SpectralKernel, pts: np.ndarray) -> np.ndarray:
    """log det of the interaction matrix for each configuration in (B, n, d).

    Uses J[D] for ordinary kernels and K itself for projections; -inf where
    the determinant vanishes (including every n above the rank).
    """
    pts = np.asarray(pts, dtype=float)
    B, n = pts.shape[0], pts.shape[1]
    if n > k.rank:
        return np.full(B, -np.inf)
    _, log = gram_slogdet(k, pts, k.interaction_weights)
    return log


def batch_log_janossy(k: SpectralKernel, pts: np.ndarray) -> np.ndarray:
    """log j_D^n for stacked configurations (B, n, d)."""
    pts = np.asarray(pts, dtype=float)
    B, n = pts.shape[0], pts.shape[1]
    if k.is_projection:
        if n != k.size:
            return np.full(B, -np.inf)
        return batch_log_interaction_det(k, pts)
    return log_fredholm_det(k) + batch_log_interaction_det(k, pts)


def log_janossy_density(k: SpectralKernel, cfg) -> float:
    """log of the Janossy density (-inf where it vanishes)."""
    pts = as_points(k, cfg)
    return float(batch_log_janossy(k, pts[None])[0])


def janossy_density(k: SpectralKernel, cfg) -> float:
    """Janossy density of the configuration w.r.t. the rho dx sample measure.

    ``Det(Id - K) det J[D](x)`` for ordinary kernels, ``det K(x)`` when
    |x| = N for projection kernels and 0 otherwise.
    """
    pts = as_points(k, cfg)
    n = len(pts)
    if k.is_projection:
        if n != k.size:
            return 0.0
        return float(gram_slogdet(k, pts, k.eigenvalues)[0])
    if n > k.rank:
        return 0.0
    if n == 0:
        return fredholm_det(k)
    return fredholm_det(k) * float(gram_slogdet(k, pts, k.j_weights)[0])


# -- built-in kernels -------------------------------------------------------


def make_bergman_kernel(R: float, N: int) -> SpectralKernel:
    """Modified Bergman kernel on the disc B(0, R): eigenvalues R^(2(k+1)), k = 1..N."""
    if not 0 < R < 1:
        raise ValueError(f"Bergman radius must lie in (0, 1), got {R}")
    if int(N) != N or N < 1:
        raise ValueError(f"Bergman rank must be a positive integer, got {N}")
    N = int(N)
    basis = BergmanBasis(R, N)
    lam = float(R) ** (2 * (np.arange(1, N + 1) + 1))
    return SpectralKernel(basis.domain, lam, basis, spec={"type": "bergman", "R": float(R), "N": N})


def make_dyson_kernel(N: int) -> SpectralKernel:
    """Projection kernel on the circle [-N/2, N/2]: modes exp(2 i pi k t / N) / sqrt(N), k < N."""
    if int(N) != N or N < 1:
        raise ValueError(f"Dyson size must be a positive integer, got {N}")
    N = int(N)
    domain = DomainDescriptor.box([-N / 2], [N / 2], periodic=True)
    basis = FourierBasis(domain, np.arange(N)[:, None], origin=[0.0])
    return SpectralKernel(domain, np.ones(N), basis, spec={"type": "dyson", "N": N})


def dyson_kernel_closed_form(N: int, t1, t2):
    """sin(pi (t1 - t2)) / (N sin(pi (t1 - t2) / N)), with the diagonal limit 1."""
    diff = np.asarray(t1, dtype=float) - np.asarray(t2, dtype=float)
    den = N * np.sin(np.pi * diff / N)
    small = np.abs(den) < 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.sin(np.pi * diff) / den
    return np.where(small, 1.0, val)
