"""Differential calculus on finite configurations.

Test functionals have the form

    F(x) = f(sum_i phi_1(x_i), ..., sum_i phi_M(x_i)) * 1{|x| <= K}

and everything here (gradients, potential, drift, the divergence operator
of the integration-by-parts formula, the generator, flows and
quasi-invariance weights) is implemented twice: a batched core working on
stacked configurations of shape (B, n, d), and thin single-configuration
wrappers taking a PointConfiguration.

Sign conventions, fixed by the duality E[G grad_v F] = E[F grad*_v G] under
the law with density j_D(x) prod rho(x_i) dx:

    B_v(x)     = sum_i (beta . v + div v)(x_i),   beta = grad rho / rho
    grad_v U   = -sum_i grad_{x_i} log det J[D](x) . v(x_i)
    grad*_v G  = -grad_v G + G (-B_v + grad_v U)

``div`` is the ordinary divergence. Flow Jacobians are the geometric ones,
det D(phi_t)(x) = exp(+int_0^t div v(phi_s x) ds).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .domain import DomainError
from .kernels import (
    PointConfiguration,
    SpectralKernel,
    as_points,
    batch_log_interaction_det,
    weighted_matrix,
)
from .polynomial import Poly


class InfinitePotentialError(ArithmeticError):
    """det J[D] (or the Janossy density) vanishes at the configuration."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class FlowError(DomainError):
    pass


# -- outer functions --------------------------------------------------------


class PolynomialOuter:
    """Polynomial f: R^M -> R."""

    def __init__(self, poly: Poly):
        if poly.is_complex:
            raise ValueError("outer polynomial must be real")
        self.poly = poly
        self.dim = poly.dim
        self._g = poly.gradient()
        self._h = [[g.derivative(b) for b in range(self.dim)] for g in self._g]

    @classmethod
    def linear(cls, coeffs, const: float = 0.0) -> "PolynomialOuter":
        coeffs = np.asarray(coeffs, dtype=float)
        M = len(coeffs)
        terms = [(np.eye(M, dtype=int)[m], c) for m, c in enumerate(coeffs)]
        terms.append((np.zeros(M, dtype=int), const))
        return cls(Poly.from_terms(terms, M))

    @classmethod
    def constant(cls, c: float, M: int = 1) -> "PolynomialOuter":
        return cls(Poly.constant(float(c), M))

    def value(self, s):
        return self.poly(s)

    def grad(self, s):
        return np.stack([g(s) for g in self._g], axis=-1)

    def hess(self, s):
        return np.stack([np.stack([h(s) for h in row], axis=-1) for row in self._h], axis=-2)

    def to_json(self):
        return {"kind": "polynomial", "terms": self.poly.to_json()}


class TanhOuter:
    """f(s) = scale * tanh(a . s + b)."""

    def __init__(self, a, b: float = 0.0, scale: float = 1.0):
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)
        self.scale = float(scale)
        self.dim = len(self.a)

    def value(self, s):
        return self.scale * np.tanh(np.asarray(s) @ self.a + self.b)

    def grad(self, s):
        t = np.tanh(np.asarray(s) @ self.a + self.b)
        return (self.scale * (1 - t**2))[..., None] * self.a

    def hess(self, s):
        t = np.tanh(np.asarray(s) @ self.a + self.b)
        c = self.scale * (-2 * t * (1 - t**2))
        return c[..., None, None] * np.outer(self.a, self.a)

    def to_json(self):
        return {"kind": "tanh", "a": self.a.tolist(), "b": self.b, "scale": self.scale}


class GaussianOuter:
    """f(s) = scale * exp(-|s - center|^2 / (2 width^2))."""

    def __init__(self, center, width: float = 1.0, scale: float = 1.0):
        self.center = np.asarray(center, dtype=float)
        self.width = float(width)
        self.scale = float(scale)
        self.dim = len(self.center)

    def value(self, s):
        r = np.asarray(s) - self.center
        return self.scale * np.exp(-np.sum(r**2, axis=-1) / (2 * self.width**2))

    def grad(self, s):
        r = np.asarray(s) - self.center
        return -(self.value(s) / self.width**2)[..., None] * r

    def hess(self, s):
        r = np.asarray(s) - self.center
        f = self.value(s)[..., None, None]
        eye = np.eye(self.dim)
        return f * (r[..., :, None] * r[..., None, :] / self.width**4 - eye / self.width**2)

    def to_json(self):
        return {"kind": "gaussian", "center": self.center.tolist(), "width": self.width, "scale": self.scale}


# -- statistics (the phi_m) -------------------------------------------------


class PolynomialStatistic:
    def __init__(self, poly: Poly):
        if poly.is_complex:
            raise ValueError("statistics must be real")
        self.poly = poly
        self._g = poly.gradient()
        self._lap = poly.laplacian()

    def value(self, x):
        return self.poly(x)

    def grad(self, x):
        return np.stack([g(x) for g in self._g], axis=-1)

    def laplacian(self, x):
        return self._lap(x)

    def to_json(self):
        return {"kind": "polynomial", "terms": self.poly.to_json()}


class FourierStatistic:
    """sum_k a_k cos(2 pi k . x / L) + b_k sin(2 pi k . x / L)."""

    def __init__(self, period, modes, cos, sin):
        self.period = np.asarray(period, dtype=float)
        self.modes = np.asarray(modes, dtype=float).reshape(-1, len(self.period))
        self.cos = np.asarray(cos, dtype=float)
        self.sin = np.asarray(sin, dtype=float)
        self.freqs = 2 * np.pi * self.modes / self.period

    def _phase(self, x):
        return np.asarray(x, dtype=float) @ self.freqs.T

    def value(self, x):
        p = self._phase(x)
        return np.cos(p) @ self.cos + np.sin(p) @ self.sin

    def grad(self, x):
        p = self._phase(x)
        w = -np.sin(p) * self.cos + np.cos(p) * self.sin
        return w @ self.freqs

    def laplacian(self, x):
        p = self._phase(x)
        k2 = np.sum(self.freqs**2, axis=-1)
        return -(np.cos(p) * self.cos + np.sin(p) * self.sin) @ k2

    def to_json(self):
        return {
            "kind": "fourier",
            "period": self.period.tolist(),
            "modes": self.modes.tolist(),
            "cos": self.cos.tolist(),
            "sin": self.sin.tolist(),
        }


@dataclass(frozen=True, eq=False)
class TestFunctional:
    """F = outer(sum phi_1, ..., sum phi_M) * 1{count <= cutoff}."""

    __test__ = False  # not a pytest class

    outer: object
    statistics: tuple
    count_cutoff: int = 10**9

    def __post_init__(self):
        object.__setattr__(self, "statistics", tuple(self.statistics))
        if self.outer.dim != len(self.statistics):
            raise ValueError("outer function arity must equal the number of statistics")

    # batched core ---------------------------------------------------------

    def _stats(self, pts):
        B, n = pts.shape[:2]
        if not self.statistics:
            return np.zeros((B, 0))
        return np.stack([np.sum(s.value(pts), axis=1) if n else np.zeros(B) for s in self.statistics], axis=-1)

    def batch_value(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        n = pts.shape[1]
        if n > self.count_cutoff:
            return np.zeros(pts.shape[0])
        return np.asarray(self.outer.value(self._stats(pts)), dtype=float) * np.ones(pts.shape[0])

    def batch_grad(self, pts) -> np.ndarray:
        """Per-point gradients (B, n, d); zero beyond the cutoff (indicator is locally constant)."""
        pts = np.asarray(pts, dtype=float)
        B, n, d = pts.shape
        if n > self.count_cutoff or n == 0 or not self.statistics:
            return np.zeros((B, n, d))
        df = self.outer.grad(self._stats(pts)) * np.ones((B, 1))
        sg = np.stack([s.grad(pts) for s in self.statistics], axis=2)  # (B, n, M, d)
        return np.einsum("bm,bnmd->bnd", df, sg)

    def batch_laplacian(self, pts) -> np.ndarray:
        """Per-point Laplacians Delta_{x_i} F, shape (B, n)."""
        pts = np.asarray(pts, dtype=float)
        B, n, d = pts.shape
        if n > self.count_cutoff or n == 0 or not self.statistics:
            return np.zeros((B, n))
        s = self._stats(pts)
        df = self.outer.grad(s) * np.ones((B, 1))
        H = self.outer.hess(s) * np.ones((B, 1, 1))
        sg = np.stack([st.grad(pts) for st in self.statistics], axis=2)
        sl = np.stack([st.laplacian(pts) for st in self.statistics], axis=2)  # (B, n, M)
        second = np.einsum("bmk,bnmd,bnkd->bn", H, sg, sg)
        first = np.einsum("bm,bnm->bn", df, sl)
        return second + first

    # single configuration ---------------------------------------------------

    def __call__(self, cfg) -> float:
        return eval_functional(self, cfg)

    def to_json(self):
        return {
            "outer": self.outer.to_json(),
            "statistics": [s.to_json() for s in self.statistics],
            "cutoff": self.count_cutoff,
        }


# -- vector fields and flows -------------------------------------------------


class VectorField:
    """Smooth field with analytic divergence (and optionally Jacobian).

    ``v``, ``divergence`` and ``jacobian`` are vectorized over leading axes.
    """

    def __init__(self, v, divergence, jacobian=None, dim: int | None = None, spec: dict | None = None):
        self.v = v
        self.divergence = divergence
        self.jacobian = jacobian
        self.dim = dim
        self.spec = spec

    def __call__(self, x):
        return self.v(x)

    @classmethod
    def zero(cls, dim: int) -> "VectorField":
        return cls(lambda x: np.zeros(np.shape(x)), lambda x: np.zeros(np.shape(x)[:-1]),
                   lambda x: np.zeros(np.shape(x) + (dim,)), dim=dim, spec={"kind": "zero", "dim": dim})

    @classmethod
    def constant(cls, c) -> "VectorField":
        c = np.asarray(c, dtype=float)
        d = len(c)
        return cls(lambda x: np.broadcast_to(c, np.shape(x)).copy(),
                   lambda x: np.zeros(np.shape(x)[:-1]),
                   lambda x: np.zeros(np.shape(x) + (d,)), dim=d,
                   spec={"kind": "constant", "value": c.tolist()})

    @classmethod
    def polynomial(cls, components) -> "VectorField":
        comps = list(components)
        d = len(comps)
        if any(p.dim != d for p in comps):
            raise ValueError("polynomial field needs d components in d variables")
        grads = [[p.derivative(b) for b in range(d)] for p in comps]
        div = grads[0][0]
        for a in range(1, d):
            div = div + grads[a][a]

        def v(x):
            return np.stack([p(x) for p in comps], axis=-1)

        def jac(x):
            return np.stack([np.stack([g(x) for g in row], axis=-1) for row in grads], axis=-2)

        return cls(v, lambda x: div(x), jac, dim=d,
                   spec={"kind": "polynomial", "components": [p.to_json() for p in comps]})

    @classmethod
    def bump(cls, center, radius: float, direction=None, rotation: float = 0.0) -> "VectorField":
        """b(x) (direction + rotation * Rot90 (x - center)), b a C-infinity bump.

        b(x) = exp(1 - 1 / (1 - u)), u = |x - center|^2 / radius^2, zero for u >= 1.
        The rotational part is divergence free; it needs d = 2.
        """
        a = np.asarray(center, dtype=float)
        d = len(a)
        c = np.zeros(d) if direction is None else np.asarray(direction, dtype=float)
        s2 = float(radius) ** 2
        if rotation and d != 2:
            raise ValueError("rotational bump fields need d = 2")
        rot = np.array([[0.0, -1.0], [1.0, 0.0]]) if d == 2 else np.zeros((d, d))

        def parts(x):
            x = np.asarray(x, dtype=float)
            r = x - a
            u = np.sum(r**2, axis=-1) / s2
            inside = u < 1
            us = np.where(inside, u, 0.0)
            b = np.where(inside, np.exp(1 - 1 / (1 - us)), 0.0)
            db = np.where(inside, -b / (1 - us) ** 2, 0.0)  # d b / d u
            gb = (db * 2 / s2)[..., None] * r  # grad b
            w = c + rotation * (r @ rot.T)
            return b, gb, w

        def v(x):
            b, _, w = parts(x)
            return b[..., None] * w

        def div(x):
            b, gb, w = parts(x)
            return np.sum(gb * w, axis=-1)  # div(w) = 0

        def jac(x):
            b, gb, w = parts(x)
            return w[..., :, None] * gb[..., None, :] + b[..., None, None] * rotation * rot

        return cls(v, div, jac, dim=d, spec={
            "kind": "bump", "center": a.tolist(), "radius": float(radius),
            "direction": c.tolist(), "rotation": float(rotation)})

    def to_json(self):
        if self.spec is None:
            raise ValueError("this field was built from callables and has no JSON form")
        return self.spec


@dataclass(frozen=True, eq=False)
class FlowMap:
    """Time-``time`` flow of ``field`` (solutions of dx/dt = v(x))."""

    field: VectorField
    time: float
    ode_tolerance: float = 1e-10
    domain: object = field(default=None)

    def inverse(self) -> "FlowMap":
        return FlowMap(self.field, -self.time, self.ode_tolerance, self.domain)


def flow_points(flow: FlowMap, pts, time: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Transport points (P, d) along the flow; returns (images, Jacobians).

    All points are integrated as one system with an adaptive Runge-Kutta
    (DOP853) scheme, co-integrating the log-Jacobian
    d/dt log J = div v(phi_t x).
    """
    t = flow.time if time is None else time
    pts = np.asarray(pts, dtype=float)
    P, d = pts.shape
    if P == 0 or t == 0:
        return pts.copy(), np.ones(P)

    def rhs(_, y):
        x = y[: P * d].reshape(P, d)
        return np.concatenate([flow.field.v(x).reshape(-1), flow.field.divergence(x)])

    y0 = np.concatenate([pts.reshape(-1), np.zeros(P)])
    sol = solve_ivp(rhs, (0.0, t), y0, method="DOP853", rtol=flow.ode_tolerance,
                    atol=flow.ode_tolerance)
    if not sol.success:
        raise FlowError(f"flow integration failed: {sol.message}")
    yT = sol.y[:, -1]
    out = yT[: P * d].reshape(P, d)
    if flow.domain is not None:
        inside = flow.domain.contains(out, tol=1e-9)
        if not np.all(inside):
            i = int(np.argmin(inside))
            raise FlowError(f"point {i} left the domain under the flow", index=i)
    return out, np.exp(yT[P * d:])


def flow_apply(flow: FlowMap, cfg) -> PointConfiguration:
    pts = cfg.points if isinstance(cfg, PointConfiguration) else np.asarray(cfg, dtype=float)
    d = pts.shape[-1] if pts.ndim == 2 else (flow.field.dim or 1)
    out, _ = flow_points(flow, np.reshape(pts, (-1, d)))
    return PointConfiguration(out, d)


def flow_jacobian(flow: FlowMap, x) -> float:
    """Geometric Jacobian det D(phi_t)(x) = exp(int_0^t div v(phi_s x) ds)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _, jac = flow_points(flow, x[None, :])
    return float(jac[0])


# -- functionals --------------------------------------------------------------


def _batch(cfg, d: int | None = None) -> np.ndarray:
    pts = cfg.points if isinstance(cfg, PointConfiguration) else np.asarray(cfg, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, d or 1)
    return pts[None]


def eval_functional(F: TestFunctional, cfg) -> float:
    return float(F.batch_value(_batch(cfg))[0])


def grad_functional(F: TestFunctional, cfg) -> np.ndarray:
    """Gradient with respect to each point, shape (n, d)."""
    return F.batch_grad(_batch(cfg))[0]


def batch_directional_grad(F: TestFunctional, v: VectorField, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if pts.shape[1] == 0:
        return np.zeros(pts.shape[0])
    return np.sum(F.batch_grad(pts) * v(pts), axis=(1, 2))


def directional_grad(F: TestFunctional, v: VectorField, cfg) -> float:
    """sum_i grad_{x_i} F . v(x_i)."""
    return float(batch_directional_grad(F, v, _batch(cfg))[0])


# -- potential and drift -------------------------------------------------------


def batch_log_det_and_grad(k: SpectralKernel, pts) -> tuple[np.ndarray, np.ndarray]:
    """log det of the interaction matrix and its gradient in every point.

    Uses d log det M = Tr(M^{-1} dM); with M = Phi W Phi^H this reduces to
    grad_{x_i} = 2 Re sum_j d Phi_ij conj(Y_ij), Y = M^{-1} Phi W.
    Gradients are NaN where the determinant vanishes.
    """
    pts = np.asarray(pts, dtype=float)
    B, n, d = pts.shape
    logdet = batch_log_interaction_det(k, pts)
    grad = np.full((B, n, d), np.nan)
    ok = np.isfinite(logdet)
    if n == 0:
        return logdet, np.zeros((B, 0, d))
    if np.any(ok):
        x = pts[ok]
        w = k.interaction_weights
        Phi = k.phi(x)  # (b, n, N)
        dPhi = k.phi_grad(x)  # (b, n, N, d)
        M = weighted_matrix(k, x, w)
        Y = np.linalg.solve(M, Phi * w)
        grad[ok] = 2 * np.real(np.einsum("bijd,bij->bid", dPhi, Y.conj()))
    return logdet, grad


def potential_U(k: SpectralKernel, cfg) -> float:
    """U(x) = -log det J[D](x); for projection kernels -log det K(x).

    Returns +inf where the determinant vanishes.
    """
    pts = as_points(k, cfg)
    return float(-batch_log_interaction_det(k, pts[None])[0])


def batch_beta(k: SpectralKernel, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    rho = k.density(pts)
    return k.density.gradient(pts) / rho[..., None]


def beta_field(k: SpectralKernel, x) -> np.ndarray:
    """grad rho / rho at x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return batch_beta(k, x[None])[0]


def _offending_index(k: SpectralKernel, pts) -> int:
    for i in range(len(pts)):
        if not np.isfinite(batch_log_interaction_det(k, pts[None, : i + 1])[0]):
            return i
    return 0


def batch_drift(k: SpectralKernel, pts) -> tuple[np.ndarray, np.ndarray]:
    """Drift beta(x_i) - grad_{x_i} U for stacked configurations; (drift, finite mask)."""
    logdet, g = batch_log_det_and_grad(k, pts)
    return batch_beta(k, pts) + g, np.isfinite(logdet)


def drift(k: SpectralKernel, cfg) -> np.ndarray:
    """Per-point drift (n, d) of the Langevin diffusion leaving the DPP invariant."""
    pts = as_points(k, cfg)
    dr, ok = batch_drift(k, pts[None])
    if not ok[0]:
        i = _offending_index(k, pts)
        raise InfinitePotentialError(f"infinite potential; point {i} makes the determinant vanish", index=i)
    return dr[0]


def batch_b_v(k: SpectralKernel, v: VectorField, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if pts.shape[1] == 0:
        return np.zeros(pts.shape[0])
    beta = batch_beta(k, pts)
    return np.sum(np.sum(beta * v(pts), axis=-1) + v.divergence(pts), axis=1)


def b_v(k: SpectralKernel, v: VectorField, cfg) -> float:
    """sum_i (beta . v + div v)(x_i)."""
    pts = as_points(k, cfg, check=False)
    return float(batch_b_v(k, v, pts[None])[0])


def batch_grad_v_U(k: SpectralKernel, v: VectorField, pts) -> tuple[np.ndarray, np.ndarray]:
    """grad_v U = -sum_i grad_{x_i} log det . v(x_i); (values, finite mask)."""
    pts = np.asarray(pts, dtype=float)
    logdet, g = batch_log_det_and_grad(k, pts)
    ok = np.isfinite(logdet)
    if pts.shape[1] == 0:
        return np.zeros(pts.shape[0]), ok
    val = -np.sum(np.where(ok[:, None, None], g, 0.0) * v(pts), axis=(1, 2))
    return np.where(ok, val, np.nan), ok


def batch_divergence_op(k, v, G: TestFunctional, pts) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(pts, dtype=float)
    gU, ok = batch_grad_v_U(k, v, pts)
    val = -batch_directional_grad(G, v, pts) + G.batch_value(pts) * (-batch_b_v(k, v, pts) + gU)
    return val, ok


def divergence_op(k: SpectralKernel, v: VectorField, G: TestFunctional, cfg) -> float:
    """grad*_v G = -grad_v G + G (-B_v + grad_v U)."""
    pts = as_points(k, cfg)
    val, ok = batch_divergence_op(k, v, G, pts[None])
    if not ok[0]:
        raise InfinitePotentialError("infinite potential at the configuration", index=_offending_index(k, pts))
    return float(val[0])


def batch_generator(k: SpectralKernel, F: TestFunctional, pts) -> tuple[np.ndarray, np.ndarray]:
    """H F = sum_i (-beta . grad_i F - Delta_i F + U_i . grad_i F), U_i = grad_{x_i} U."""
    pts = np.asarray(pts, dtype=float)
    B, n, d = pts.shape
    logdet, g = batch_log_det_and_grad(k, pts)
    ok = np.isfinite(logdet)
    if n == 0:
        return np.zeros(B), ok
    gF = F.batch_grad(pts)
    lap = F.batch_laplacian(pts)
    beta = batch_beta(k, pts)
    U_i = -np.where(ok[:, None, None], g, 0.0)
    val = np.sum(np.sum((-beta + U_i) * gF, axis=-1) - lap, axis=1)
    return np.where(ok, val, np.nan), ok


def apply_generator(k: SpectralKernel, F: TestFunctional, cfg) -> float:
    pts = as_points(k, cfg)
    val, ok = batch_generator(k, F, pts[None])
    if not ok[0]:
        raise InfinitePotentialError("infinite potential at the configuration", index=_offending_index(k, pts))
    return float(val[0])


def batch_carre_du_champ(F: TestFunctional, G: TestFunctional, pts) -> np.ndarray:
    """sum_i grad_i F . grad_i G."""
    pts = np.asarray(pts, dtype=float)
    return np.sum(F.batch_grad(pts) * G.batch_grad(pts), axis=(1, 2))


# -- quasi-invariance -------------------------------------------------------


def batch_log_quasi_invariance_weight(k: SpectralKernel, flow: FlowMap, pts) -> np.ndarray:
    """log of prod_i p_phi(x_i) * det J(phi^{-1} x) / det J(x) for (B, n, d).

    p_phi(y) = rho(phi^{-1} y) / rho(y) * Jac(phi^{-1})(y); -inf/nan where
    the determinant at x vanishes.
    """
    pts = np.asarray(pts, dtype=float)
    B, n, d = pts.shape
    if n == 0:
        return np.zeros(B)
    back, jac = flow_points(flow.inverse(), pts.reshape(-1, d))
    back = back.reshape(B, n, d)
    log_p = np.log(k.density(back)) - np.log(k.density(pts)) + np.log(jac.reshape(B, n))
    num = batch_log_interaction_det(k, back)
    den = batch_log_interaction_det(k, pts)
    with np.errstate(invalid="ignore"):
        return np.sum(log_p, axis=1) + num - den


def quasi_invariance_weight(k: SpectralKernel, flow: FlowMap, cfg) -> float:
    pts = as_points(k, cfg)
    if len(pts) and not np.isfinite(batch_log_interaction_det(k, pts[None])[0]):
        raise InfinitePotentialError("infinite potential at the configuration", index=_offending_index(k, pts))
    return float(np.exp(batch_log_quasi_invariance_weight(k, flow, pts[None])[0]))


# -- finite differences (oracles) ----------------------------------------------


def fd_step(x, rel: float = 1e-5):
    return rel * (1.0 + np.abs(x))


def finite_difference_gradient(fun, pts, rel: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function of an (n, d) array."""
    pts = np.asarray(pts, dtype=float)
    g = np.zeros_like(pts)
    for idx in np.ndindex(pts.shape):
        h = fd_step(pts[idx], rel)
        up = pts.copy()
        dn = pts.copy()
        up[idx] += h
        dn[idx] -= h
        g[idx] = (fun(up) - fun(dn)) / (2 * h)
    return g
