"""JSON descriptions of kernels, test functionals and vector fields.

Kernel files::

    {"type": "bergman", "R": 0.5, "N": 2}
    {"type": "dyson", "N": 3}
    {"type": "custom",
     "domain": {"shape": "box", "lower": [0, 0], "upper": [1, 1]},
     "eigenvalues": [0.5, 0.3],
     "eigenfunctions": {"kind": "polynomial", "orthonormalize": true,
                        "polys": [[{"exponent": [0, 0], "coeff": 1.0}], ...]},
     "density": {"kind": "uniform"}}

Fourier eigenfunctions use ``{"kind": "fourier", "modes": [[0], [1]]}`` on a
box. Polynomial coefficients are numbers or ``[re, im]`` pairs.

Functionals::

    {"outer": {"kind": "polynomial" | "tanh" | "gaussian", ...},
     "statistics": [{"kind": "polynomial", "terms": [...]},
                    {"kind": "fourier", "period": [L], "modes": [[1]], "cos": [..], "sin": [..]}],
     "cutoff": 10}

Fields: ``{"kind": "zero" | "constant" | "polynomial" | "bump", ...}``;
polynomial fields list one term list per component and get their
divergence and Jacobian by exact differentiation.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .basis import FourierBasis, PolynomialBasis, density_from_json
from .calculus import (
    FourierStatistic,
    GaussianOuter,
    PolynomialOuter,
    PolynomialStatistic,
    TanhOuter,
    TestFunctional,
    VectorField,
)
from .domain import DomainDescriptor
from .kernels import SpectralKernel, make_bergman_kernel, make_dyson_kernel
from .polynomial import Poly


class SpecError(ValueError):
    """Malformed or inconsistent specification."""


def _read(source) -> dict:
    if isinstance(source, dict):
        return source
    path = Path(source)
    text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if 0 < exc.lineno <= len(text.splitlines()) else ""
        raise SpecError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line}") from exc


def load_kernel(source) -> SpectralKernel:
    """Build a kernel from a dict or a JSON file path."""
    data = _read(source)
    try:
        kind = data["type"]
        if kind == "bergman":
            return make_bergman_kernel(float(data["R"]), int(data["N"]))
        if kind == "dyson":
            return make_dyson_kernel(int(data["N"]))
        if kind == "custom":
            return _custom_kernel(data)
    except SpecError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"invalid kernel spec: {exc}") from exc
    raise SpecError(f"unknown kernel type {kind!r}")


def _custom_kernel(data: dict) -> SpectralKernel:
    domain = DomainDescriptor.from_dict(data["domain"])
    d = domain.dimension
    lam = [float(v) for v in data.get("eigenvalues", [])]
    ef = data.get("eigenfunctions", {"kind": "polynomial", "polys": []})
    density = density_from_json(data.get("density"), d)
    kind = ef.get("kind", "polynomial")
    if kind == "polynomial":
        polys = [Poly.from_json(p, d) for p in ef.get("polys", [])]
        basis = PolynomialBasis(domain, polys, density, orthonormalize=bool(ef.get("orthonormalize", False)))
    elif kind == "fourier":
        if data.get("density") not in (None, {"kind": "uniform"}):
            raise SpecError("Fourier eigenfunctions are orthonormal only for the uniform density")
        basis = FourierBasis(domain, ef["modes"], ef.get("origin"))
    else:
        raise SpecError(f"unknown eigenfunction kind {kind!r}")
    return SpectralKernel(domain, np.asarray(lam, dtype=float), basis, spec=data)


def kernel_spec(k: SpectralKernel) -> dict:
    if k.spec is None:
        raise SpecError("kernel has no JSON description")
    return k.spec


# -- functionals and fields ------------------------------------------------


def outer_from_json(data: dict, M: int):
    kind = data.get("kind")
    if kind == "polynomial":
        return PolynomialOuter(Poly.from_json(data["terms"], M))
    if kind == "tanh":
        return TanhOuter(data["a"], data.get("b", 0.0), data.get("scale", 1.0))
    if kind == "gaussian":
        return GaussianOuter(data["center"], data.get("width", 1.0), data.get("scale", 1.0))
    raise SpecError(f"unknown outer function {kind!r}")


def statistic_from_json(data: dict, d: int):
    kind = data.get("kind")
    if kind == "polynomial":
        return PolynomialStatistic(Poly.from_json(data["terms"], d))
    if kind == "fourier":
        return FourierStatistic(data["period"], data["modes"], data.get("cos", []), data.get("sin", []))
    raise SpecError(f"unknown statistic {kind!r}")


def functional_from_json(data: dict, d: int) -> TestFunctional:
    try:
        stats = [statistic_from_json(s, d) for s in data.get("statistics", [])]
        outer = outer_from_json(data["outer"], len(stats))
        return TestFunctional(outer, stats, int(data.get("cutoff", 10**9)))
    except SpecError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"invalid functional spec: {exc}") from exc


def field_from_json(data: dict, d: int) -> VectorField:
    kind = data.get("kind")
    try:
        if kind == "zero":
            return VectorField.zero(d)
        if kind == "constant":
            return VectorField.constant(data["value"])
        if kind == "polynomial":
            return VectorField.polynomial([Poly.from_json(c, d) for c in data["components"]])
        if kind == "bump":
            return VectorField.bump(data["center"], data["radius"], data.get("direction"), data.get("rotation", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"invalid field spec: {exc}") from exc
    raise SpecError(f"unknown field kind {kind!r}")
