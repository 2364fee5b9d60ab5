"""Monte Carlo summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_samples: int
    target: float | None = None

    @property
    def z_score(self) -> float | None:
        if self.target is None:
            return None
        if self.std_error == 0:
            return 0.0 if self.mean == self.target else float(np.sign(self.mean - self.target) * np.inf)
        return (self.mean - self.target) / self.std_error

    @classmethod
    def from_samples(cls, values, target: float | None = None) -> "McEstimate":
        v = np.asarray(values, dtype=float).reshape(-1)
        n = v.size
        if n == 0:
            raise ValueError("no samples")
        se = float(np.std(v, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(float(np.mean(v)), se, int(n), target)

    def to_json(self) -> dict:
        out = {"mean": self.mean, "se": self.std_error, "n": self.n_samples}
        if self.target is not None:
            out["target"] = self.target
            out["z"] = self.z_score
        return out


def paired_z(lhs, rhs) -> tuple[McEstimate, McEstimate, float, float]:
    """Estimates of both sides and the z-score of their paired difference.

    Returns (lhs, rhs, z, se_diff); the standard error is that of the per-sample
    difference, so shared noise cancels.
    """
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    diff = McEstimate.from_samples(lhs - rhs)
    if diff.std_error == 0:
        z = 0.0 if diff.mean == 0 else float(np.sign(diff.mean) * np.inf)
    else:
        z = diff.mean / diff.std_error
    return McEstimate.from_samples(lhs), McEstimate.from_samples(rhs), float(z), diff.std_error
