"""Robust M-estimator losses and their iteratively-reweighted realization.

Losses are expressed as rho(s) with s = e^2 the squared whitened residual
norm, the convention a least-squares corrector needs: the plain quadratic
is rho = s/2, and the first/second derivatives returned are with respect
to s. The IRLS weight 2*rho'(s) multiplies squared residuals, so residual
and Jacobian rows get scaled by its square root before normal-equation
assembly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

__all__ = ["KernelKind", "RobustKernel", "loss", "irls_weight"]


class KernelKind(enum.Enum):
    """Loss family applied to a whitened residual norm."""

    NONE = "none"
    HUBER = "huber"
    CAUCHY = "cauchy"


@dataclass(frozen=True)
class RobustKernel:
    """An M-estimator loss: family plus its transition parameter k."""

    kind: KernelKind = KernelKind.NONE
    k: float = 1.0

    def __post_init__(self):
        if not isinstance(self.kind, KernelKind):
            raise TypeError(f"kind must be a KernelKind, got {self.kind!r}")
        if not (self.k > 0.0):
            raise ValueError(f"kernel parameter must be positive, got {self.k}")

    @classmethod
    def parse(cls, name: str, k: float = 1.0) -> "RobustKernel":
        """Build from a CLI-style kernel name ('none', 'huber', 'cauchy')."""
        try:
            kind = KernelKind(name.strip().lower())
        except ValueError:
            valid = ", ".join(kk.value for kk in KernelKind)
            raise ValueError(f"unknown kernel {name!r}; expected one of: {valid}")
        return cls(kind=kind, k=k)


def loss(kernel: RobustKernel, squared_norm: float) -> tuple[float, float, float]:
    """Loss value and its first/second derivatives w.r.t. the squared norm.

    Quadratic: rho = s/2. Huber: quadratic up to e = k, then linear in e,
    k*(e - k/2). Cauchy: (k^2/2) * log(1 + s/k^2), whose influence decays
    to zero for large residuals. All three are zero at zero and quadratic
    (rho ~ s/2) near the origin.
    """
    s = float(squared_norm)
    if s < 0.0:
        raise ValueError(f"squared residual norm must be >= 0, got {s}")
    k2 = kernel.k * kernel.k
    if kernel.kind is KernelKind.NONE:
        return 0.5 * s, 0.5, 0.0
    if kernel.kind is KernelKind.HUBER:
        if s <= k2:
            return 0.5 * s, 0.5, 0.0
        e = math.sqrt(s)
        return kernel.k * (e - 0.5 * kernel.k), 0.5 * kernel.k / e, \
            -0.25 * kernel.k / (s * e)
    if kernel.kind is KernelKind.CAUCHY:
        ratio = 1.0 + s / k2
        return 0.5 * k2 * math.log1p(s / k2), 0.5 / ratio, \
            -0.5 / (k2 * ratio * ratio)
    raise ValueError(f"unknown kernel kind: {kernel.kind!r}")


def irls_weight(kernel: RobustKernel, e: float) -> float:
    """Reweighting factor 2*rho'(e^2) in (0, 1] for residual norm e >= 0.

    Quadratic: 1. Huber: min(1, k/e). Cauchy: 1/(1 + e^2/k^2). Scale the
    residual and Jacobian rows by the square root of this before assembly.
    """
    e = float(e)
    if e < 0.0:
        raise ValueError(f"residual norm must be >= 0, got {e}")
    if kernel.kind is KernelKind.NONE:
        return 1.0
    if kernel.kind is KernelKind.HUBER:
        return 1.0 if e <= kernel.k else kernel.k / e
    if kernel.kind is KernelKind.CAUCHY:
        return 1.0 / (1.0 + (e / kernel.k) ** 2)
    raise ValueError(f"unknown kernel kind: {kernel.kind!r}")
