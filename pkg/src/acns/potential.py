"""Flory-Huggins logarithmic potential and the singular barriers Psi_s."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import xlogy

__all__ = [
    "DELTA_EVAL",
    "PhaseBoundError",
    "guard_phase",
    "FloryHuggins",
    "NullPotential",
    "BarrierFamily",
    "psi",
    "psi_prime",
    "f_second_Lgamma_norm",
]

DELTA_EVAL = 1e-12


class PhaseBoundError(ValueError):
    """An order parameter reached or left the physical interval (-1, 1)."""


def guard_phase(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    bad = ~(np.abs(r) < 1.0)
    if np.any(bad):
        idx = np.flatnonzero(bad.ravel())[0]
        raise PhaseBoundError(f"|r| >= 1 at flat index {idx} (r={r.ravel()[idx]!r})")
    return np.clip(r, -1.0 + DELTA_EVAL, 1.0 - DELTA_EVAL)


@dataclass(frozen=True)
class FloryHuggins:
    """
    F(r) = theta/2 [(1+r)ln(1+r) + (1-r)ln(1-r)] - theta0/2 r^2 + c0

    ``c0`` is the additive constant making ``min F = 0`` on [-1, 1].  The
    convex part is ``theta * atanh``, the concave part ``-theta0 * r``.
    """

    theta: float = 1.0
    theta0: float = 2.0
    s_F: int = 1
    c0: float = field(init=False)

    def __post_init__(self) -> None:
        if not 0 < self.theta < self.theta0:
            raise ValueError(f"need 0 < theta < theta0, got theta={self.theta}, theta0={self.theta0}")
        res = minimize_scalar(
            self._F_raw, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12}
        )
        object.__setattr__(self, "c0", -min(float(res.fun), 0.0))

    @property
    def L_F(self) -> float:
        return self.theta0 - self.theta

    def _F_raw(self, r):
        r = np.asarray(r, dtype=float)
        ent = 0.5 * self.theta * (xlogy(1 + r, 1 + r) + xlogy(1 - r, 1 - r))
        return ent - 0.5 * self.theta0 * r**2

    def F(self, r):
        r = guard_phase(r)
        return self._F_raw(r) + self.c0

    def F_prime(self, r):
        r = guard_phase(r)
        return self.theta * np.arctanh(r) - self.theta0 * r

    def F_second(self, r):
        r = guard_phase(r)
        return self.theta / (1.0 - r * r) - self.theta0

    def convex_split(self, r):
        """(F1', F2') with F1' = theta*atanh(r) convex and F2' = -theta0*r Lipschitz."""
        r = guard_phase(r)
        return self.theta * np.arctanh(r), -self.theta0 * r

    # used by the stepper's implicit solve: x + dt * convex_coeff * atanh(x) = rhs
    @property
    def convex_coeff(self) -> float:
        return self.theta

    @property
    def concave_coeff(self) -> float:
        return self.theta0


@dataclass(frozen=True)
class NullPotential:
    """F = 0.  Test hook that switches the potential off."""

    c0: float = 0.0
    s_F: int = 1
    L_F: float = 0.0
    convex_coeff: float = 0.0
    concave_coeff: float = 0.0

    def F(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    F_prime = F_second = F

    def convex_split(self, r):
        z = self.F(r)
        return z, z.copy()


@dataclass(frozen=True)
class BarrierFamily:
    s0: int = 2
    s_F: int = 1

    def __post_init__(self) -> None:
        if int(self.s0) != self.s0 or self.s0 < 2:
            raise ValueError(f"s0 must be an integer >= 2, got {self.s0!r}")
        if not self.s0 > 2 * self.s_F - 1:
            raise ValueError(f"barrier integrability requires s0 > 2*s_F - 1, got s0={self.s0}, s_F={self.s_F}")

    @property
    def gamma(self) -> float:
        return (self.s0 + 1) / self.s_F


def psi(s: float, r):
    """Psi_s(r) = (1 - r^2)^(-s)."""
    if s < 1:
        raise ValueError(f"barrier index must be >= 1, got {s}")
    r = guard_phase(r)
    return (1.0 - r * r) ** (-s)


def psi_prime(s: float, r):
    if s < 1:
        raise ValueError(f"barrier index must be >= 1, got {s}")
    r = guard_phase(r)
    return 2.0 * s * r * (1.0 - r * r) ** (-s - 1)


def f_second_Lgamma_norm(potential, phi, gamma: float, cell: float) -> float:
    """
    Grid-quadrature ``L^gamma`` norm of ``F''(phi)``.  ``cell`` is the
    quadrature weight per node.  Values within ``DELTA_EVAL`` of +-1 are a
    phase-bound violation here rather than being clamped.
    """
    phi = np.asarray(phi, dtype=float)
    m = float(np.max(np.abs(phi)))
    if not m <= 1.0 - DELTA_EVAL:
        raise PhaseBoundError(f"max|phi| = {m!r} violates |phi| <= 1 - {DELTA_EVAL:g}")
    fs = np.abs(potential.F_second(phi))
    return float((np.sum(fs**gamma) * cell) ** (1.0 / gamma))
