"""
Semi-implicit Euler-Maruyama stepping for the coupled velocity / phase
system and its nudged companion.

Velocity: viscous term implicit, transport and capillary forcing explicit,
additive noise, and (for the nudged system) the low-mode relaxation
``-eta P_N(u - u_ref)`` taken implicitly, with ``u_ref`` the reference
velocity at the new time level.

Phase: explicit transport, explicit concave part of F', multiplicative noise,
implicit diffusion, then a pointwise implicit solve of the convex part

    x + dt * theta * atanh(x) = rhs,

whose solution map has range (-1, 1).  That last solve is what keeps the
order parameter strictly inside the physical interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .noise import NoisePath, PhaseNoise, VelocityNoise, sample_increments
from .potential import FloryHuggins
from .spectral import (
    ScalarField,
    SolenoidalField,
    SpectralGrid,
    _check_grid,
    _nonlinearity_hat,
)

__all__ = [
    "CoupledState",
    "StepperConfig",
    "NudgeConfig",
    "Model",
    "NewtonError",
    "InstabilityError",
    "chemical_potential",
    "korteweg_force",
    "solve_convex",
    "step",
    "run",
    "Trajectory",
]


class NewtonError(RuntimeError):
    """The pointwise implicit phase solve failed to converge."""


class InstabilityError(RuntimeError):
    """Energy blow-up detected during a run."""


@dataclass(frozen=True, eq=False)
class CoupledState:
    u: SolenoidalField
    phi: ScalarField
    t: float = 0.0

    @property
    def grid(self) -> SpectralGrid:
        return self.u.grid

    @classmethod
    def zeros(cls, grid: SpectralGrid, t: float = 0.0) -> "CoupledState":
        return cls(SolenoidalField.zeros(grid), ScalarField.constant(grid, 0.0), t)


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-3
    nu: float = 0.1
    beta: float = 1.0
    newton_tol: float = 1e-12
    newton_max: int = 50
    # False drops transport, self-advection and capillary coupling (linear test system)
    nonlinear: bool = True

    def __post_init__(self) -> None:
        for name in ("dt", "nu", "beta"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if self.newton_max < 1 or not self.newton_tol > 0:
            raise ValueError("newton_max >= 1 and newton_tol > 0 required")


@dataclass(frozen=True)
class NudgeConfig:
    """Relaxation of the first ``N`` Stokes modes toward a reference with gain ``eta``."""

    N: int
    eta: float | None = None  # None: lambda_N * nu / 2

    def resolve(self, grid: SpectralGrid, nu: float) -> "NudgeConfig":
        if self.N < 0 or self.N > grid.n_modes:
            raise ValueError(f"nudged mode count N={self.N} outside 0..{grid.n_modes}")
        if self.eta is not None:
            if not self.eta >= 0:
                raise ValueError(f"eta must be >= 0, got {self.eta}")
            return self
        eta = 0.0 if self.N == 0 else grid.eigenvalue(self.N) * nu / 2
        return replace(self, eta=eta)


@dataclass(frozen=True, eq=False)
class Model:
    """Everything a step needs besides the state and the increments."""

    grid: SpectralGrid
    stepper: StepperConfig = field(default_factory=StepperConfig)
    potential: object = field(default_factory=FloryHuggins)
    vnoise: VelocityNoise | None = None
    pnoise: PhaseNoise | None = None

    def __post_init__(self) -> None:
        if self.vnoise is None:
            object.__setattr__(self, "vnoise", VelocityNoise(self.grid, sigma0=0.0, M=0, K_active=0))
        if self.pnoise is None:
            object.__setattr__(self, "pnoise", PhaseNoise(gamma_k=(), q=1))
        _check_grid(self.grid, self.vnoise.grid)
        dt, nu, beta = self.stepper.dt, self.stepper.nu, self.stepper.beta
        object.__setattr__(self, "_inv_visc", 1.0 / (1.0 + nu * dt * self.grid.lam))
        object.__setattr__(self, "_inv_diff", 1.0 / (1.0 + beta * dt * self.grid.lam))

    def with_stepper(self, **changes) -> "Model":
        return Model(self.grid, replace(self.stepper, **changes), self.potential, self.vnoise, self.pnoise)

    def increments(self, path: NoisePath | None, n: int):
        if path is None:
            return np.zeros(self.vnoise.n_channels), np.zeros(self.pnoise.n_channels)
        return sample_increments(path, n, self.stepper.dt, self.vnoise.n_channels, self.pnoise.n_channels)


def chemical_potential(phi: ScalarField, beta: float, potential) -> ScalarField:
    """w = -beta * Laplacian(phi) + F'(phi)."""
    g = phi.grid
    lap_part = g.ifft(beta * g.lam * phi.hat())
    return ScalarField(g, lap_part + potential.F_prime(phi.values))


def _korteweg_hat(grid: SpectralGrid, w_hat: np.ndarray, phi_hat: np.ndarray):
    m = grid.dealias_mask
    w_d = grid.ifft(w_hat * m)
    gphi = grid.ifft(grid.grad_hat(phi_hat * m))
    return grid.leray_hat(grid.fft(w_d * gphi) * m), gphi


def korteweg_force(w: ScalarField, phi: ScalarField) -> SolenoidalField:
    """Leray projection of the dealiased capillary force w * grad(phi)."""
    _check_grid(w.grid, phi.grid)
    g = w.grid
    kh, _ = _korteweg_hat(g, w.hat(), phi.hat())
    return SolenoidalField(g, kh)


def solve_convex(rhs: np.ndarray, a: float, tol: float = 1e-12, maxit: int = 50,
                 guess: np.ndarray | None = None) -> np.ndarray:
    """
    Solve ``x + a * atanh(x) = rhs`` pointwise for ``x`` in (-1, 1).

    Works in ``y = atanh(x)`` where the residual ``tanh(y) + a*y - rhs`` is
    strictly increasing and bracketed by ``[(rhs-1)/a, (rhs+1)/a]``; Newton
    steps leaving the bracket fall back to bisection.
    """
    rhs = np.asarray(rhs, dtype=float)
    if a == 0.0:
        return rhs.copy()
    lo = (rhs - 1.0) / a
    hi = (rhs + 1.0) / a
    if guess is None:
        x0 = np.clip(rhs, -0.999, 0.999)
    else:
        x0 = np.clip(guess, -1 + 1e-15, 1 - 1e-15)
    y = np.clip(np.arctanh(x0), lo, hi)
    for _ in range(maxit):
        t = np.tanh(y)
        res = t + a * y - rhs
        active = np.abs(res) > tol
        if not np.any(active):
            break
        pos = res > 0
        hi = np.where(pos, y, hi)
        lo = np.where(pos, lo, y)
        y_new = y - res / (1.0 - t * t + a)
        out = (y_new < lo) | (y_new > hi)
        y = np.where(active, np.where(out, 0.5 * (lo + hi), y_new), y)
    else:
        t = np.tanh(y)
        res = np.abs(t + a * y - rhs)
        if np.max(res) > tol:
            node = np.unravel_index(int(np.argmax(res)), rhs.shape)
            raise NewtonError(
                f"convex solve did not converge in {maxit} iterations at node {node}: "
                f"rhs={rhs[node]!r}, residual={res[node]:.3e}"
            )
    x = np.tanh(y)
    # rounding can saturate tanh at exactly +-1 for huge y
    return np.clip(x, -np.nextafter(1.0, 0.0), np.nextafter(1.0, 0.0))


def step(state: CoupledState, increments, model: Model,
         nudge: NudgeConfig | None = None, reference_u: SolenoidalField | None = None) -> CoupledState:
    """
    Advance ``state`` by one time step of size ``model.stepper.dt``.  For a
    nudged step, ``reference_u`` is the reference velocity already advanced
    to the new time level with the same increments.
    """
    g = model.grid
    cfg = model.stepper
    dt = cfg.dt
    pot = model.potential
    dW1, dW2 = increments
    m = g.dealias_mask

    uh = state.u.hat
    phi = state.phi.values
    phi_hat = g.fft(phi)

    rhs_u = uh.copy()
    psi_hat = phi_hat * (1.0 + dt * pot.concave_coeff)
    if cfg.nonlinear:
        w_hat = cfg.beta * g.lam * phi_hat + g.fft(pot.F_prime(phi))
        kor, gphi = _korteweg_hat(g, w_hat, phi_hat)
        rhs_u += dt * (kor - _nonlinearity_hat(g, uh))
        u_phys = g.ifft(uh * m)
        adv = g.fft(u_phys[0] * gphi[0] + u_phys[1] * gphi[1]) * m
        psi_hat -= dt * adv
    if np.any(dW1):
        rhs_u += model.vnoise.apply_hat(dW1)
    if np.any(dW2):
        psi_hat += g.fft(model.pnoise.apply_values(phi, dW2))

    u_new = rhs_u * model._inv_visc * m
    if nudge is not None and nudge.N > 0 and nudge.eta and nudge.eta > 0:
        if reference_u is None:
            raise ValueError("nudged step needs a reference velocity")
        _check_grid(g, reference_u.grid)
        N, eta = nudge.N, nudge.eta
        lam = g.mode_lam[:N]
        # implicit relaxation toward the reference at the new time level,
        # written as a correction of the plain update so that it vanishes
        # exactly when the two coincide
        plain = g.stokes_coefficients(u_new)[:N]
        a_ref = reference_u.coefficients()[:N]
        corr = eta * dt * (a_ref - plain) / (1.0 + cfg.nu * dt * lam + eta * dt)
        u_new = u_new + g.from_stokes_coefficients(corr)

    rhs_phi = g.ifft(psi_hat * model._inv_diff)
    phi_new = solve_convex(rhs_phi, dt * pot.convex_coeff, cfg.newton_tol, cfg.newton_max, guess=phi)
    return CoupledState(SolenoidalField(g, u_new), ScalarField(g, phi_new), state.t + dt)


def n_steps_for(horizon: float, dt: float) -> int:
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(horizon, 1.0):
        raise ValueError(f"dt={dt} does not divide horizon={horizon}")
    return n


@dataclass
class Trajectory:
    """Handle returned by :func:`run`."""

    final: CoupledState
    n_steps: int
    snapshots: list = field(default_factory=list)


def run(initial: CoupledState, horizon: float, model: Model, path: NoisePath | None,
        callbacks: Iterable[Callable[[int, CoupledState], None]] = (),
        snapshot_stride: int = 0, energy_guard: float = 1e6) -> Trajectory:
    """
    Step from ``initial`` to ``initial.t + horizon``.  Each callback is called
    as ``cb(n, state)`` after step ``n`` (1-based).  Every ``snapshot_stride``
    steps the state is kept in ``Trajectory.snapshots``.  A total energy above
    ``energy_guard * max(E0, 1)`` raises :class:`InstabilityError`.
    """
    from .diagnostics import total_energy

    n = n_steps_for(horizon, model.stepper.dt)
    callbacks = list(callbacks)
    beta = model.stepper.beta
    e_cap = energy_guard * max(total_energy(initial, model.potential, beta), 1.0)
    state = initial
    snaps = [initial] if snapshot_stride else []
    for i in range(n):
        state = step(state, model.increments(path, i), model)
        if energy_guard:
            e = total_energy(state, model.potential, beta)
            if not e <= e_cap:
                raise InstabilityError(f"energy {e:.3e} exceeded {e_cap:.3e} at step {i + 1} (t={state.t:.6g})")
        for cb in callbacks:
            cb(i + 1, state)
        if snapshot_stride and (i + 1) % snapshot_stride == 0:
            snaps.append(state)
    return Trajectory(state, n, snaps)
