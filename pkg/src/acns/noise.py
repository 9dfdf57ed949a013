"""
Wiener increments and the two noise operators.

Velocity noise is additive and diagonal on the ranked Stokes modes,
``G1 dW1 = sum_k sigma_k e_k dbeta_k``.  Phase noise is multiplicative and
degenerate at the pure phases, ``G2(phi) dW2 = sum_k g_k(phi) dbeta_k`` with
``g_k(r) = gamma_k T_k(r) (1 - r^2)^q``.

Increments come from Philox streams keyed by ``(seed, stream, channel set)``
with the step index in the high counter word, so any step of any trajectory
can be regenerated independently of how an ensemble is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.chebyshev import chebder, chebval

from .potential import guard_phase, psi
from .spectral import ScalarField, SolenoidalField, SpectralGrid, _check_grid

__all__ = [
    "NoisePath",
    "VelocityNoise",
    "PhaseNoise",
    "sample_increments",
]

_W1, _W2 = 1, 2


@dataclass(frozen=True)
class NoisePath:
    """Identifies one realisation of (W1, W2)."""

    seed: int
    stream: int = 0

    def _key(self, which: int) -> np.ndarray:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream), which))
        return ss.generate_state(2, dtype=np.uint64)

    def normals(self, which: int, step: int, size: int) -> np.ndarray:
        if size == 0:
            return np.zeros(0)
        bitgen = np.random.Philox(key=self._key(which), counter=[0, 0, 0, int(step)])
        return np.random.Generator(bitgen).standard_normal(size)


def sample_increments(path: NoisePath, step: int, dt: float, n1: int, n2: int):
    """(dW1, dW2): i.i.d. N(0, dt) increments for ``n1`` velocity and ``n2`` phase channels."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    sq = np.sqrt(dt)
    return sq * path.normals(_W1, step, n1), sq * path.normals(_W2, step, n2)


@dataclass(frozen=True, eq=False)
class VelocityNoise:
    """
    ``sigma_k = sigma0 * lambda_k^(-a)`` on the first ``K_active`` Stokes
    modes, zero beyond.  ``M`` is the count of low modes on which the right
    inverse of G1 is used.
    """

    grid: SpectralGrid
    sigma0: float = 0.5
    decay_a: float = 1.0
    M: int = 16
    K_active: int = 16
    sigma: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.sigma0 < 0:
            raise ValueError(f"sigma0 must be >= 0, got {self.sigma0}")
        if self.decay_a < 1:
            raise ValueError(f"decay exponent must be >= 1, got {self.decay_a}")
        if not 0 <= self.K_active <= self.grid.n_modes:
            raise ValueError(f"K_active={self.K_active} outside 0..{self.grid.n_modes}")
        if not 0 <= self.M <= self.K_active:
            raise ValueError(f"M={self.M} must satisfy 0 <= M <= K_active={self.K_active}")
        lam = self.grid.mode_lam[: self.K_active]
        object.__setattr__(self, "sigma", self.sigma0 * lam ** (-self.decay_a))

    @classmethod
    def from_amplitudes(cls, grid: SpectralGrid, sigma, M: int) -> "VelocityNoise":
        """Arbitrary nonnegative per-mode amplitudes (used by tests)."""
        sigma = np.asarray(sigma, dtype=float)
        obj = cls(grid, sigma0=0.0, M=min(M, sigma.size), K_active=sigma.size)
        object.__setattr__(obj, "sigma", sigma.copy())
        if M > 0 and np.any(sigma[:M] <= 0):
            raise ValueError("non-degenerate modes need sigma_k > 0 for k <= M")
        return obj

    @property
    def n_channels(self) -> int:
        return self.K_active

    @property
    def L_G1(self) -> float:
        """Squared Hilbert-Schmidt norm of G1 (constant for additive noise)."""
        return float(np.sum(self.sigma**2))

    def apply(self, u: SolenoidalField | None, dW1: np.ndarray) -> SolenoidalField:
        """sum_k sigma_k e_k dW1_k.  ``u`` is unused: the noise is additive."""
        if u is not None:
            _check_grid(self.grid, u.grid)
        return SolenoidalField(self.grid, self.apply_hat(dW1))

    def apply_hat(self, dW1: np.ndarray) -> np.ndarray:
        return self.grid.from_stokes_coefficients(self.sigma * np.asarray(dW1))

    def inverse(self, w: SolenoidalField, N: int) -> np.ndarray:
        """Channel vector h with G1 h = P_N w, i.e. h_k = <w, e_k>/sigma_k for k <= N."""
        if N > self.M:
            raise ValueError(f"N={N} exceeds the non-degenerate mode count M={self.M}")
        if N < 0:
            raise ValueError(f"N must be >= 0, got {N}")
        h = np.zeros(self.K_active)
        if N:
            h[:N] = w.coefficients()[:N] / self.sigma[:N]
        return h

    def inverse_norm_bound(self) -> float:
        """sup_v ||G1^{-1}(v)|| = 1 / min_{k<=M} sigma_k."""
        if self.M == 0:
            return 0.0
        return float(1.0 / np.min(self.sigma[: self.M]))


@dataclass(frozen=True, eq=False)
class PhaseNoise:
    """
    Degenerate phase noise with ``g_k(r) = gamma_k T_k(r) (1 - r^2)^q``.

    The factor ``(1 - r^2)^q`` is kept separate from the Chebyshev part: an
    expanded monomial form cancels catastrophically near the pure phases.
    """

    gamma_k: tuple = (0.1, 0.1, 0.1, 0.1)
    q: int = 3

    def __post_init__(self) -> None:
        if int(self.q) != self.q or self.q < 1:
            raise ValueError(f"degeneracy exponent q must be a positive integer, got {self.q!r}")
        object.__setattr__(self, "gamma_k", tuple(float(g) for g in self.gamma_k))
        object.__setattr__(self, "q", int(self.q))

    @property
    def n_channels(self) -> int:
        return len(self.gamma_k)

    def _unit(self, k: int) -> np.ndarray:
        c = np.zeros(k + 1)
        c[k] = self.gamma_k[k]
        return c

    def g(self, k: int, r):
        r = np.asarray(r, dtype=float)
        return chebval(r, self._unit(k)) * (1.0 - r * r) ** self.q

    def g_prime(self, k: int, r):
        r = np.asarray(r, dtype=float)
        c = self._unit(k)
        w = 1.0 - r * r
        return chebval(r, chebder(c)) * w**self.q - 2 * self.q * r * chebval(r, c) * w ** (self.q - 1)

    def apply_values(self, phi: np.ndarray, dW2: np.ndarray) -> np.ndarray:
        if not self.gamma_k:
            return np.zeros_like(phi)
        c = np.asarray(self.gamma_k) * np.asarray(dW2)
        return chebval(phi, c) * (1.0 - phi * phi) ** self.q

    def apply(self, phi: ScalarField, dW2: np.ndarray) -> ScalarField:
        """Pointwise sum_k g_k(phi(x)) dW2_k."""
        vals = phi.values
        if np.any(~(np.abs(vals) <= 1.0)):
            guard_phase(vals)
        return ScalarField(phi.grid, self.apply_values(vals, dW2))

    def hs_norm_sq(self, phi: ScalarField) -> float:
        """||G2(phi)||^2_HS = sum_k ||g_k(phi)||_H^2."""
        g = phi.grid
        return float(sum(np.sum(self.g(k, phi.values) ** 2) for k in range(self.n_channels)) * g.cell)

    def constant_terms(self, potential, s0: int, npts: int = 10_000) -> dict:
        """
        Per-channel sup norms entering L_G2, evaluated on an interior grid of
        (-1, 1): ``W1inf`` = ||g||_inf + ||g'||_inf, ``F2g2`` = ||F'' g^2||_inf,
        ``F1g`` = ||F' g||_inf, ``gpsi`` = ||g Psi_{s0+1}||_inf.
        """
        r = np.cos(np.pi * (np.arange(npts) + 0.5) / npts)
        fpp = potential.F_second(r)
        fp = potential.F_prime(r)
        ps = psi(s0 + 1, r)
        rows = []
        for k in range(self.n_channels):
            g = self.g(k, r)
            w1 = np.max(np.abs(g)) + np.max(np.abs(self.g_prime(k, r)))
            rows.append(
                dict(
                    W1inf=float(w1),
                    F2g2=float(np.max(np.abs(fpp * g * g))),
                    F1g=float(np.max(np.abs(fp * g))),
                    gpsi=float(np.max(np.abs(g * ps))),
                )
            )
        return {"channels": rows}

    def L_G2(self, potential, s0: int, npts: int = 10_000) -> float:
        rows = self.constant_terms(potential, s0, npts)["channels"]
        return float(sum(c["W1inf"] ** 2 + c["F2g2"] + c["F1g"] ** 2 + c["gpsi"] ** 2 for c in rows))
