"""
Pseudo-spectral machinery on a doubly periodic box.

Arrays are indexed ``[i, j]`` with ``i`` along x (``nx`` points) and ``j``
along y (``ny`` points).  Spectral arrays use the unnormalized ``fft2``
convention, so ``f(x) = (1/n) sum_k fhat(k) exp(i k.x)`` with ``n = nx*ny``.

Solenoidal fields are expanded in real Stokes modes

    e_{k,cos}(x) = c * tau_k * cos(k.x),   e_{k,sin}(x) = c * tau_k * sin(k.x),

with ``tau_k = k_perp/|k|`` and ``c = sqrt(2/|O|)``, one pair per retained
wavevector in the upper half plane.  Modes are ranked by nondecreasing
eigenvalue ``lambda_k = |k|^2``; ties are broken lexicographically on the
integer frequencies ``(k1, k2)`` and then cos before sin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridMismatchError",
    "SpectralGrid",
    "SolenoidalField",
    "ScalarField",
    "build_grid",
    "leray_project",
    "project_low_modes",
    "advect_scalar",
    "ns_nonlinearity",
    "norms",
    "FieldNorms",
]


class GridMismatchError(ValueError):
    """Raised when two fields live on different grids."""


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """
    Wavevectors, Stokes eigenvalues, dealiasing mask and the ranked Stokes
    mode table for an ``nx`` by ``ny`` periodic grid of size ``Lx`` by ``Ly``.
    """

    nx: int
    ny: int
    Lx: float = 2 * np.pi
    Ly: float = 2 * np.pi
    # derived, filled in __post_init__
    k1: np.ndarray = field(init=False, repr=False)
    k2: np.ndarray = field(init=False, repr=False)
    kx: np.ndarray = field(init=False, repr=False)
    ky: np.ndarray = field(init=False, repr=False)
    lam: np.ndarray = field(init=False, repr=False)
    dealias_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 8, got {n!r}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError(f"box lengths must be positive, got Lx={self.Lx}, Ly={self.Ly}")
        setattr_ = object.__setattr__
        i1 = np.fft.fftfreq(self.nx, d=1.0 / self.nx).round().astype(int)
        i2 = np.fft.fftfreq(self.ny, d=1.0 / self.ny).round().astype(int)
        k1, k2 = np.meshgrid(i1, i2, indexing="ij")
        kx = 2 * np.pi / self.Lx * k1
        ky = 2 * np.pi / self.Ly * k2
        setattr_(self, "k1", k1)
        setattr_(self, "k2", k2)
        setattr_(self, "kx", kx)
        setattr_(self, "ky", ky)
        setattr_(self, "lam", kx**2 + ky**2)
        # odd derivatives drop the Nyquist row/column so real fields stay real
        dkx = np.where(np.abs(k1) == self.nx // 2, 0.0, kx)
        dky = np.where(np.abs(k2) == self.ny // 2, 0.0, ky)
        setattr_(self, "dkx", dkx)
        setattr_(self, "dky", dky)
        dk2 = dkx**2 + dky**2
        setattr_(self, "dk2_safe", np.where(dk2 == 0, 1.0, dk2))
        mask = (3 * np.abs(k1) < self.nx) & (3 * np.abs(k2) < self.ny)
        setattr_(self, "dealias_mask", mask)
        self._build_mode_table()

    def _build_mode_table(self) -> None:
        k1 = self.k1[self.dealias_mask]
        k2 = self.k2[self.dealias_mask]
        upper = (k1 > 0) | ((k1 == 0) & (k2 > 0))
        k1, k2 = k1[upper], k2[upper]
        lam = (2 * np.pi / self.Lx * k1) ** 2 + (2 * np.pi / self.Ly * k2) ** 2
        # lexsort: last key is primary
        order = np.lexsort((k2, k1, lam))
        k1, k2, lam = k1[order], k2[order], lam[order]
        n_vec = k1.size
        mk1 = np.repeat(k1, 2)
        mk2 = np.repeat(k2, 2)
        part = np.tile([0, 1], n_vec)
        mlam = np.repeat(lam, 2)
        ix, iy = mk1 % self.nx, mk2 % self.ny
        jx, jy = (-mk1) % self.nx, (-mk2) % self.ny
        kx = 2 * np.pi / self.Lx * mk1
        ky = 2 * np.pi / self.Ly * mk2
        kn = np.sqrt(kx**2 + ky**2)
        tau = np.stack([-ky / kn, kx / kn])
        s = object.__setattr__
        s(self, "mode_k", np.stack([mk1, mk2], axis=1))
        s(self, "mode_part", part)
        s(self, "mode_lam", mlam)
        s(self, "_mode_pos", (ix, iy))
        s(self, "_mode_neg", (jx, jy))
        s(self, "_mode_tau", tau)

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def npts(self) -> int:
        return self.nx * self.ny

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    @property
    def cell(self) -> float:
        return self.area / self.npts

    @property
    def n_modes(self) -> int:
        """Number of real solenoidal Stokes modes retained by the dealias mask."""
        return self.mode_lam.size

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.nx) * (self.Lx / self.nx)
        y = np.arange(self.ny) * (self.Ly / self.ny)
        return np.meshgrid(x, y, indexing="ij")

    def same_as(self, other: "SpectralGrid") -> bool:
        return (self is other) or (
            self.nx == other.nx and self.ny == other.ny
            and self.Lx == other.Lx and self.Ly == other.Ly
        )

    def eigenvalue(self, n: int) -> float:
        """lambda_n for the n-th ranked Stokes mode (1-based)."""
        if not 1 <= n <= self.n_modes:
            raise ValueError(f"mode index {n} outside 1..{self.n_modes}")
        return float(self.mode_lam[n - 1])

    # -- transforms --------------------------------------------------------
    def fft(self, a: np.ndarray) -> np.ndarray:
        return sfft.fft2(a, axes=(-2, -1))

    def ifft(self, a: np.ndarray) -> np.ndarray:
        return sfft.ifft2(a, axes=(-2, -1)).real

    def grad_hat(self, fhat: np.ndarray) -> np.ndarray:
        return np.stack([1j * self.dkx * fhat, 1j * self.dky * fhat])

    def div_hat(self, vhat: np.ndarray) -> np.ndarray:
        return 1j * (self.dkx * vhat[0] + self.dky * vhat[1])

    def leray_hat(self, vhat: np.ndarray) -> np.ndarray:
        kdotv = (self.dkx * vhat[0] + self.dky * vhat[1]) / self.dk2_safe
        out = np.stack([vhat[0] - self.dkx * kdotv, vhat[1] - self.dky * kdotv])
        out[:, 0, 0] = 0.0
        return out

    # -- Stokes mode coordinates -------------------------------------------
    def stokes_coefficients(self, uhat: np.ndarray) -> np.ndarray:
        """Real coordinates <u, e_n> on the ranked Stokes modes."""
        ix, iy = self._mode_pos
        t = self._mode_tau
        z = t[0] * uhat[0][ix, iy] + t[1] * uhat[1][ix, iy]
        scale = np.sqrt(2.0 / self.area) * self.cell
        return scale * np.where(self.mode_part == 0, z.real, -z.imag)

    def from_stokes_coefficients(self, coef: np.ndarray) -> np.ndarray:
        """Spectral velocity for sum_n coef[n] e_n; ``coef`` may be shorter than n_modes."""
        coef = np.asarray(coef, dtype=float)
        m = coef.size
        ix, iy = (a[:m] for a in self._mode_pos)
        jx, jy = (a[:m] for a in self._mode_neg)
        t = self._mode_tau[:, :m]
        part = self.mode_part[:m]
        amp = np.sqrt(2.0 / self.area) * self.npts / 2
        z = amp * np.where(part == 0, coef, -1j * coef)
        out = np.zeros((2, self.nx, self.ny), dtype=complex)
        for c in range(2):
            np.add.at(out[c], (ix, iy), t[c] * z)
            np.add.at(out[c], (jx, jy), t[c] * np.conj(z))
        return out

    def stokes_mode(self, n: int) -> "SolenoidalField":
        """The n-th ranked Stokes eigenfunction (1-based) as a field."""
        coef = np.zeros(n)
        coef[n - 1] = 1.0
        return SolenoidalField(self, self.from_stokes_coefficients(coef))

    # -- quadrature ---------------------------------------------------------
    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """Discrete L2 pairing of physical arrays (vector components summed)."""
        return float(np.sum(a * b) * self.cell)


def build_grid(nx: int, ny: int, Lx: float = 2 * np.pi, Ly: float = 2 * np.pi) -> SpectralGrid:
    return SpectralGrid(nx, ny, Lx, Ly)


@dataclass(frozen=True, eq=False)
class SolenoidalField:
    """Divergence-free, zero-mean velocity held as ``fft2`` coefficients of shape (2, nx, ny)."""

    grid: SpectralGrid
    hat: np.ndarray

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "SolenoidalField":
        return cls(grid, np.zeros((2, grid.nx, grid.ny), dtype=complex))

    @classmethod
    def from_coefficients(cls, grid: SpectralGrid, coef) -> "SolenoidalField":
        return cls(grid, grid.from_stokes_coefficients(coef))

    def physical(self) -> np.ndarray:
        return self.grid.ifft(self.hat)

    def coefficients(self) -> np.ndarray:
        return self.grid.stokes_coefficients(self.hat)

    def divergence(self) -> np.ndarray:
        return self.grid.ifft(self.grid.div_hat(self.hat))

    def __add__(self, other: "SolenoidalField") -> "SolenoidalField":
        _check_grid(self.grid, other.grid)
        return SolenoidalField(self.grid, self.hat + other.hat)

    def __sub__(self, other: "SolenoidalField") -> "SolenoidalField":
        _check_grid(self.grid, other.grid)
        return SolenoidalField(self.grid, self.hat - other.hat)

    def __mul__(self, c: float) -> "SolenoidalField":
        return SolenoidalField(self.grid, self.hat * c)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Physical-space values on the grid."""

    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")

    @classmethod
    def constant(cls, grid: SpectralGrid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    def hat(self) -> np.ndarray:
        return self.grid.fft(self.values)


def _check_grid(a: SpectralGrid, b: SpectralGrid) -> None:
    if not a.same_as(b):
        raise GridMismatchError(
            f"grid mismatch: {a.nx}x{a.ny}/{a.Lx:g}x{a.Ly:g} vs {b.nx}x{b.ny}/{b.Lx:g}x{b.Ly:g}"
        )


def leray_project(grid: SpectralGrid, vector_field: np.ndarray) -> SolenoidalField:
    """Orthogonal projection of a physical vector field (2, nx, ny) onto divergence-free fields."""
    return SolenoidalField(grid, grid.leray_hat(grid.fft(vector_field)))


def project_low_modes(u: SolenoidalField, N: int) -> tuple[SolenoidalField, SolenoidalField]:
    """
    Split ``u`` into its component on the first ``N`` ranked Stokes modes and
    the orthogonal remainder.
    """
    grid = u.grid
    if N < 0 or N > grid.n_modes:
        raise ValueError(f"N={N} outside 0..{grid.n_modes} available Stokes modes")
    if N == 0:
        return SolenoidalField.zeros(grid), u
    coef = grid.stokes_coefficients(u.hat)[:N]
    low = SolenoidalField(grid, grid.from_stokes_coefficients(coef))
    return low, SolenoidalField(grid, u.hat - low.hat)


def _advect_hat(grid: SpectralGrid, u_phys: np.ndarray, phi_hat: np.ndarray) -> np.ndarray:
    ph = phi_hat * grid.dealias_mask
    g = grid.ifft(grid.grad_hat(ph))
    a = u_phys[0] * g[0] + u_phys[1] * g[1]
    return grid.fft(a) * grid.dealias_mask


def advect_scalar(u: SolenoidalField, phi: ScalarField) -> ScalarField:
    """
    Dealiased transport term ``u . grad(phi)``.

    ``u`` is assumed to carry only dealiased modes (the stepper enforces
    this); ``phi`` is truncated to the 2/3 band before the product and the
    result is truncated again, so every grid sum of a triple product is an
    exact quadrature and ``sum(phi * (u . grad phi)) = 0`` up to rounding.
    """
    _check_grid(u.grid, phi.grid)
    grid = u.grid
    uh = u.hat * grid.dealias_mask
    return ScalarField(grid, grid.ifft(_advect_hat(grid, grid.ifft(uh), phi.hat())))


def _nonlinearity_hat(grid: SpectralGrid, uhat: np.ndarray) -> np.ndarray:
    # rotational form: (u.grad)u = omega * u_perp + grad(|u|^2/2); the gradient is removed by Leray
    uh = uhat * grid.dealias_mask
    u = grid.ifft(uh)
    omega = grid.ifft(1j * (grid.dkx * uh[1] - grid.dky * uh[0]))
    f = np.stack([-omega * u[1], omega * u[0]])
    return grid.leray_hat(grid.fft(f) * grid.dealias_mask)


def ns_nonlinearity(u: SolenoidalField) -> SolenoidalField:
    """Leray-projected, dealiased ``(u . grad) u``; ``<B(u,u), u> = 0`` pointwise by construction."""
    return SolenoidalField(u.grid, _nonlinearity_hat(u.grid, u.hat))


@dataclass(frozen=True)
class FieldNorms:
    H: float
    V1: float
    V2: float
    Lq: float
    q: float


def norms(grid: SpectralGrid, f, q: float = 4.0) -> FieldNorms:
    """
    ``H`` (L2), ``V1`` (gradient L2), ``V2`` (Laplacian L2) and ``L^q`` norms of
    a scalar or vector field, given as a ``ScalarField``, ``SolenoidalField``
    or raw physical array.
    """
    if not (np.isfinite(q) and q >= 1):
        raise ValueError(f"unsupported Lebesgue exponent q={q!r}")
    if isinstance(f, SolenoidalField):
        _check_grid(grid, f.grid)
        fhat = f.hat
        phys = f.physical()
    elif isinstance(f, ScalarField):
        _check_grid(grid, f.grid)
        phys = f.values
        fhat = grid.fft(phys)
    else:
        phys = np.asarray(f, dtype=float)
        fhat = grid.fft(phys)
    scale = grid.area / grid.npts**2
    a2 = np.abs(fhat) ** 2
    h = np.sqrt(np.sum(a2) * scale)
    v1 = np.sqrt(np.sum(grid.lam * a2) * scale)
    v2 = np.sqrt(np.sum(grid.lam**2 * a2) * scale)
    mag = np.sqrt(np.sum(phys**2, axis=0)) if phys.ndim == 3 else np.abs(phys)
    lq = (np.sum(mag**q) * grid.cell) ** (1.0 / q)
    return FieldNorms(float(h), float(v1), float(v2), float(lq), float(q))
