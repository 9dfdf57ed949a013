"""
Per-trajectory diagnostics: free energy, the Lambda process with its
stopping time, the Foias-Prodi threshold condition, synchronization error,
the Girsanov shift of a nudged pair, and running a priori monitors.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .dynamics import CoupledState
from .noise import VelocityNoise
from .potential import f_second_Lgamma_norm, psi
from .spectral import SpectralGrid, SolenoidalField, _check_grid, project_low_modes

__all__ = [
    "EnergyRecord",
    "energy",
    "total_energy",
    "ConstantsTable",
    "measure_embedding_constants",
    "LambdaLedger",
    "update_lambda",
    "StoppingState",
    "stopping_time",
    "check_condition",
    "sync_error",
    "GirsanovAccumulator",
    "girsanov_shift",
    "MomentMonitor",
    "moment_monitors",
]


# -- energy -----------------------------------------------------------------

@dataclass(frozen=True)
class EnergyRecord:
    t: float
    kinetic: float
    interface: float
    potential: float
    total: float
    # nu|grad u|^2 + beta^2 |Lap phi|^2 + |F'(phi)|^2
    dissipation: float
    # nu|grad u|^2 + |w|^2, the exact noise-free rate of energy loss
    w_dissipation: float


def _sums(grid: SpectralGrid, hat: np.ndarray):
    a2 = np.abs(hat) ** 2
    if a2.ndim == 3:
        a2 = a2.sum(axis=0)
    s = grid.area / grid.npts**2
    return float(np.sum(a2) * s), float(np.sum(grid.lam * a2) * s), float(np.sum(grid.lam**2 * a2) * s)


def total_energy(state: CoupledState, potential, beta: float) -> float:
    g = state.grid
    ku = _sums(g, state.u.hat)[0]
    gp = _sums(g, g.fft(state.phi.values))[1]
    return 0.5 * ku + 0.5 * beta * gp + float(np.sum(potential.F(state.phi.values)) * g.cell)


def energy(state: CoupledState, potential, beta: float, nu: float = 0.0) -> EnergyRecord:
    """Free energy split and dissipation integrands of ``state``."""
    g = state.grid
    h_u, v_u, _ = _sums(g, state.u.hat)
    phi = state.phi.values
    ph = g.fft(phi)
    _, v_p, l_p = _sums(g, ph)
    fp = potential.F_prime(phi)
    fp2 = float(np.sum(fp**2) * g.cell)
    w = g.ifft(beta * g.lam * ph) + fp
    w2 = float(np.sum(w**2) * g.cell)
    kin = 0.5 * h_u
    inter = 0.5 * beta * v_p
    pot = float(np.sum(potential.F(phi)) * g.cell)
    return EnergyRecord(
        t=state.t,
        kinetic=kin,
        interface=inter,
        potential=pot,
        total=kin + inter + pot,
        dissipation=nu * v_u + beta**2 * l_p + fp2,
        w_dissipation=nu * v_u + w2,
    )


# -- constants ----------------------------------------------------------------

@dataclass(frozen=True)
class ConstantsTable:
    """
    Embedding constants and the derived coefficients of the Lambda process.
    ``K_L``, ``K_GN``, ``K_Delta`` and ``K_q`` (keyed by exponent) are
    measured or supplied; ``c1..c3`` and ``C4`` are supplied (default 1).
    """

    K_L: float
    K_GN: float
    K_Delta: float
    K_q: dict
    L_G1: float
    L_G2: float
    gamma: float = 3.0
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    C4: float = 1.0
    measured: tuple = ()

    def __post_init__(self) -> None:
        bad = [f.name for f in fields(self)
               if f.name not in ("K_q", "measured", "L_G1", "L_G2") and not (getattr(self, f.name) > 0)]
        bad += [n for n in ("L_G1", "L_G2") if not getattr(self, n) >= 0]
        if bad:
            raise ValueError(f"constants out of range (K's and c's > 0, L_G >= 0): {', '.join(bad)}")
        object.__setattr__(self, "K_q", {float(k): float(v) for k, v in self.K_q.items()})
        need = (4.0, self.q_F2)
        missing = [q for q in need if q not in self.K_q]
        if missing:
            raise ValueError(f"K_q missing exponents {missing}")

    @property
    def q_F2(self) -> float:
        return 2 * self.gamma / (self.gamma - 2)

    @property
    def C_G(self) -> float:
        return 2 * max(self.L_G1, self.L_G2)

    @property
    def K1(self) -> float:
        return max(27 * self.K_L**8, 1024 * self.K_L**8 * self.K_Delta**2)

    @property
    def K2(self) -> float:
        return 256 * self.K_L**4 * self.K_GN**4 * self.K_Delta**4

    @property
    def K3(self) -> float:
        return 4 * self.K_q[self.q_F2] ** 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["K_q"] = {repr(k): v for k, v in self.K_q.items()}
        d["measured"] = list(self.measured)
        d.update(C_G=self.C_G, K1=self.K1, K2=self.K2, K3=self.K3)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConstantsTable":
        keys = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in keys}
        kw["K_q"] = {float(k): float(v) for k, v in d["K_q"].items()}
        kw["measured"] = tuple(d.get("measured", ()))
        return cls(**kw)

    def with_overrides(self, **kw) -> "ConstantsTable":
        return replace(self, **kw)


def _random_smooth_fields(grid: SpectralGrid, n: int, rng: np.random.Generator, decay: float):
    shell = np.sqrt(grid.lam)
    k0 = rng.uniform(1.0, max(2.0, 0.5 * np.sqrt(grid.lam[grid.dealias_mask].max())), size=n)
    for i in range(n):
        amp = np.where(grid.lam > 0, (1 + (shell / k0[i]) ** 2) ** (-decay / 2), 0.0) * grid.dealias_mask
        z = amp * (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
        f = grid.ifft(z)
        yield f / max(np.max(np.abs(f)), 1e-300)


def measure_embedding_constants(grid: SpectralGrid, n_fields: int = 1000, seed: int = 0,
                                qs=(3.0, 4.0, 6.0)) -> dict:
    """
    Maxima over random smooth zero-mean fields of the ratios defining the
    embedding constants:

    * ``K_L``:   ||f||_L4 / (||f|| ||grad f||)^(1/2)
    * ``K_GN``:  ||grad f||_L4 / (||f||_inf ||Lap f||)^(1/2)
    * ``K_Delta``: (||grad f||^2 + ||D^2 f||^2)^(1/2) / ||Lap f||
    * ``K_q``:   ||f||_Lq / ||grad f||
    """
    rng = np.random.default_rng(seed)
    out = {"K_L": 0.0, "K_GN": 0.0, "K_Delta": 0.0, "K_q": {float(q): 0.0 for q in qs}}
    dx, dy = grid.dkx, grid.dky
    for f in _random_smooth_fields(grid, n_fields, rng, decay=rng.uniform(2.0, 4.0)):
        fh = grid.fft(f)
        h, v1, v2 = (math.sqrt(x) for x in _sums(grid, fh))
        if v1 == 0:
            continue
        gx, gy = grid.ifft(1j * dx * fh), grid.ifft(1j * dy * fh)
        hxx, hyy, hxy = grid.ifft(-dx * dx * fh), grid.ifft(-dy * dy * fh), grid.ifft(-dx * dy * fh)
        d2 = math.sqrt(float(np.sum(hxx**2 + hyy**2 + 2 * hxy**2) * grid.cell))
        l4 = float(np.sum(f**4) * grid.cell) ** 0.25
        gl4 = float(np.sum((gx**2 + gy**2) ** 2) * grid.cell) ** 0.25
        out["K_L"] = max(out["K_L"], l4 / math.sqrt(h * v1))
        out["K_GN"] = max(out["K_GN"], gl4 / math.sqrt(np.max(np.abs(f)) * v2))
        out["K_Delta"] = max(out["K_Delta"], math.sqrt(v1**2 + d2**2) / v2)
        for q in out["K_q"]:
            lq = float(np.sum(np.abs(f) ** q) * grid.cell) ** (1 / q)
            out["K_q"][q] = max(out["K_q"][q], lq / v1)
    return out


def default_constants(grid: SpectralGrid, L_G1: float, L_G2: float, gamma: float = 3.0,
                      n_fields: int = 1000, seed: int = 0, **overrides) -> ConstantsTable:
    """Measured embedding constants plus supplied (default 1) lemma constants."""
    q2 = 2 * gamma / (gamma - 2)
    meas = measure_embedding_constants(grid, n_fields, seed, qs=sorted({3.0, 4.0, q2}))
    base = dict(K_L=meas["K_L"], K_GN=meas["K_GN"], K_Delta=meas["K_Delta"], K_q=meas["K_q"],
                L_G1=L_G1, L_G2=L_G2, gamma=gamma,
                measured=("K_L", "K_GN", "K_Delta", "K_q"))
    base.update(overrides)
    return ConstantsTable(**base)


# -- Lambda process and stopping time ----------------------------------------

def rate_floor(nu: float, beta: float, lambda_N: float, K_Delta: float) -> float:
    """min{nu*lambda_N, beta^2/K_Delta^2}."""
    return min(nu * lambda_N, beta**2 / K_Delta**2)


@dataclass
class LambdaLedger:
    """Running integrals entering Lambda(t), accumulated by the trapezoidal rule."""

    nu: float
    beta: float
    lambda_N: float
    constants: ConstantsTable
    t: float = 0.0
    I_uu: float = 0.0      # int |u|^2 |u|_V^2
    I_phi_V2: float = 0.0  # int |phi|_V2^2
    I_F2: float = 0.0      # int |F''(phi)|_Lgamma^2
    I_F2_nud: float = 0.0  # int |F''(phi_nudged)|_Lgamma^2
    value: float = 0.0
    _last: tuple | None = field(default=None, repr=False)

    @property
    def drift(self) -> float:
        c = self.constants
        return 0.5 * rate_floor(self.nu, self.beta, self.lambda_N, c.K_Delta) - c.C_G

    @property
    def coef_uu(self) -> float:
        return self.constants.K1 / min(self.nu, self.beta) ** 3

    @property
    def coef_phi(self) -> float:
        c = self.constants
        return c.L_G2 * c.C4**4 + c.K2 / self.nu * max(1.0, self.beta / self.nu)

    @property
    def coef_F2(self) -> float:
        return self.constants.K3 / self.beta

    def recompute(self) -> float:
        return (self.drift * self.t - self.coef_uu * self.I_uu - self.coef_phi * self.I_phi_V2
                - self.coef_F2 * (self.I_F2 + self.I_F2_nud))


def lambda_integrands(state: CoupledState, nudged_phi: np.ndarray, potential, gamma: float) -> tuple:
    g = state.grid
    h, v, _ = _sums(g, state.u.hat)
    _, _, v2 = _sums(g, g.fft(state.phi.values))
    f2 = f_second_Lgamma_norm(potential, state.phi.values, gamma, g.cell) ** 2
    f2n = f_second_Lgamma_norm(potential, nudged_phi, gamma, g.cell) ** 2
    return (h * v, v2, f2, f2n)


def update_lambda(ledger: LambdaLedger, state: CoupledState, nudged_state: CoupledState,
                  dt: float, potential) -> LambdaLedger:
    """
    Advance the ledger from ``state.t - dt`` to ``state.t``.  The first call
    also records the integrands at the previous time, taken from the same
    states when no history exists (i.e. the ledger starts at the initial
    state with ``dt = 0``).
    """
    if ledger.constants is None:
        raise ValueError("constants table incomplete")
    cur = lambda_integrands(state, nudged_state.phi.values, potential, ledger.constants.gamma)
    if ledger._last is None:
        if not math.isclose(state.t, ledger.t, rel_tol=0, abs_tol=1e-12) and dt > 0:
            raise ValueError(f"ledger at t={ledger.t} cannot start from state at t={state.t}")
        ledger._last = cur
        ledger.value = ledger.recompute()
        return ledger
    if not math.isclose(ledger.t + dt, state.t, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"ledger time {ledger.t} + dt {dt} != state time {state.t}")
    prev = ledger._last
    trap = [0.5 * dt * (a + b) for a, b in zip(prev, cur)]
    ledger.I_uu += trap[0]
    ledger.I_phi_V2 += trap[1]
    ledger.I_F2 += trap[2]
    ledger.I_F2_nud += trap[3]
    ledger.t = state.t
    ledger._last = cur
    ledger.value = ledger.recompute()
    return ledger


INF = math.inf


@dataclass
class StoppingState:
    R: float
    eps: float
    hit_time: float = INF

    @property
    def hit(self) -> bool:
        return self.hit_time < INF


def stopping_excess(ledger: LambdaLedger, eps: float) -> float:
    """(1/4) min{...} t - Lambda(t) - eps."""
    c = ledger.constants
    return 0.25 * rate_floor(ledger.nu, ledger.beta, ledger.lambda_N, c.K_Delta) * ledger.t - ledger.value - eps


def stopping_time(ledger: LambdaLedger, stopping: StoppingState) -> StoppingState:
    if stopping.hit:
        return stopping
    if stopping_excess(ledger, stopping.eps) >= stopping.R:
        stopping.hit_time = ledger.t
    return stopping


def check_condition(nu: float, beta: float, lambda_N: float, constants: ConstantsTable):
    """
    Left side and right side of the joint threshold condition on (N, beta).
    Returns ``(holds, lhs, rhs)``.
    """
    c = constants
    if any(x is None for x in (c.c1, c.c2, c.c3)):
        raise ValueError("lemma constants c1, c2, c3 required")
    K4 = c.K_q[4.0]
    drift = 0.25 * rate_floor(nu, beta, lambda_N, c.K_Delta) - c.C_G
    r1 = nu * min(nu, beta) ** 3 / (c.K1 * (1 + nu**-2))
    r2 = beta**2 * nu**2 / (c.L_G2 * K4**4 * nu**2 + c.K2 * max(nu, beta))
    r3 = beta / c.K3
    lhs = drift * min(r1, r2, r3)
    rhs = 3 * max(c.c1 + 2, c.c2 + 2, 2 * (c.c3 + 1))
    return lhs >= rhs, lhs, rhs


def epsilon_from_initial(x0: CoupledState, y0: CoupledState, nu: float, beta: float,
                         beta_bar: float, constants: ConstantsTable, s0: int) -> float:
    """
    Offset epsilon built from the initial data of the free (``x0``) and
    nudged (``y0``) systems, following the three-branch maximum used for the
    stopping-time tail estimate.
    """
    c = constants
    g = x0.grid
    hx = _sums(g, x0.u.hat)[0]
    ph = g.fft(x0.phi.values)
    hy, gy, _ = _sums(g, ph)
    e1 = 3 * c.K1 / (nu * min(nu, beta_bar) ** 3) * (c.c1 + 2) * (1 + hx**2 + hy**2 + beta**2 * gy**2)
    e2 = (3 * (c.L_G2 * c.C4**4 * nu**2 + c.K2 * max(nu, beta)) / (beta**2 * nu**2)
          * (c.c2 + 2) * (1 + hx + hy + beta * gy))
    bar = float(np.sum(psi(s0, x0.phi.values)) * g.cell + np.sum(psi(s0, y0.phi.values)) * g.cell)
    e3 = 6 * c.K3 / beta_bar * (c.c3 + 1) * (1 + bar)
    return max(e1, e2, e3)


# -- pair diagnostics -------------------------------------------------------

def sync_error(a: CoupledState, b: CoupledState, beta: float) -> float:
    """beta ||grad(phi_a - phi_b)||^2 + ||u_a - u_b||^2."""
    _check_grid(a.grid, b.grid)
    g = a.grid
    du = _sums(g, a.u.hat - b.u.hat)[0]
    dp = _sums(g, g.fft(a.phi.values - b.phi.values))[1]
    return beta * dp + du


def girsanov_shift(u: SolenoidalField, u_nudged: SolenoidalField, eta: float, N: int,
                   vnoise: VelocityNoise) -> np.ndarray:
    """Channel vector h = -eta G1^{-1} P_N(u_nudged - u)."""
    if N > vnoise.M:
        raise ValueError(f"N={N} exceeds non-degenerate mode count M={vnoise.M}")
    return -eta * vnoise.inverse(u_nudged - u, N)


@dataclass
class GirsanovAccumulator:
    """Trapezoidal running value of int ||h(s)||^2 ds."""

    eta: float
    N: int
    vnoise: VelocityNoise
    t: float = 0.0
    cumulative: float = 0.0
    _last: float | None = None

    def update(self, t: float, u: SolenoidalField, u_nudged: SolenoidalField) -> np.ndarray:
        h = girsanov_shift(u, u_nudged, self.eta, self.N, self.vnoise)
        n2 = float(h @ h)
        if self._last is not None:
            self.cumulative += 0.5 * (t - self.t) * (self._last + n2)
        self.t, self._last = t, n2
        return h


# -- a priori monitors -----------------------------------------------------

MONITOR_FIELDS = (
    "phi_H", "phi_V1", "u_H",
    "int_u_V", "int_lap_phi", "int_Fp", "int_uu", "int_phi_V2", "int_F2", "int_psi_s0p1",
    "psi_s0",
)


@dataclass
class MomentMonitor:
    """
    Pointwise norms and running time integrals along a trajectory, sampled
    every step and integrated by the trapezoidal rule.
    """

    potential: object
    gamma: float = 3.0
    s0: int = 2
    t: float = 0.0
    integrals: dict = field(default_factory=lambda: {k: 0.0 for k in MONITOR_FIELDS if k.startswith("int_")})
    series: list = field(default_factory=list)
    _last: dict | None = None

    def _point(self, state: CoupledState) -> dict:
        g = state.grid
        hu, vu, _ = _sums(g, state.u.hat)
        phi = state.phi.values
        hp, vp, lp = _sums(g, g.fft(phi))
        return dict(
            phi_H=math.sqrt(hp), phi_V1=math.sqrt(vp), u_H=math.sqrt(hu),
            int_u_V=vu, int_lap_phi=lp,
            int_Fp=float(np.sum(self.potential.F_prime(phi) ** 2) * g.cell),
            int_uu=hu * vu, int_phi_V2=lp,
            int_F2=f_second_Lgamma_norm(self.potential, phi, self.gamma, g.cell) ** 2,
            int_psi_s0p1=float(np.sum(psi(self.s0 + 1, phi)) * g.cell),
            psi_s0=float(np.sum(psi(self.s0, phi)) * g.cell),
        )

    def observe(self, state: CoupledState) -> dict:
        p = self._point(state)
        if self._last is not None:
            dt = state.t - self.t
            for k in self.integrals:
                self.integrals[k] += 0.5 * dt * (self._last[k] + p[k])
        self._last, self.t = p, state.t
        row = {"t": state.t, "phi_H": p["phi_H"], "phi_V1": p["phi_V1"], "u_H": p["u_H"],
               "psi_s0": p["psi_s0"], **self.integrals}
        self.series.append(row)
        return row


def moment_monitors(states, potential, gamma: float = 3.0, s0: int = 2) -> list[dict]:
    """Monitor rows for a sequence of states (trapezoidal integrals over their times)."""
    mon = MomentMonitor(potential, gamma, s0)
    for s in states:
        mon.observe(s)
    return mon.series


def low_mode_difference(u: SolenoidalField, v: SolenoidalField, N: int) -> SolenoidalField:
    return project_low_modes(u - v, N)[0]
