"""
Long-time statistics: time averages of observables, moment plateaus,
synchronization of nudged pairs under shared noise, stopping-time tails,
and one-dimensional Wasserstein mixing curves between ensembles.

Ensemble members run through :func:`map_members`.  Member ``i`` draws its
noise from stream ``i`` of the run seed, so results do not depend on how
many worker processes are used.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import (
    ConstantsTable,
    GirsanovAccumulator,
    LambdaLedger,
    StoppingState,
    _sums,
    epsilon_from_initial,
    stopping_excess,
    stopping_time,
    sync_error,
    total_energy,
    update_lambda,
)
from .dynamics import CoupledState, InstabilityError, Model, NudgeConfig, n_steps_for, run, step
from .noise import NoisePath
from .potential import psi

__all__ = [
    "ObservableSet",
    "EmpiricalMeasure",
    "sample_trajectory",
    "kb_average",
    "batch_means",
    "support_moments",
    "moments_agree",
    "foias_prodi_experiment",
    "stopping_tail",
    "wasserstein1",
    "rho_distance",
    "pair_distance",
    "mixing_curve",
    "map_members",
]


# -- observables ------------------------------------------------------------

class ObservableSet:
    """Named scalar functionals of a coupled state."""

    def __init__(self, potential, beta: float, s0: int = 2, n_low: int = 4):
        self.potential = potential
        self.beta = beta
        self.s0 = s0
        self.n_low = n_low
        self.names = ("energy", "u_H2", "u_V2", "phi_V1", "phi_V2", "Fp_H2", "psi_1", f"psi_{s0}",
                      *(f"a{k}" for k in range(1, n_low + 1)))

    def evaluate(self, state: CoupledState) -> dict:
        g = state.grid
        phi = state.phi.values
        hu, vu, _ = _sums(g, state.u.hat)
        _, vp, lp = _sums(g, g.fft(phi))
        out = {
            "energy": total_energy(state, self.potential, self.beta),
            "u_H2": hu,
            "u_V2": vu,
            "phi_V1": vp,
            "phi_V2": lp,
            "Fp_H2": float(np.sum(self.potential.F_prime(phi) ** 2) * g.cell),
            "psi_1": float(np.sum(psi(1, phi)) * g.cell),
            f"psi_{self.s0}": float(np.sum(psi(self.s0, phi)) * g.cell),
        }
        if self.n_low:
            coef = state.u.coefficients()
            for k in range(1, self.n_low + 1):
                out[f"a{k}"] = float(coef[k - 1]) if k <= coef.size else 0.0
        return out


@dataclass
class EmpiricalMeasure:
    """
    Time-stamped observable samples.  Samples at ``t >= burn_in`` are the
    retained ones; buffers only grow.
    """

    names: tuple
    burn_in: float = 0.0
    times: list = field(default_factory=list)
    buffers: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.names = tuple(self.names)
        for n in self.names:
            self.buffers.setdefault(n, [])

    def append(self, t: float, values: dict) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError(f"sample time {t} does not advance past {self.times[-1]}")
        for n in self.names:
            self.buffers[n].append(float(values[n]))
        self.times.append(float(t))

    def retained(self):
        t = np.asarray(self.times)
        keep = t >= self.burn_in
        return t[keep], {n: np.asarray(self.buffers[n])[keep] for n in self.names}


def sample_trajectory(initial: CoupledState, horizon: float, model: Model, path: NoisePath | None,
                      observables: ObservableSet, stride: int = 1,
                      burn_in_frac: float = 0.2) -> EmpiricalMeasure:
    """Run ``model`` and record every ``stride``-th state (plus the initial one)."""
    if not 0 <= burn_in_frac < 1:
        raise ValueError(f"burn-in fraction must lie in [0, 1), got {burn_in_frac}")
    em = EmpiricalMeasure(observables.names, burn_in=initial.t + burn_in_frac * horizon)
    em.append(initial.t, observables.evaluate(initial))

    def record(n, state):
        if n % stride == 0:
            em.append(state.t, observables.evaluate(state))

    run(initial, horizon, model, path, callbacks=[record])
    return em


# -- time averages ----------------------------------------------------------

@dataclass(frozen=True)
class KBAverages:
    horizons: np.ndarray  # elapsed time since the burn-in cutoff
    averages: dict        # name -> array over horizons


def kb_average(measure: EmpiricalMeasure, n_windows: int = 8, names=None) -> KBAverages:
    """
    Running time averages ``(1/t_n) int_0^{t_n} f`` over the retained window,
    trapezoidal, on ``n_windows`` equally spaced horizons ending at the last sample.
    """
    t, bufs = measure.retained()
    if t.size < 2:
        raise ValueError("need at least two retained samples")
    names = measure.names if names is None else tuple(names)
    t0 = t[0]
    targets = t0 + (t[-1] - t0) * np.arange(1, n_windows + 1) / n_windows
    ends = np.clip(np.searchsorted(t, targets - 1e-12 * max(1.0, abs(t[-1]))), 1, t.size - 1)
    avgs = {}
    for n in names:
        f = bufs[n]
        cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (f[1:] + f[:-1]))])
        avgs[n] = cum[ends] / (t[ends] - t0)
    return KBAverages(t[ends] - t0, avgs)


def batch_means(samples: np.ndarray, n_batches: int = 16) -> tuple[float, float]:
    """Mean and batch-means standard error of a correlated series."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2 * n_batches:
        raise ValueError(f"need at least {2 * n_batches} samples for {n_batches} batches, got {x.size}")
    usable = x[: x.size - x.size % n_batches].reshape(n_batches, -1).mean(axis=1)
    return float(x.mean()), float(usable.std(ddof=1) / math.sqrt(n_batches))


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    se: float
    ladder: tuple      # averages over the first quarter, half and whole retained window
    ladder_se: tuple
    plateau: bool


def support_moments(measure: EmpiricalMeasure, s0: int = 2, n_batches: int = 16,
                    rtol: float = 0.1) -> dict:
    """
    Time-averaged ``|u|_V^2``, ``|phi|_V2^2``, ``|F'(phi)|^2`` and ``int Psi_s``
    (s = 1, s0) with batch-means errors.  The averages over the doubling
    horizons T, 2T, 4T (quarter, half, whole retained window) form a ladder;
    ``plateau`` requires the 2T and 4T values to agree within three combined
    standard errors or within ``rtol`` relative.
    """
    t, bufs = measure.retained()
    names = ("u_V2", "phi_V2", "Fp_H2", "psi_1", f"psi_{s0}")
    out = {}
    for n in names:
        x = bufs[n]
        if x.size < 4 * n_batches:
            raise ValueError(f"insufficient samples ({x.size}) for moment estimates")
        ladder, ses = [], []
        for frac in (4, 2, 1):
            part = x[: x.size // frac]
            m, s = batch_means(part, n_batches)
            ladder.append(m)
            ses.append(s)
        mean, se = ladder[-1], ses[-1]
        finite = bool(np.all(np.isfinite(x)))
        gap = abs(ladder[2] - ladder[1])
        plateau = finite and (gap <= 3 * math.hypot(ses[1], ses[2]) or gap <= rtol * abs(ladder[2]))
        out[n] = MomentEstimate(mean, se, tuple(ladder), tuple(ses), plateau)
    return out


def moments_agree(a: dict, b: dict, k: float = 3.0) -> dict:
    """Per-moment check ``|m_a - m_b| <= k * sqrt(se_a^2 + se_b^2)``."""
    return {n: abs(a[n].mean - b[n].mean) <= k * math.hypot(a[n].se, b[n].se) for n in a}


# -- ensembles ----------------------------------------------------------------

def map_members(fn, jobs, workers: int = 1) -> list:
    """``[fn(j) for j in jobs]``, optionally in worker processes; order is preserved."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(fn, jobs))


# -- synchronization ------------------------------------------------------------

@dataclass
class SyncReport:
    times: np.ndarray
    errors: np.ndarray        # (seed, sample) nudged pair
    control: np.ndarray | None  # (seed, sample) same pair without nudging
    girsanov: np.ndarray | None  # (seed, sample) running int |H|^2
    seeds: tuple
    nudge: NudgeConfig

    @property
    def median(self) -> np.ndarray:
        return np.median(self.errors, axis=0)

    @property
    def control_median(self) -> np.ndarray | None:
        return None if self.control is None else np.median(self.control, axis=0)

    @property
    def decay(self) -> float:
        """Median error at the horizon over the median initial error."""
        m = self.median
        return float(m[-1] / m[0]) if m[0] > 0 else 0.0

    @property
    def control_ratio(self) -> float | None:
        if self.control is None:
            return None
        m = self.control_median
        return float(m[-1] / m[0]) if m[0] > 0 else 0.0

    @property
    def slope(self) -> float:
        """Least-squares slope of log(median error) against time."""
        return log_slope(self.times, self.median)


def log_slope(t, y) -> float:
    t, y = np.asarray(t, float), np.asarray(y, float)
    ok = y > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(t[ok], np.log(y[ok]), 1)[0])


def _sync_member(job):
    initA, initB, model, nudge, n, seed, stream, stride, control = job
    path = NoisePath(seed, stream)
    beta = model.stepper.beta
    a, b = initA, initB
    c = initB if control else None
    track_h = nudge.N > 0 and nudge.N <= model.vnoise.M and nudge.eta > 0
    acc = GirsanovAccumulator(nudge.eta, nudge.N, model.vnoise) if track_h else None
    if acc is not None:
        acc.update(a.t, a.u, b.u)
    errs = [sync_error(a, b, beta)]
    ctrl = [sync_error(a, c, beta)] if control else None
    hs = [0.0] if acc is not None else None
    for i in range(n):
        inc = model.increments(path, i)
        a = step(a, inc, model)
        b = step(b, inc, model, nudge, a.u)
        if control:
            c = step(c, inc, model)
        if acc is not None:
            acc.update(a.t, a.u, b.u)
        if (i + 1) % stride == 0:
            e = sync_error(a, b, beta)
            if not math.isfinite(e):
                raise InstabilityError(f"non-finite synchronization error at step {i + 1}")
            errs.append(e)
            if control:
                ctrl.append(sync_error(a, c, beta))
            if acc is not None:
                hs.append(acc.cumulative)
    return np.array(errs), (None if ctrl is None else np.array(ctrl)), (None if hs is None else np.array(hs))


def foias_prodi_experiment(initialA: CoupledState, initialB: CoupledState, model: Model,
                           nudge: NudgeConfig, horizon: float, seeds, stride: int = 10,
                           control: bool = True, workers: int = 1) -> SyncReport:
    """
    For each seed, run the free system from ``initialA`` and the nudged system
    from ``initialB`` (reference: the free run) on one shared noise path, plus
    optionally a control copy of ``initialB`` without nudging.  Errors are
    recorded every ``stride`` steps and at t = 0.
    """
    nudge = nudge.resolve(model.grid, model.stepper.nu)
    n = n_steps_for(horizon, model.stepper.dt)
    if n % stride:
        raise ValueError(f"stride {stride} does not divide the step count {n}")
    seeds = tuple(int(s) for s in seeds)
    jobs = [(initialA, initialB, model, nudge, n, s, 0, stride, control) for s in seeds]
    res = map_members(_sync_member, jobs, workers)
    times = initialA.t + model.stepper.dt * np.arange(0, n + 1, stride)
    errs = np.stack([r[0] for r in res])
    ctrl = np.stack([r[1] for r in res]) if control else None
    hs = np.stack([r[2] for r in res]) if res[0][2] is not None else None
    return SyncReport(times, errs, ctrl, hs, seeds, nudge)


# -- stopping-time tails --------------------------------------------------------

@dataclass
class TailReport:
    R: np.ndarray
    prob: np.ndarray          # fraction of members with tau_R < horizon
    hit_times: np.ndarray     # (member, R), inf where not hit
    max_excess: np.ndarray    # per member, sup_t of the stopping criterion
    eps: float
    horizon: float

    @property
    def slope(self) -> float:
        """Log-log slope of the tail against R over the R > 0 with nonzero tail."""
        ok = (self.R > 0) & (self.prob > 0)
        if ok.sum() < 2:
            return math.nan
        return float(np.polyfit(np.log(self.R[ok]), np.log(self.prob[ok]), 1)[0])

    @property
    def monotone(self) -> bool:
        order = np.argsort(self.R, kind="stable")
        h = self.hit_times[:, order]
        # direct comparison, since inf - inf is nan
        return bool(np.all(np.diff(self.prob[order]) <= 0) and np.all(h[:, 1:] >= h[:, :-1]))


def _tail_member(job):
    initA, initB, model, nudge, constants, n, seed, stream, R, eps = job
    path = NoisePath(seed, stream)
    cfg = model.stepper
    ledger = LambdaLedger(cfg.nu, cfg.beta, model.grid.eigenvalue(max(nudge.N, 1)),
                          constants, t=initA.t)
    update_lambda(ledger, initA, initB, 0.0, model.potential)
    stops = [StoppingState(r, eps) for r in R]
    a, b = initA, initB
    best = -math.inf
    for i in range(n):
        inc = model.increments(path, i)
        a = step(a, inc, model)
        b = step(b, inc, model, nudge, a.u)
        update_lambda(ledger, a, b, cfg.dt, model.potential)
        best = max(best, stopping_excess(ledger, eps))
        for s in stops:
            stopping_time(ledger, s)
    return np.array([s.hit_time for s in stops]), best


def stopping_tail(initialA: CoupledState, initialB: CoupledState, model: Model, nudge: NudgeConfig,
                  constants: ConstantsTable, horizon: float, R_grid, members: int, seed: int = 0,
                  eps: float | None = None, s0: int = 2, beta_bar: float | None = None,
                  workers: int = 1) -> TailReport:
    """
    Empirical ``P(tau_{R,eps} < horizon)`` over ``members`` independent noise
    paths.  ``eps`` defaults to the initial-data offset of
    :func:`acns.diagnostics.epsilon_from_initial`.
    """
    nudge = nudge.resolve(model.grid, model.stepper.nu)
    R = np.asarray(R_grid, dtype=float)
    if eps is None:
        cfg = model.stepper
        eps = epsilon_from_initial(initialA, initialB, cfg.nu, cfg.beta,
                                   cfg.beta if beta_bar is None else beta_bar, constants, s0)
    n = n_steps_for(horizon, model.stepper.dt)
    jobs = [(initialA, initialB, model, nudge, constants, n, seed, i, R, eps) for i in range(members)]
    res = map_members(_tail_member, jobs, workers)
    hits = np.stack([r[0] for r in res])
    best = np.array([r[1] for r in res])
    prob = np.mean(hits < math.inf, axis=0)
    return TailReport(R, prob, hits, best, float(eps), horizon)


# -- Wasserstein ------------------------------------------------------------------

def wasserstein1(a, b) -> float:
    """
    W1 between the empirical laws of two scalar samples, computed exactly by
    coupling their quantile functions (sorted pairs when sizes match).
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein1 needs non-empty samples")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    q = np.union1d(np.arange(1, a.size + 1) / a.size, np.arange(1, b.size + 1) / b.size)
    dq = np.diff(q, prepend=0.0)
    mid = q - 0.5 * dq
    ia = np.minimum((mid * a.size).astype(int), a.size - 1)
    ib = np.minimum((mid * b.size).astype(int), b.size - 1)
    return float(np.sum(dq * np.abs(a[ia] - b[ib])))


def pair_distance(a: CoupledState, b: CoupledState, beta: float) -> float:
    """sqrt(||u_a - u_b||^2 + beta ||grad(phi_a - phi_b)||^2)."""
    return math.sqrt(sync_error(a, b, beta))


def rho_distance(a: CoupledState, b: CoupledState) -> float:
    """||u_a - u_b||_H + ||phi_a - phi_b||_V2 + ||atanh(phi_a) - atanh(phi_b)||_inf."""
    g = a.grid
    du = math.sqrt(_sums(g, a.u.hat - b.u.hat)[0])
    dphi = a.phi.values - b.phi.values
    dv2 = math.sqrt(_sums(g, g.fft(dphi))[2])
    dat = float(np.max(np.abs(np.arctanh(a.phi.values) - np.arctanh(b.phi.values))))
    return du + dv2 + dat


@dataclass
class MixingReport:
    checkpoints: np.ndarray
    w1: np.ndarray     # W1 between the two ensembles' observable laws
    floor: np.ndarray  # W1 between halves of ensemble A, rescaled to full size
    rho: np.ndarray    # rho distance between the two representative members
    observable: str


def _checkpoint_member(job):
    initial, model, seed, stream, steps, observable, keep_states = job
    path = NoisePath(seed, stream)
    obs = ObservableSet(model.potential, model.stepper.beta)
    state, done = initial, 0
    vals, states = [], []
    for target in steps:
        for i in range(done, target):
            state = step(state, model.increments(path, i), model)
        done = target
        vals.append(obs.evaluate(state)[observable])
        if keep_states:
            states.append(state)
    return np.array(vals), states


def mixing_curve(initialA: CoupledState, initialB: CoupledState, model: Model, observable: str,
                 checkpoints, members: int, seed: int = 0, workers: int = 1) -> MixingReport:
    """
    Two ensembles of ``members`` runs each, from ``initialA`` and ``initialB``
    with independent noise (streams ``0..members-1`` and ``members..2*members-1``).
    """
    if members < 2:
        raise ValueError("mixing_curve needs at least two members per ensemble")
    dt = model.stepper.dt
    cps = np.asarray(checkpoints, dtype=float)
    steps = [0 if c == 0 else n_steps_for(c, dt) for c in cps]
    if any(s2 < s1 for s1, s2 in zip(steps, steps[1:])):
        raise ValueError("checkpoints must be nondecreasing")
    jobs = [(initialA, model, seed, i, steps, observable, i == 0) for i in range(members)]
    jobs += [(initialB, model, seed, members + i, steps, observable, i == 0) for i in range(members)]
    res = map_members(_checkpoint_member, jobs, workers)
    va = np.stack([r[0] for r in res[:members]])
    vb = np.stack([r[0] for r in res[members:]])
    h = members // 2
    w1 = np.array([wasserstein1(va[:, j], vb[:, j]) for j in range(cps.size)])
    floor = np.array([wasserstein1(va[:h, j], va[h:2 * h, j]) / math.sqrt(2) for j in range(cps.size)])
    rho = np.array([rho_distance(x, y) for x, y in zip(res[0][1], res[members][1])])
    return MixingReport(cps, w1, floor, rho, observable)
