"""
Experiment runners behind the command line.  Each runner takes validated
configs plus JSON-able options, writes its outputs into a directory and
returns the list of files written.  :func:`execute` adds the manifest, and
:func:`replay` re-runs a manifest and compares output hashes.
"""

from __future__ import annotations

import json
import math
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, config_from_dict
from .diagnostics import (
    MONITOR_FIELDS,
    ConstantsTable,
    GirsanovAccumulator,
    LambdaLedger,
    MomentMonitor,
    StoppingState,
    check_condition,
    default_constants,
    energy,
    epsilon_from_initial,
    stopping_time,
    sync_error,
    update_lambda,
)
from .dynamics import CoupledState, Model, NudgeConfig, StepperConfig, n_steps_for, step
from .ergodics import (
    ObservableSet,
    foias_prodi_experiment,
    kb_average,
    map_members,
    sample_trajectory,
    stopping_tail,
    support_moments,
)
from .io import inventory, write_csv, write_json, write_snapshot
from .noise import NoisePath, PhaseNoise, VelocityNoise
from .potential import BarrierFamily, FloryHuggins
from .spectral import ScalarField, SolenoidalField, SpectralGrid


# -- builders ---------------------------------------------------------------

def build_grid(cfg: RunConfig) -> SpectralGrid:
    g = cfg["grid"]
    return SpectralGrid(int(g["nx"]), int(g["ny"]), float(g["Lx"]), float(g["Ly"]))


def build_model(cfg: RunConfig, **stepper_changes) -> Model:
    grid = build_grid(cfg)
    p, n, s = cfg["physics"], cfg["noise"], cfg["stepper"]
    stepper = StepperConfig(dt=float(s["dt"]), nu=float(p["nu"]), beta=float(p["beta"]))
    if stepper_changes:
        stepper = StepperConfig(**{**stepper.__dict__, **stepper_changes})
    return Model(
        grid,
        stepper,
        FloryHuggins(float(p["theta"]), float(p["theta0"]), int(p["s_F"])),
        VelocityNoise(grid, float(n["sigma0"]), float(n["decay_a"]), int(n["M"]), int(n["K_active"])),
        PhaseNoise(tuple(n["gamma_k"]), int(n["q"])),
    )


def build_initial(cfg: RunConfig, section: str = "initial") -> CoupledState:
    """Random low-mode velocity plus a single-cosine phase profile."""
    ini = cfg[section] if cfg[section] is not None else cfg["initial"]
    grid = build_grid(cfg)
    rng = np.random.default_rng(int(ini["seed"]))
    coef = np.zeros(grid.n_modes)
    k = int(ini["u_modes"])
    coef[:k] = float(ini["u_amplitude"]) * rng.standard_normal(k)
    X, Y = grid.coords()
    k1, k2 = ini["phi_wavevector"]
    phi = ini["phi_mean"] + ini["phi_amplitude"] * np.cos(2 * np.pi * (k1 * X / grid.Lx + k2 * Y / grid.Ly))
    return CoupledState(SolenoidalField.from_coefficients(grid, coef), ScalarField(grid, phi))


def build_nudge(cfg: RunConfig, N: int | None = None) -> NudgeConfig:
    nu = cfg["nudge"]
    eta = None if nu["eta"] == "auto" else float(nu["eta"])
    return NudgeConfig(int(nu["N"] if N is None else N), eta)


def build_constants(cfg: RunConfig, model: Model) -> ConstantsTable:
    p = cfg["physics"]
    gamma = BarrierFamily(int(p["s0"]), int(p["s_F"])).gamma
    src = cfg["constants"]
    if src is None:
        L_G2 = model.pnoise.L_G2(model.potential, int(p["s0"])) if model.pnoise.n_channels else 0.0
        table = default_constants(model.grid, model.vnoise.L_G1, L_G2, gamma=gamma)
    else:
        d = json.loads(Path(src).read_text()) if isinstance(src, str) else src
        table = ConstantsTable.from_dict(d)
    if cfg["constants_overrides"]:
        table = table.with_overrides(**{k: float(v) for k, v in cfg["constants_overrides"].items()})
    return table


def horizon_of(cfg: RunConfig, opts: dict) -> float:
    h = opts.get("horizon")
    return float(cfg["stepper"]["horizon"] if h is None else h)


# -- simulate ---------------------------------------------------------------

SIM_COLUMNS = ("t", "E", "kinetic", "interface", "potential", "dissipation", "Lambda", "tau_hit",
               "sync_error", "girsanov_cum", "div_max", "phi_absmax",
               "phi_H", "phi_V1", "u_H", "psi_s0",
               *(k for k in MONITOR_FIELDS if k.startswith("int_")))


def simulate_one(cfg: RunConfig, seed: int, constants: ConstantsTable, out_dir: Path,
                 horizon: float) -> list[Path]:
    """
    Free run from ``initial`` plus, when ``nudge.N > 0``, the nudged companion
    from ``initial_nudged`` (default: the same data) on the same noise path.
    """
    model = build_model(cfg)
    cfg_s = model.stepper
    g = model.grid
    p = cfg["physics"]
    s0 = int(p["s0"])
    a = build_initial(cfg)
    b = build_initial(cfg, "initial_nudged")
    nudge = build_nudge(cfg).resolve(g, cfg_s.nu)
    eps = cfg["stopping"]["eps"]
    if eps is None:
        eps = epsilon_from_initial(a, b, cfg_s.nu, cfg_s.beta, cfg_s.beta, constants, s0)
    ledger = LambdaLedger(cfg_s.nu, cfg_s.beta, g.eigenvalue(max(nudge.N, 1)), constants, t=a.t)
    stop = StoppingState(float(cfg["stopping"]["R"]), float(eps))
    acc = (GirsanovAccumulator(nudge.eta, nudge.N, model.vnoise)
           if 0 < nudge.N <= model.vnoise.M and nudge.eta > 0 else None)
    mon = MomentMonitor(model.potential, constants.gamma, s0)
    path = NoisePath(int(seed))
    n = n_steps_for(horizon, cfg_s.dt)
    stride = int(cfg["stepper"]["output_stride"])
    snap = int(cfg["stepper"]["snapshot_stride"])
    files = []

    def row(a, b):
        update_lambda(ledger, a, b, 0.0 if ledger._last is None else cfg_s.dt, model.potential)
        stopping_time(ledger, stop)
        if acc is not None:
            acc.update(a.t, a.u, b.u)
        m = mon.observe(a)
        e = energy(a, model.potential, cfg_s.beta, cfg_s.nu)
        vals = dict(t=a.t, E=e.total, kinetic=e.kinetic, interface=e.interface, potential=e.potential,
                    dissipation=e.dissipation, Lambda=ledger.value, tau_hit=stop.hit,
                    sync_error=sync_error(a, b, cfg_s.beta),
                    girsanov_cum=acc.cumulative if acc is not None else 0.0,
                    div_max=float(np.max(np.abs(a.u.divergence()))),
                    phi_absmax=float(np.max(np.abs(a.phi.values))),
                    **{k: v for k, v in m.items() if k != "t"})
        return [vals[c] for c in SIM_COLUMNS]

    def snapshot(state, i):
        f = out_dir / f"snap_seed{seed}_{i:08d}.bin"
        write_snapshot(f, state)
        files.append(f)

    rows = [row(a, b)]
    if snap:
        snapshot(a, 0)
    use_nudge = nudge.N > 0 and nudge.eta > 0
    for i in range(n):
        inc = model.increments(path, i)
        a = step(a, inc, model)
        b = step(b, inc, model, nudge if use_nudge else None, a.u if use_nudge else None)
        r = row(a, b)
        if (i + 1) % stride == 0:
            rows.append(r)
        if snap and (i + 1) % snap == 0:
            snapshot(a, i + 1)
    files.append(write_csv(out_dir / f"simulate_seed{seed}.csv", SIM_COLUMNS, rows))
    return files


def run_simulate(configs: dict, opts: dict, out_dir: Path, workers: int) -> list[Path]:
    cfg = configs["A"]
    model = build_model(cfg)
    constants = build_constants(cfg, model)
    files = [write_json(out_dir / "constants.json", constants.to_dict())]
    h = horizon_of(cfg, opts)
    for seed in cfg["seeds"]:
        files += simulate_one(cfg, int(seed), constants, out_dir, h)
    return files


# -- sync -------------------------------------------------------------------

def run_sync(configs: dict, opts: dict, out_dir: Path, workers: int) -> list[Path]:
    cfg = configs["A"]
    cfg_b = configs.get("B", cfg)
    if cfg_b["grid"] != cfg["grid"]:
        raise ValueError("configA and configB must use the same grid")
    model = build_model(cfg)
    a = build_initial(cfg)
    b = build_initial(cfg_b, "initial_nudged" if cfg_b is cfg and cfg["initial_nudged"] else "initial")
    nudge = build_nudge(cfg, opts.get("N"))
    seeds = opts.get("seeds") or cfg["seeds"]
    stride = int(opts.get("stride") or cfg["stepper"]["output_stride"])
    rep = foias_prodi_experiment(a, b, model, nudge, horizon_of(cfg, opts), seeds, stride=stride,
                                 control=True, workers=workers)
    rows = []
    for i, s in enumerate(rep.seeds):
        for j, t in enumerate(rep.times):
            rows.append([s, t, rep.errors[i, j], rep.control[i, j],
                         rep.girsanov[i, j] if rep.girsanov is not None else math.nan])
    f1 = write_csv(out_dir / "sync.csv", ("seed", "t", "sync_error", "control_error", "girsanov_cum"), rows)
    f2 = write_csv(out_dir / "sync_median.csv", ("t", "median", "control_median"),
                   zip(rep.times, rep.median, rep.control_median))
    f3 = write_csv(out_dir / "sync_summary.csv", ("N", "eta", "decay", "control_ratio", "log_slope"),
                   [[rep.nudge.N, rep.nudge.eta, rep.decay, rep.control_ratio, rep.slope]])
    return [f1, f2, f3]


# -- ergodic ----------------------------------------------------------------

def _ergodic_member(job):
    cfg_data, seed, stream, horizon, stride, burn, n_windows = job
    cfg = config_from_dict(cfg_data)
    model = build_model(cfg)
    obs = ObservableSet(model.potential, model.stepper.beta, int(cfg["physics"]["s0"]))
    em = sample_trajectory(build_initial(cfg), horizon, model, NoisePath(seed, stream), obs, stride, burn)
    kb = kb_average(em, n_windows)
    try:
        mom = support_moments(em, int(cfg["physics"]["s0"]))
    except ValueError:
        mom = {}
    return obs.names, kb, mom


def run_ergodic(configs: dict, opts: dict, out_dir: Path, workers: int) -> list[Path]:
    cfg = configs["A"]
    members = int(opts.get("ensemble") or cfg["ensemble"]["members"])
    stride = int(opts.get("stride") or cfg["stepper"]["output_stride"])
    burn = float(opts.get("burn_in", 0.2))
    nw = int(opts.get("windows", 8))
    jobs = [(cfg.data, int(cfg["seeds"][0]), i, horizon_of(cfg, opts), stride, burn, nw) for i in range(members)]
    res = map_members(_ergodic_member, jobs, workers)
    names = res[0][0]
    kb_rows, mom_rows = [], []
    for i, (_, kb, mom) in enumerate(res):
        for j, h in enumerate(kb.horizons):
            kb_rows.append([i, h, *(kb.averages[nm][j] for nm in names)])
        for nm, est in mom.items():
            mom_rows.append([i, nm, est.mean, est.se, est.plateau])
    f1 = write_csv(out_dir / "ergodic_kb.csv", ("member", "horizon", *names), kb_rows)
    f2 = write_csv(out_dir / "ergodic_moments.csv", ("member", "moment", "mean", "se", "plateau"),
                   [[r[0], r[1], *r[2:]] for r in mom_rows])
    return [f1, f2]


# -- tail -------------------------------------------------------------------

def run_tail(configs: dict, opts: dict, out_dir: Path, workers: int) -> list[Path]:
    cfg = configs["A"]
    model = build_model(cfg)
    constants = build_constants(cfg, model)
    members = int(opts.get("members") or cfg["ensemble"]["members"])
    R = [float(r) for r in opts.get("R_grid") or [1, 2, 4, 8, 16]]
    eps = opts.get("eps", cfg["stopping"]["eps"])
    rep = stopping_tail(build_initial(cfg), build_initial(cfg, "initial_nudged"), model, build_nudge(cfg),
                        constants, horizon_of(cfg, opts), R, members, seed=int(cfg["seeds"][0]),
                        eps=eps, s0=int(cfg["physics"]["s0"]), workers=workers)
    f0 = write_json(out_dir / "constants.json", constants.to_dict())
    f1 = write_csv(out_dir / "tail.csv", ("R", "prob"), zip(rep.R, rep.prob))
    f2 = write_csv(out_dir / "tail_members.csv", ("member", "max_excess", *(f"tau_R{r:g}" for r in rep.R)),
                   [[i, rep.max_excess[i], *rep.hit_times[i]] for i in range(members)])
    f3 = write_csv(out_dir / "tail_summary.csv", ("eps", "log_log_slope", "monotone"),
                   [[rep.eps, rep.slope, rep.monotone]])
    return [f0, f1, f2, f3]


# -- sweep ------------------------------------------------------------------

def run_sweep(configs: dict, opts: dict, out_dir: Path, workers: int) -> list[Path]:
    cfg = configs["A"]
    base = build_model(cfg)
    constants = build_constants(cfg, base)
    Ns = [int(x) for x in opts.get("N_list") or [cfg["nudge"]["N"]]]
    betas = [float(x) for x in opts.get("beta_list") or [cfg["physics"]["beta"]]]
    seeds = opts.get("seeds") or cfg["seeds"]
    stride = int(opts.get("stride") or cfg["stepper"]["output_stride"])
    a, b = build_initial(cfg), build_initial(cfg, "initial_nudged")
    rows = []
    for beta in betas:
        model = base.with_stepper(beta=beta)
        for N in Ns:
            lamN = model.grid.eigenvalue(max(N, 1))
            holds, lhs, rhs = check_condition(model.stepper.nu, beta, lamN, constants)
            rep = foias_prodi_experiment(a, b, model, build_nudge(cfg, N), horizon_of(cfg, opts), seeds,
                                         stride=stride, control=False, workers=workers)
            rows.append([N, beta, rep.nudge.eta, lamN, lhs, rhs, holds, rep.decay, rep.slope])
    f = write_csv(out_dir / "sweep.csv",
                  ("N", "beta", "eta", "lambda_N", "condition_lhs", "condition_rhs", "condition_holds",
                   "decay", "log_slope"), rows)
    return [write_json(out_dir / "constants.json", constants.to_dict()), f]


RUNNERS = {
    "simulate": run_simulate,
    "sync": run_sync,
    "ergodic": run_ergodic,
    "tail": run_tail,
    "sweep": run_sweep,
}


# -- manifests --------------------------------------------------------------

def execute(command: str, configs: dict, opts: dict, out_dir, workers: int = 1) -> dict:
    """Run ``command`` and write ``manifest.json`` next to its outputs."""
    if command not in RUNNERS:
        raise ValueError(f"unknown subcommand {command!r}; expected one of {sorted(RUNNERS)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files = RUNNERS[command](configs, opts, out_dir, workers)
    wall = time.perf_counter() - t0
    manifest = {
        "command": command,
        "options": opts,
        "configs": {k: c.data for k, c in configs.items()},
        "config_sha256": {k: c.sha256 for k, c in configs.items()},
        "version": __version__,
        "seeds": list(opts.get("seeds") or configs["A"]["seeds"]),
        "workers": workers,
        "outputs": inventory(out_dir, files),
        "wall_clock_s": wall,
    }
    write_json(out_dir / "manifest.json", manifest)
    return manifest


def replay(manifest_path, out_dir=None, workers: int = 1) -> tuple[bool, list]:
    """
    Re-run a manifest and compare every output hash.  Returns ``(identical,
    rows)`` with one ``(path, expected, got)`` row per output.
    """
    man = json.loads(Path(manifest_path).read_text())
    configs = {k: config_from_dict(v) for k, v in man["configs"].items()}
    if out_dir is None:
        out_dir = tempfile.mkdtemp(prefix="acns-replay-")
    new = execute(man["command"], configs, man["options"], out_dir, workers)
    got = {o["path"]: o["sha256"] for o in new["outputs"]}
    rows = [(o["path"], o["sha256"], got.get(o["path"])) for o in man["outputs"]]
    rows += [(p, None, h) for p, h in got.items() if p not in {o["path"] for o in man["outputs"]}]
    return all(a == b for _, a, b in rows), rows
