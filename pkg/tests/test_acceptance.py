"""
End-to-end acceptance criteria 1-10.  Each test records one PASS/FAIL line
(printed in the terminal summary, see conftest.py) and then asserts.

Run alone with ``python3 -m pytest tests/test_acceptance.py -v``; the whole
file takes a few minutes on one core.
"""

import math
import time

import numpy as np
import pytest
import scipy.stats

from acns.config import config_from_dict
from acns.diagnostics import (
    check_condition,
    default_constants,
    energy,
    rate_floor,
)
from acns.dynamics import CoupledState, Model, NudgeConfig, StepperConfig, step
from acns.ergodics import (
    ObservableSet,
    batch_means,
    foias_prodi_experiment,
    mixing_curve,
    moments_agree,
    sample_trajectory,
    stopping_tail,
    support_moments,
    wasserstein1,
)
from acns.harness import execute, replay
from acns.noise import NoisePath, PhaseNoise, VelocityNoise
from acns.potential import FloryHuggins, NullPotential, psi
from acns.spectral import ScalarField, SolenoidalField, SpectralGrid, norms, project_low_modes
from conftest import ACCEPTANCE_LINES, random_phase, random_solenoidal

pytestmark = pytest.mark.acceptance

FH = FloryHuggins()


def verdict(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def low_mode_state(grid, seed, phi, amp=0.5, n=12):
    rng = np.random.default_rng(seed)
    c = np.zeros(grid.n_modes)
    c[:n] = amp * rng.standard_normal(n)
    return CoupledState(SolenoidalField.from_coefficients(grid, c), ScalarField(grid, phi))


# -- 1 ----------------------------------------------------------------------------

def test_c01_structure_preservation():
    g = SpectralGrid(64, 64)
    m = Model(g, StepperConfig(dt=1e-3, nu=0.1, beta=1.0), FH,
              VelocityNoise(g, 0.5, M=16, K_active=16), PhaseNoise())
    X, Y = g.coords()
    s = low_mode_state(g, 0, 0.3 + 0.5 * np.cos(X) * np.sin(Y))
    path = NoisePath(1)
    div_max = phi_max = 0.0
    t0 = time.perf_counter()
    for i in range(10_000):
        s = step(s, m.increments(path, i), m)
        div_max = max(div_max, float(np.max(np.abs(s.u.divergence()))))
        phi_max = max(phi_max, float(np.max(np.abs(s.phi.values))))
    wall = time.perf_counter() - t0
    ok = div_max < 1e-10 and phi_max < 1 and wall <= 300
    verdict(1, ok, f"64^2, 1e4 steps: max|div u|={div_max:.2e}, max|phi|={phi_max:.6f}, {wall:.0f}s")


# -- 2 ----------------------------------------------------------------------------

def test_c02_deterministic_energy_law():
    g = SpectralGrid(64, 64)
    nu, beta, dt = 0.1, 1.0, 1e-3
    m = Model(g, StepperConfig(dt=dt, nu=nu, beta=beta), FH)
    X, Y = g.coords()
    s = low_mode_state(g, 0, 0.3 + 0.5 * np.cos(X) * np.sin(Y))
    recs = [energy(s, FH, beta, nu)]
    for i in range(1000):
        s = step(s, m.increments(None, i), m)
        recs.append(energy(s, FH, beta, nu))
    E = np.array([r.total for r in recs])
    D = np.array([r.w_dissipation for r in recs])
    violation = float(np.max(np.diff(E) / np.abs(E[:-1])))
    observed = (E[-1] - E[0]) / (1000 * dt)
    predicted = -float(np.mean(0.5 * (D[1:] + D[:-1])))
    rel = abs(observed / predicted - 1)
    ok = violation < 1e-8 and rel < 0.05
    verdict(2, ok, f"max per-step relative increase {violation:.2e}; "
                   f"mean dE/dt={observed:.4f} vs -(nu|grad u|^2+|w|^2)={predicted:.4f} ({100 * rel:.2f}% off)")


# -- 3 ----------------------------------------------------------------------------

def test_c03_projectors_and_poincare():
    g = SpectralGrid(32, 32)
    rng = np.random.default_rng(3)
    vn = VelocityNoise(g, 0.5, M=16, K_active=24)
    split_err = inv_err = 0.0
    poincare_ok = True
    for N in (1, 4, 16):
        lam_N, lam_next = g.eigenvalue(N), g.eigenvalue(N + 1)
        for _ in range(100):
            u = random_solenoidal(g, rng)
            p, q = project_low_modes(u, N)
            split_err = max(split_err, float(np.max(np.abs((p + q).hat - u.hat))))
            np_, nq = norms(g, p), norms(g, q)
            poincare_ok &= bool(np_.V1**2 <= lam_N * np_.H**2 * (1 + 1e-12)
                                and nq.V1**2 >= lam_next * nq.H**2 * (1 - 1e-12))
            low, _ = project_low_modes(u, vn.M)
            back = vn.apply(None, vn.inverse(u, vn.M))
            inv_err = max(inv_err, float(np.max(np.abs(back.hat - low.hat))) / g.npts)
    ok = split_err < 1e-12 and inv_err < 1e-12 and poincare_ok
    verdict(3, ok, f"|P_N+Q_N-I|={split_err:.1e}, |G1 G1^-1 - P_M|={inv_err:.1e}, "
                   f"Poincare pair holds on 300 fields: {poincare_ok}")


# -- 4 ----------------------------------------------------------------------------

def test_c04_potential_and_noise_assumptions():
    r = np.linspace(-1, 1, 10_002)[1:-1]
    L = FH.L_F
    fpp, fp = FH.F_second(r), FH.F_prime(r)
    checks = {
        "F''>=-L_F": bool(np.all(fpp >= -L - 1e-12)),
        "F'(r)r>=L_F r^2-2L_F": bool(np.all(fp * r >= L * r * r - 2 * L - 1e-12)),
        "F''<=L_F(1+Psi_sF)": bool(np.all(fpp <= L * (1 + psi(FH.s_F, r)) + 1e-12)),
    }
    rng = np.random.default_rng(4)
    i, j = rng.integers(0, r.size, (2, 10_000))
    t = rng.uniform(0, 1, 10_000)
    mid = FH.F_second(t * r[i] + (1 - t) * r[j])
    checks["quasi-convex F''"] = bool(np.all(mid <= np.maximum(fpp[i], fpp[j]) + 1e-12))
    pn = PhaseNoise()
    s0 = 2
    sup = {"g": 0.0, "F''g^2": 0.0, "F'g": 0.0, "g Psi": 0.0}
    ends = 0.0
    for k in range(pn.n_channels):
        gk = pn.g(k, r)
        ends = max(ends, float(np.max(np.abs(pn.g(k, np.array([-1.0, 1.0]))))))
        sup["g"] = max(sup["g"], float(np.max(np.abs(gk))))
        sup["F''g^2"] = max(sup["F''g^2"], float(np.max(np.abs(fpp * gk * gk))))
        sup["F'g"] = max(sup["F'g"], float(np.max(np.abs(fp * gk))))
        sup["g Psi"] = max(sup["g Psi"], float(np.max(np.abs(gk * psi(s0 + 1, r)))))
    checks["g_k(+-1)=0"] = ends == 0.0
    checks["noise sups finite"] = all(math.isfinite(v) and v < 1 for v in sup.values())
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    verdict(4, ok, f"{len(checks) - len(failed)}/{len(checks)} checks on 1e4 points; "
                   + ", ".join(f"sup {k}={v:.3g}" for k, v in sup.items())
                   + (f"; failed: {failed}" if failed else ""))


# -- 5 and 7 share one synchronization run ----------------------------------------

SYNC_L = 2 * np.pi / 0.55


@pytest.fixture(scope="module")
def sync_run():
    g = SpectralGrid(32, 32, SYNC_L, SYNC_L)
    m = Model(g, StepperConfig(dt=5e-3, nu=0.1, beta=10.0), FH,
              VelocityNoise(g, 0.5, M=16, K_active=32), PhaseNoise())
    X, Y = g.coords()
    k = 2 * np.pi / SYNC_L
    phi = 0.3 + 0.1 * np.cos(k * X + 0.7) * np.sin(k * Y)
    a, b = low_mode_state(g, 100, phi), low_mode_state(g, 200, phi)
    t0 = time.perf_counter()
    rep = foias_prodi_experiment(a, b, m, NudgeConfig(16, 1.0), 20.0, seeds=range(8), stride=100)
    return g, m, rep, time.perf_counter() - t0


def test_c05_foias_prodi_synchronization(sync_run):
    g, m, rep, wall = sync_run
    decay, ctrl = rep.decay, rep.control_ratio
    envelope = -0.25 * rate_floor(0.1, 10.0, g.eigenvalue(16), 1.0)
    ok = decay <= 1e-3 and 0.1 <= ctrl <= 10 and rep.slope < 0 and wall <= 900
    verdict(5, ok, f"N=16, 8 seeds, T=20: median decay {decay:.2e} (need <=1e-3), "
                   f"control ratio {ctrl:.3f} (need in [0.1,10]), log-slope {rep.slope:.3f} "
                   f"(reference rate {envelope:.3f} with K_Delta=1), {wall:.0f}s")


def test_c07_girsanov_plateau(sync_run):
    _, _, rep, _ = sync_run
    H = rep.girsanov
    q = int(0.75 * (H.shape[1] - 1))
    growth = (H[:, -1] - H[:, q]) / H[:, -1]
    ok = bool(np.all(np.isfinite(H[:, -1])) and np.all(growth < 0.01))
    verdict(7, ok, f"int|H|^2 at T: {H[:, -1].min():.4g}..{H[:, -1].max():.4g}; "
                   f"worst growth over final quarter {growth.max():.2e} (need <1e-2)")


# -- 6 ----------------------------------------------------------------------------

def test_c06_stopping_time_tail():
    g = SpectralGrid(16, 16, SYNC_L, SYNC_L)
    vn, pn = VelocityNoise(g, 0.5, M=16, K_active=16), PhaseNoise()
    m = Model(g, StepperConfig(dt=5e-3, nu=0.1, beta=10.0), FH, vn, pn)
    const = default_constants(g, vn.L_G1, pn.L_G2(FH, 2), n_fields=1000)
    X, _ = g.coords()
    phi = 0.3 + 0.1 * np.cos(0.55 * X)
    a = low_mode_state(g, 1, phi)
    b = CoupledState(SolenoidalField.zeros(g), ScalarField(g, phi))
    R = [1, 2, 4, 8, 16]
    nud = NudgeConfig(16, 1.0)
    rep = stopping_tail(a, b, m, nud, const, 1.0, R, members=64)
    # companion at eps = 0 on a rescaled R grid, where the tail is not degenerate
    R2 = [1e4 * r for r in R]
    rep2 = stopping_tail(a, b, m, nud, const, 1.0, R2, members=64, eps=0.0)
    holds, lhs, rhs = check_condition(0.1, 10.0, g.eigenvalue(16), const)
    ok = rep.monotone and rep2.monotone
    verdict(6, ok, f"64 members: structural eps={rep.eps:.3g} tail {rep.prob.tolist()}; "
                   f"eps=0, R x1e4 tail {rep2.prob.tolist()}; "
                   f"threshold condition lhs={lhs:.3g} rhs={rhs:g} holds={holds}")


# -- 8 ----------------------------------------------------------------------------

def test_c08_ergodic_consistency():
    # linear single-mode system: du = -nu lambda_1 u dt + sigma dbeta
    g = SpectralGrid(8, 8)
    nu, sigma = 1.0, 0.5
    lin = Model(g, StepperConfig(dt=2e-3, nu=nu, beta=1.0, nonlinear=False), NullPotential(),
                VelocityNoise.from_amplitudes(g, [sigma], M=1))
    em = sample_trajectory(CoupledState.zeros(g), 200.0, lin, NoisePath(3),
                           ObservableSet(NullPotential(), 1.0), stride=5, burn_in_frac=0.02)
    _, bufs = em.retained()
    mean, se = batch_means(bufs["u_H2"], 20)
    exact = sigma**2 / (2 * nu * g.eigenvalue(1))
    ou_ok = abs(mean - exact) <= 3 * se

    # full system from two distinct initial data
    g = SpectralGrid(32, 32)
    full = Model(g, StepperConfig(dt=2e-3, nu=0.5, beta=1.0), FH,
                 VelocityNoise(g, 0.5, M=16, K_active=16), PhaseNoise())
    X, Y = g.coords()
    a = low_mode_state(g, 1, 0.5 + 0.2 * np.cos(X))
    b = CoupledState(SolenoidalField.zeros(g), ScalarField(g, 0.2 + 0.1 * np.sin(X + Y)))
    obs = ObservableSet(FH, 1.0)
    reps = [support_moments(sample_trajectory(s, 40.0, full, NoisePath(seed), obs, stride=10))
            for s, seed in ((a, 11), (b, 12))]
    agree = moments_agree(*reps)
    plateau = {k: reps[0][k].plateau and reps[1][k].plateau for k in reps[0]}
    ok = ou_ok and all(agree.values()) and plateau["psi_1"] and plateau["psi_2"]
    verdict(8, ok, f"OU |u|^2 {mean:.4f}+-{se:.4f} vs exact {exact:.4f}; "
                   f"moments agree {sum(agree.values())}/{len(agree)}; "
                   f"Psi_2 means {reps[0]['psi_2'].mean:.2f}/{reps[1]['psi_2'].mean:.2f}, "
                   f"plateau {plateau}")


# -- 9 ----------------------------------------------------------------------------

def test_c09_wasserstein():
    rng = np.random.default_rng(9)
    x, y = rng.standard_normal(10_000), 0.5 + rng.standard_normal(10_000)
    w = wasserstein1(x, y)
    gauss_ok = abs(w - 0.5) <= 0.05
    sets = [rng.standard_normal(n) for n in (30, 30, 47)]
    axioms = True
    for a in sets:
        axioms &= wasserstein1(a, a.copy()) == 0
        for b in sets:
            axioms &= abs(wasserstein1(a, b) - wasserstein1(b, a)) <= 1e-12
            axioms &= abs(wasserstein1(a, b) - scipy.stats.wasserstein_distance(a, b)) <= 1e-12
            for c in sets:
                axioms &= wasserstein1(a, b) <= wasserstein1(a, c) + wasserstein1(c, b) + 1e-12
    g = SpectralGrid(8, 8)
    m = Model(g, StepperConfig(dt=5e-3, nu=0.5, beta=1.0), FH,
              VelocityNoise(g, 0.5, M=8, K_active=8), PhaseNoise())
    s = CoupledState(random_solenoidal(g, rng, 8, 0.5), ScalarField(g, 0.2 + random_phase(g, rng, 0.3)))
    mix = mixing_curve(s, s, m, "u_H2", [0.0, 0.25, 0.5, 1.0], members=32)
    floor_ok = bool(np.all(mix.w1 <= 3 * mix.floor + 1e-15))
    ok = gauss_ok and axioms and floor_ok
    verdict(9, ok, f"W1(N(0,1),N(0.5,1))={w:.4f}; metric axioms and scipy agreement: {axioms}; "
                   f"coincident mixing W1/floor = "
                   + ", ".join("-" if f == 0 else f"{v / f:.2f}" for v, f in zip(mix.w1, mix.floor)))


# -- 10 ---------------------------------------------------------------------------

def test_c10_reproducibility(tmp_path):
    cfg = config_from_dict({
        "grid": {"nx": 16, "ny": 16},
        "noise": {"M": 8, "K_active": 8},
        "nudge": {"N": 8, "eta": 1.0},
        "stepper": {"dt": 5e-3, "horizon": 0.5, "output_stride": 10},
        "initial_nudged": {"seed": 7, "phi_mean": 0.1},
    })
    opts = {"seeds": [0, 1, 2, 3], "stride": 10}
    m1 = execute("sync", {"A": cfg}, dict(opts), tmp_path / "w1", workers=1)
    m2 = execute("sync", {"A": cfg}, dict(opts), tmp_path / "w2", workers=2)
    same_workers = [o["sha256"] for o in m1["outputs"]] == [o["sha256"] for o in m2["outputs"]]
    ok1, _ = replay(tmp_path / "w1" / "manifest.json", tmp_path / "r1", workers=2)
    ok2, _ = replay(tmp_path / "w2" / "manifest.json", tmp_path / "r2", workers=1)
    ok = same_workers and ok1 and ok2
    verdict(10, ok, f"{len(m1['outputs'])} sync outputs identical across 1/2 workers: {same_workers}; "
                    f"manifest replays identical: {ok1 and ok2}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
