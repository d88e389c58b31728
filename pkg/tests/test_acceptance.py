"""End-to-end acceptance gate.

One test per release criterion; each records a PASS/FAIL line in the
terminal summary. Oracles are re-derived here from first principles and
share no code with the library internals they check.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

import numpy as np
import pytest

from leopos.beamforming import PositioningState, dsta, zf_beamformer
from leopos.channel import build_channel_set
from leopos.conic import SdrInstance, solve_feasibility
from leopos.harness import SchemeSpec, group_rows, mean_metric, run_campaign
from leopos.positioning import (EigenState, build_tdoa_model, crlb,
                                crlb_approx, crlb_gradient, eigen_update,
                                mu_metric, sample_tdoa, toa_variance)
from leopos.scenario import (SPEED_OF_LIGHT_M_S, ScenarioConfig,
                             generate_geometry)
from leopos.scheduling import (check_constraints, comm_schedule, gdop_schedule,
                               hbs, parallax_schedule)

from conftest import desk_config, random_tdoa_inputs, record_acceptance


def _model_from(cfg, geometry, cell, serving, sinr):
    sigma2 = {i: toa_variance(sinr[i], cfg.bandwidth_hz) for i in serving}
    return build_tdoa_model(geometry, cell, serving, sigma2, cfg.ref_toa_var_s2)


def _solve_rational(M, B):
    """Exact M^-1 B by Gaussian elimination over Fractions."""
    n = len(M)
    aug = [row[:] + brow[:] for row, brow in zip(M, B)]
    width = len(aug[0])
    for col in range(n):
        piv = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = Fraction(1) / aug[col][col]
        aug[col] = [x * inv for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[n:width] for row in aug]


def _rational_crlb(A, sigma2_list, sigma0_2):
    """Trace-inverse CRLB in exact rational arithmetic.

    The finite-difference oracle needs noise-free function values: on
    near-degenerate geometries the double-precision trace-inverse carries
    rounding at the condition number, which a central difference amplifies
    past any useful tolerance. Inputs are taken as exact rationals, so the
    differences below are cancellation-free and only the O(h^4) truncation
    of the extrapolated stencil remains.
    """
    k = len(sigma2_list)
    R = [[Fraction(sigma0_2) + (Fraction(sigma2_list[i]) if i == j else 0)
          for j in range(k)] for i in range(k)]
    Af = [[Fraction(x) for x in row] for row in A]
    RinvA = _solve_rational(R, Af)
    M = [[sum(Af[r][i] * RinvA[r][j] for r in range(k)) for j in range(3)]
         for i in range(3)]
    eye = [[Fraction(int(i == j)) for j in range(3)] for i in range(3)]
    Minv = _solve_rational(M, eye)
    return Minv[0][0] + Minv[1][1] + Minv[2][2]


def test_criterion_gradient_correctness():
    """crlb_gradient vs central differences, strictly negative, under a minute."""
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    negatives = True
    for trial in range(500):
        k = 3 + trial % 3
        cfg, geometry, cell, serving, sinr = random_tdoa_inputs(rng, k)
        target = serving[int(rng.integers(k))]
        model = _model_from(cfg, geometry, cell, serving, sinr)
        got = crlb_gradient(model, target, cfg.bandwidth_hz, sinr[target])
        negatives = negatives and got < 0.0

        A = model.A.tolist()
        s = sinr[target]

        def crlb_at(value):
            sig = [toa_variance(value if i == target else sinr[i],
                                cfg.bandwidth_hz) for i in serving]
            return _rational_crlb(A, sig, cfg.ref_toa_var_s2)

        def central(h):
            return (crlb_at(s + h) - crlb_at(s - h)) / (2 * Fraction(h))

        h = s * 1e-2
        fd = float((4 * central(h / 2) - central(h)) / 3)
        worst = max(worst, abs(got - fd) / abs(fd))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and negatives and elapsed < 60.0
    record_acceptance(
        "gradient-correctness", ok,
        f"500 instances, worst rel err {worst:.2e}, "
        f"all negative: {negatives}, {elapsed:.1f}s")
    assert ok


def test_criterion_crlb_oracle_equivalence():
    """crlb vs an independently assembled Fisher matrix; sampling covariance."""
    rng = np.random.default_rng(102)
    worst = 0.0
    for trial in range(200):
        k = 3 + trial % 3
        cfg, geometry, cell, serving, sinr = random_tdoa_inputs(rng, k)
        sigma2 = {i: toa_variance(sinr[i], cfg.bandwidth_hz) for i in serving}
        p = geometry.ut_positions[cell].astype(float)
        u0 = (p - geometry.ref_position) / np.linalg.norm(p - geometry.ref_position)
        J = np.empty((k, 3))
        for row, i in enumerate(serving):
            s = geometry.sat_positions[i]
            J[row] = ((p - s) / np.linalg.norm(p - s) - u0) / SPEED_OF_LIGHT_M_S
        R = np.diag([sigma2[i] for i in serving]) + cfg.ref_toa_var_s2
        fisher = J.T @ np.linalg.inv(R) @ J
        expect = float(np.trace(np.linalg.inv(fisher)))
        model = _model_from(cfg, geometry, cell, serving, sinr)
        worst = max(worst, abs(crlb(model) - expect) / expect)

    cfg, geometry, cell, serving, sinr = random_tdoa_inputs(
        np.random.default_rng(103))
    model = _model_from(cfg, geometry, cell, serving, sinr)
    draws = sample_tdoa(model, 100_000, np.random.default_rng(104))
    emp = np.cov(draws.T)
    cov_dev = float(np.max(np.abs(emp - model.R)) / np.abs(model.R).max())
    ok = worst <= 1e-6 and cov_dev <= 0.05
    record_acceptance(
        "crlb-oracle-equivalence", ok,
        f"200 instances, worst rel err {worst:.2e}; "
        f"sample covariance dev {cov_dev:.3f} of max |R| at 1e5 draws")
    assert ok


def test_criterion_low_complexity_bound_sandwich():
    """0 <= F - Fhat <= 4 k^2 sigma0^2 Fhat^2 / (min sigma^4 v^2)."""
    rng = np.random.default_rng(105)
    holds = True
    widest = 0.0
    for trial in range(500):
        k = 3 + trial % 3
        cfg, geometry, cell, serving, sinr = random_tdoa_inputs(rng, k)
        assert cfg.ref_toa_var_s2 == 1e-19
        sigma2 = {i: toa_variance(sinr[i], cfg.bandwidth_hz) for i in serving}
        model = _model_from(cfg, geometry, cell, serving, sinr)
        full = crlb(model)
        approx = crlb_approx(model)
        gap = full - approx
        bound = (4.0 * k ** 2 * cfg.ref_toa_var_s2 * approx ** 2
                 / (min(sigma2.values()) ** 2 * SPEED_OF_LIGHT_M_S ** 2))
        holds = holds and -abs(full) * 1e-9 <= gap <= bound * (1 + 1e-9)
        if bound > 0:
            widest = max(widest, gap / bound)
    record_acceptance(
        "low-complexity-bound-sandwich", holds,
        f"500 instances at sigma0^2=1e-19, max gap/bound {widest:.3f}")
    assert holds


def test_criterion_eigen_update():
    """Special-case exactness, chain orthonormality, fast mu vs direct mu."""
    ok = True
    details = []

    # aligned and orthogonal updates agree with dense eigendecomposition
    rng = np.random.default_rng(106)
    worst_special = 0.0
    for _ in range(50):
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        state = EigenState.empty()
        M = np.zeros((3, 3))
        for step in range(6):
            col = q[:, step % 3] * float(rng.uniform(0.5, 2.0))
            state = eigen_update(state, col)
            M += np.outer(col, col)
            dense = np.linalg.eigvalsh(M)
            dense = np.sort(dense[dense > 1e-12 * max(np.trace(M), 1.0)])
            got = np.sort(state.values)
            if got.shape != dense.shape:
                ok = False
                continue
            worst_special = max(worst_special, float(
                np.max(np.abs(got - dense) / dense)))
            worst_special = max(worst_special, float(
                np.max(np.abs(state.matrix() - M)) / max(np.max(np.abs(M)), 1e-30)))
    ok = ok and worst_special <= 1e-9
    details.append(f"special-case err {worst_special:.1e}")

    # orthonormal basis survives 100 arbitrary updates
    worst_ortho = 0.0
    for chain in range(20):
        crng = np.random.default_rng(200 + chain)
        state = EigenState.empty()
        for _ in range(100):
            state = eigen_update(state, crng.normal(size=3))
        V = state.vectors
        worst_ortho = max(worst_ortho, float(
            np.max(np.abs(V.T @ V - np.eye(V.shape[1])))))
        ok = ok and state.rank <= 3
    ok = ok and worst_ortho <= 1e-9
    details.append(f"100-step orthonormality err {worst_ortho:.1e}")

    # fast mu equals the direct pseudo-inverse-trace change in special cases
    worst_mu = 0.0
    for _ in range(50):
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        vals = rng.uniform(0.5, 3.0, size=2)
        state = EigenState(values=vals.copy(), vectors=q[:, :2].copy())
        M = (q[:, :2] * vals) @ q[:, :2].T
        for a in (q[:, 0] * 1.3, q[:, 2] * 0.7):   # aligned, orthogonal
            fast = mu_metric(state, a)
            direct = (np.trace(np.linalg.pinv(M + np.outer(a, a)))
                      - np.trace(np.linalg.pinv(M)))
            worst_mu = max(worst_mu, abs(fast - direct) / abs(direct))
    ok = ok and worst_mu <= 1e-9
    details.append(f"mu special-case err {worst_mu:.1e}")

    record_acceptance("eigen-update", ok, "; ".join(details))
    assert ok


def test_criterion_zf_nulling():
    """Cross gains vanish relative to self gains on full-rank instances."""
    rng = np.random.default_rng(107)
    worst = 0.0
    for trial in range(200):
        n = int(rng.choice([4, 9, 16]))
        k = int(rng.integers(1, n + 1))
        H = rng.normal(size=(k, n)) + 1j * rng.normal(size=(k, n))
        W = zf_beamformer(H, power=10.0 ** 2.0)
        gains = np.abs(H @ W)
        for c in range(k):
            for cc in range(k):
                if cc != c:
                    worst = max(worst, gains[c, cc] / gains[c, c])
    ok = worst <= 1e-10
    record_acceptance(
        "zf-nulling", ok,
        f"200 instances with served count up to N, worst cross/self {worst:.1e}")
    assert ok


def test_criterion_dsta_contract():
    """Full power, feasible accepted thresholds, nondecreasing iterates."""
    config = desk_config()
    assert config.num_antennas == 16 and config.num_satellites == 8
    assert config.num_cells == 7 and config.max_beams == 4
    assert config.serving_count == 3 and config.beam_power_w == 100.0
    t0 = time.perf_counter()
    ok = True
    problems = []
    searches = 0
    for trial in range(20):
        seed = np.random.SeedSequence(300 + trial)
        rng = np.random.default_rng(seed)
        geometry = generate_geometry(config, rng)
        channels = build_channel_set(geometry, config, rng)
        plan = hbs(geometry, channels, config, m=4)
        state = PositioningState(geometry, plan.serving_by_cell(),
                                 config.bandwidth_hz, config.ref_toa_var_s2,
                                 config.gamma_init)
        for sat, cells in sorted(plan.cells_by_sat().items()):
            res = dsta(sat, list(cells), channels.h[sat, list(cells), :],
                       state, config)
            searches += 1
            for Q in res.solution.covariances:
                gap = abs(np.trace(Q).real - config.beam_power_w)
                if gap > 1e-6 * config.beam_power_w:
                    ok = False
                    problems.append(f"trial {trial} sat {sat}: trace gap {gap:.2e}")
            hist = np.array(res.threshold_history)
            if np.any(np.diff(hist, axis=0) < 0.0):
                ok = False
                problems.append(f"trial {trial} sat {sat}: threshold decreased")
            inst = SdrInstance.from_channels(
                channels.h[sat, list(cells), :], res.thresholds,
                config.beam_power_w, config.noise_power_w,
                tolerance=config.sdr_tolerance)
            if not solve_feasibility(inst).feasible:
                ok = False
                problems.append(f"trial {trial} sat {sat}: final slice infeasible")
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 300.0
    record_acceptance(
        "dsta-contract", ok,
        f"20 trials, {searches} searches, {elapsed:.1f}s"
        + ("; " + "; ".join(problems[:3]) if problems else ""))
    assert ok, problems[:5]


@pytest.fixture(scope="module")
def ordering_campaign():
    schemes = [SchemeSpec(bf, "hybrid", 4) for bf in ("dsta", "zf", "scb", "scbwi")]
    return run_campaign(desk_config(), schemes, num_trials=20,
                        campaign_seed=500, jobs=4)


@pytest.fixture(scope="module")
def gdop_campaign():
    return run_campaign(desk_config(), [SchemeSpec("dsta", "gdop")],
                        num_trials=20, campaign_seed=500, jobs=4)


def test_criterion_ordering_reproduction(ordering_campaign, gdop_campaign):
    """Scheme ordering on identical draws; shortlist beats pure geometry."""
    ok = ordering_campaign.failures == [] and gdop_campaign.failures == []
    by_bf = group_rows(ordering_campaign.rows, ["beamforming"])
    err = {bf: mean_metric(by_bf[(bf,)], "position_error_m")
           for bf in ("scbwi", "dsta", "zf", "scb")}
    ok = ok and err["scbwi"] <= err["dsta"] <= err["zf"] <= err["scb"]

    # the interference-free benchmark wins on every trial, not just on average
    bound = {(r.trial, r.cell): r.crlb_m2 for r in by_bf[("scbwi",)]}
    per_trial = all(bound[(r.trial, r.cell)] <= r.crlb_m2 * (1 + 1e-9)
                    for r in by_bf[("dsta",)])
    ok = ok and per_trial

    hybrid_mean = mean_metric(by_bf[("dsta",)], "position_error_m")
    gdop_mean = mean_metric(gdop_campaign.rows, "position_error_m")
    ok = ok and hybrid_mean <= gdop_mean
    record_acceptance(
        "ordering-reproduction", ok,
        "20 trials, mean error m: "
        + ", ".join(f"{bf}={err[bf]:.2f}" for bf in ("scbwi", "dsta", "zf", "scb"))
        + f"; per-trial bound holds: {per_trial}"
        + f"; shortlist {hybrid_mean:.2f} <= geometry-only {gdop_mean:.2f}")
    assert ok


HEX_COUNTS = (7, 19)


def _scheduler_batch(args):
    base_seed, count = args
    rng = np.random.default_rng(np.random.SeedSequence(base_seed))
    problems = []
    for trial in range(count):
        while True:
            cells = int(rng.choice(HEX_COUNTS))
            sc = int(rng.integers(3, 6))
            beams = int(rng.integers(2, 9))
            need = 1 + (sc - 1) + (cells * sc - 1) // beams
            sats = need + int(rng.integers(0, 4))
            if sats <= 40:
                break
        config = ScenarioConfig(
            num_satellites=sats, num_cells=cells, serving_count=sc,
            max_beams=beams, antennas_x=2, antennas_y=2,
            cell_radius_m=float(rng.uniform(50e3, 250e3)))
        srng = np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(trial,)))
        geometry = generate_geometry(config, srng)
        channels = build_channel_set(geometry, config, srng)
        comm = comm_schedule(geometry, channels, config)
        gd = gdop_schedule(geometry, channels, config)
        plans = [comm, hbs(geometry, channels, config, m=2), gd,
                 parallax_schedule(geometry, config)]
        for plan in plans:
            bad = check_constraints(plan, config)
            if bad:
                problems.append(f"seed {base_seed} trial {trial} {plan.scheme}: {bad[0]}")
        one = hbs(geometry, channels, config, m=1)
        full = hbs(geometry, channels, config, m=config.num_satellites)
        if not (np.array_equal(comm.delta, one.delta) and comm.commits == one.commits):
            problems.append(f"seed {base_seed} trial {trial}: comm != hbs(1)")
        if not (np.array_equal(gd.delta, full.delta) and gd.commits == full.commits):
            problems.append(f"seed {base_seed} trial {trial}: gdop != hbs(I)")
    return problems


def test_criterion_scheduler_constraints():
    """C1-C3 plus the shortlist-width plan equalities on 1000 random configs."""
    batches = [(600 + b, 125) for b in range(8)]
    problems = []
    with ProcessPoolExecutor(max_workers=8) as pool:
        for result in pool.map(_scheduler_batch, batches):
            problems.extend(result)
    ok = not problems
    record_acceptance(
        "scheduler-constraints", ok,
        "1000 configs x 4 schedulers clean; hbs(1)=comm, hbs(I)=gdop"
        if ok else "; ".join(problems[:3]))
    assert ok, problems[:5]
