"""Scheduler constraint compliance, greedy replays, and degenerate cases."""

import numpy as np
import pytest

from leopos.channel import ChannelSet, build_channel_set, channel_similarity
from leopos.positioning import a_vector
from leopos.scenario import Geometry, ScenarioConfig, generate_geometry
from leopos.scheduling import (CapacityError, SchedulePlan, check_constraints,
                               comm_schedule, dump_plan, gdop_schedule, hbs,
                               parallax_schedule)

from conftest import desk_config

HEX_COUNTS = (7, 19)


def random_feasible_config(rng, **overrides):
    """Config with enough satellite slack for any greedy one-pass scheduler.

    Greedy stranding is impossible when, at every commitment, some satellite
    with a free beam is not yet serving the cell. The worst case needs
    num_satellites >= 1 + (serving_count - 1) + floor((C*sc - 1) / max_beams).
    """
    while True:
        cells = int(rng.choice(HEX_COUNTS))
        sc = int(rng.integers(3, 6))
        beams = int(rng.integers(2, 9))
        need = 1 + (sc - 1) + (cells * sc - 1) // beams
        sats = need + int(rng.integers(0, 4))
        if sats <= 40:
            break
    return ScenarioConfig(
        num_satellites=sats, num_cells=cells, serving_count=sc,
        max_beams=beams, antennas_x=2, antennas_y=2,
        cell_radius_m=float(rng.uniform(50e3, 250e3)), **overrides)


def _scene(config, seed):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    geometry = generate_geometry(config, rng)
    channels = build_channel_set(geometry, config, rng)
    return geometry, channels


def test_all_schedulers_satisfy_constraints():
    rng = np.random.default_rng(10)
    for trial in range(25):
        config = random_feasible_config(rng)
        geometry, channels = _scene(config, 1000 + trial)
        plans = [
            comm_schedule(geometry, channels, config),
            hbs(geometry, channels, config, m=min(3, config.num_satellites)),
            gdop_schedule(geometry, channels, config),
            parallax_schedule(geometry, config),
        ]
        for plan in plans:
            assert check_constraints(plan, config) == [], (trial, plan.scheme)
            serving = plan.serving_by_cell()
            assert all(len(s) == config.serving_count for s in serving.values())
            assert all(len(set(s)) == config.serving_count for s in serving.values())


def test_check_constraints_reports_violations():
    config = desk_config()
    geometry, channels = _scene(config, 3)
    plan = hbs(geometry, channels, config, m=2)
    assert check_constraints(plan, config) == []
    broken = SchedulePlan(plan.delta.copy(), list(plan.commits), "hybrid", 2)
    broken.delta[0, 0] = 5
    msgs = check_constraints(broken, config)
    assert any("not binary" in m for m in msgs)
    broken2 = SchedulePlan(plan.delta.copy(), list(plan.commits), "hybrid", 2)
    c0 = np.nonzero(broken2.delta[:, 0])[0][0]
    broken2.delta[c0, 0] = 0
    assert any("cell 0" in m for m in check_constraints(broken2, config))
    overload = SchedulePlan(np.ones_like(plan.delta), list(plan.commits), "hybrid", 2)
    assert any("capacity" in m for m in check_constraints(overload, config))


def test_comm_and_gdop_are_hbs_endpoints():
    rng = np.random.default_rng(11)
    for trial in range(5):
        config = random_feasible_config(rng)
        geometry, channels = _scene(config, 2000 + trial)
        comm = comm_schedule(geometry, channels, config)
        one = hbs(geometry, channels, config, m=1)
        assert np.array_equal(comm.delta, one.delta)
        assert comm.commits == one.commits
        assert comm.scheme == "comm" and comm.m is None
        gd = gdop_schedule(geometry, channels, config)
        full = hbs(geometry, channels, config, m=config.num_satellites)
        assert np.array_equal(gd.delta, full.delta)
        assert gd.commits == full.commits
        assert gd.scheme == "gdop" and gd.m is None


def _replay_hbs(geometry, channels, config, m):
    """Independent reimplementation: direct similarity sums, dense pinv."""
    I, C = config.num_satellites, config.num_cells
    sc = config.serving_count
    load = np.zeros(I, dtype=int)
    served = [[] for _ in range(I)]
    delta = np.zeros((I, C), dtype=int)
    M = [np.zeros((3, 3)) for _ in range(C)]
    commits = []
    for c in range(C):
        for _ in range(sc):
            cand = [i for i in range(I)
                    if load[i] < config.max_beams and delta[i, c] == 0]
            assert cand
            rho = {}
            for i in cand:
                hc = channels.h[i, c]
                total = 0.0
                for o in set(served[i]) | {c}:
                    ho = channels.h[i, o]
                    total += abs(np.vdot(hc, ho)) / float(np.vdot(ho, ho).real)
                rho[i] = total
            shortlist = sorted(cand, key=lambda i: (rho[i], i))[:m]
            scored = []
            for i in shortlist:
                a = a_vector(geometry, i, c)
                mu = (np.trace(np.linalg.pinv(M[c] + np.outer(a, a)))
                      - np.trace(np.linalg.pinv(M[c])))
                score = -mu if config.negate_mu else mu
                scored.append(((score, -i), i))
            best = max(scored)[1]
            delta[best, c] = 1
            load[best] += 1
            served[best].append(c)
            M[c] = M[c] + np.outer(a_vector(geometry, best, c),
                                   a_vector(geometry, best, c))
            commits.append((best, c))
    return commits


@pytest.mark.parametrize("negate", [False, True])
def test_hbs_matches_dense_replay(negate):
    # exact eigen updates so the library's metric is the dense one
    rng = np.random.default_rng(12)
    for trial in range(4):
        config = random_feasible_config(rng, use_exact_eigen=True,
                                        negate_mu=negate)
        geometry, channels = _scene(config, 3000 + trial)
        for m in (1, 2, config.num_satellites):
            plan = hbs(geometry, channels, config, m=m)
            assert plan.commits == _replay_hbs(geometry, channels, config, m), \
                (trial, m, negate)


def test_hbs_shortlist_is_interference_ranked():
    # with m = 1 the commit is always the least-similar free satellite
    config = desk_config()
    geometry, channels = _scene(config, 14)
    plan = hbs(geometry, channels, config, m=1)
    load = np.zeros(config.num_satellites, dtype=int)
    served = [[] for _ in range(config.num_satellites)]
    for sat, cell in plan.commits:
        cand = [i for i in range(config.num_satellites)
                if load[i] < config.max_beams and cell not in served[i]]
        best = min(cand, key=lambda i: (channel_similarity(channels, i, cell,
                                                           served[i]), i))
        assert sat == best
        load[sat] += 1
        served[sat].append(cell)


def test_ut_order_changes_processing_sequence():
    config = desk_config()
    geometry, channels = _scene(config, 15)
    order = tuple(reversed(range(config.num_cells)))
    reordered = ScenarioConfig.from_dict(
        {**config.to_dict(), "ut_order": list(order)})
    plan = hbs(geometry, channels, reordered, m=2)
    seen = [cell for _, cell in plan.commits]
    expected = [c for c in order for _ in range(config.serving_count)]
    assert seen == expected
    assert check_constraints(plan, reordered) == []


def test_hbs_capacity_error_when_channels_collapse():
    # orthogonal per-satellite channels keep similarity ties, so the m=1
    # scheduler drains satellites 0..2 before ever touching satellite 3
    config = ScenarioConfig(num_satellites=4, num_cells=7, serving_count=3,
                            max_beams=6, antennas_x=4, antennas_y=4)
    geometry, _ = _scene(config, 16)
    h = np.zeros((4, 7, 16), dtype=complex)
    basis = np.eye(16, dtype=complex)
    for i in range(3):
        h[i] = basis[:7]
    h[3] = np.tile(basis[0], (7, 1))
    channels = ChannelSet(h=h, loss_db=np.zeros((4, 7)),
                          phase=np.zeros((4, 7)), nx=4, ny=4)
    with pytest.raises(CapacityError):
        hbs(geometry, channels, config, m=1)


def test_parallax_capacity_error():
    config = ScenarioConfig(num_satellites=4, num_cells=7, serving_count=3,
                            max_beams=6, antennas_x=2, antennas_y=2,
                            cell_radius_m=200e3)
    rng = np.random.default_rng(np.random.SeedSequence(0))
    geometry = generate_geometry(config, rng)
    with pytest.raises(CapacityError):
        parallax_schedule(geometry, config)


def test_parallax_drops_duplicated_direction():
    # satellites 2 and 3 look identical from the UT; the earlier one is
    # dropped first, leaving the three distinct view directions
    config = ScenarioConfig(num_satellites=4, num_cells=1, serving_count=3,
                            max_beams=3)
    r = 7.0e6
    geometry = Geometry(
        sat_positions=np.array([[r, 0.0, 0.0],
                                [0.0, r, 0.0],
                                [0.0, 0.0, r],
                                [0.0, 0.0, 2.0 * r]]),
        ref_position=np.array([0.0, 0.0, 1.5 * r]),
        cell_centers=np.zeros((1, 3)),
        ut_positions=np.zeros((1, 3)),
    )
    plan = parallax_schedule(geometry, config)
    assert plan.serving_by_cell()[0] == (0, 1, 3)
    assert plan.commits == [(0, 0), (1, 0), (3, 0)]


def test_parallax_prefers_spread_over_cluster():
    rng = np.random.default_rng(17)
    config = desk_config()
    geometry, _ = _scene(config, 17)
    plan = parallax_schedule(geometry, config)
    assert check_constraints(plan, config) == []
    # kept rays are never a strict subset of a more clustered alternative:
    # every kept set's mean pairwise cosine is below the all-available mean
    for cell, sats in plan.serving_by_cell().items():
        p = geometry.ut_positions[cell]
        all_rays = geometry.sat_positions - p
        all_rays /= np.linalg.norm(all_rays, axis=1, keepdims=True)
        kept = all_rays[list(sats)]

        def mean_cos(rays):
            cos = rays @ rays.T
            n = len(rays)
            return (cos.sum() - n) / (n * (n - 1))

        assert mean_cos(kept) <= mean_cos(all_rays) + 1e-12


def test_dump_plan_format(tmp_path):
    config = desk_config()
    geometry, channels = _scene(config, 18)
    plan = hbs(geometry, channels, config, m=3)
    path = tmp_path / "plan.csv"
    dump_plan(plan, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "# scheme=hybrid m=3"
    assert lines[1] == "step,satellite,cell"
    assert len(lines) == 2 + len(plan.commits)
    for step, (sat, cell) in enumerate(plan.commits):
        assert lines[2 + step] == f"{step},{sat},{cell}"
    dump_plan(comm_schedule(geometry, channels, config), str(path))
    assert path.read_text().splitlines()[0] == "# scheme=comm m="


def test_hbs_rejects_bad_width():
    config = desk_config()
    geometry, channels = _scene(config, 19)
    with pytest.raises(ValueError):
        hbs(geometry, channels, config, m=0)
