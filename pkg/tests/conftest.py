"""Shared fixtures and the acceptance summary hook."""

from __future__ import annotations

import numpy as np
import pytest

from leopos.scenario import ScenarioConfig, generate_geometry


def desk_config(**overrides) -> ScenarioConfig:
    """Small scenario every suite can afford to run many times."""
    base = dict(
        num_satellites=8,
        num_cells=7,
        serving_count=3,
        max_beams=4,
        antennas_x=4,
        antennas_y=4,
        cell_radius_m=200e3,
        noise_density_dbm_hz=-224.0,
        beam_power_w=10.0 ** 2.0,
        gamma_init=10.0 ** -1.0,
        gamma_step=10.0 ** 0.1,
        gamma_max=10.0 ** 4.0,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def random_tdoa_inputs(rng: np.random.Generator, serving_count: int = 3):
    """Geometry, cell, serving set and SINRs for one random TDOA instance."""
    cfg = desk_config(serving_count=serving_count,
                      max_beams=max(4, serving_count))
    geometry = generate_geometry(cfg, rng)
    cell = int(rng.integers(cfg.num_cells))
    serving = tuple(
        int(i) for i in
        rng.choice(cfg.num_satellites, size=serving_count, replace=False)
    )
    sinr = {i: float(10.0 ** rng.uniform(-1.0, 2.5)) for i in serving}
    return cfg, geometry, cell, serving, sinr


_ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, passed: bool, detail: str = "") -> None:
    _ACCEPTANCE.append((name, passed, detail))


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    tw = terminalreporter
    tw.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        verdict = "PASS" if passed else "FAIL"
        line = f"ACCEPTANCE {verdict} {name}"
        if detail:
            line += f" ({detail})"
        tw.write_line(line)
