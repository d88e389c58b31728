"""Monte-Carlo campaign runner and report I/O.

One trial = one constellation draw + one channel phase draw, shared by every
requested scheme so schemes are compared on identical geometry. Measurement
noise is drawn per (trial, cell) with a common stream, so paired schemes see
the same underlying noise.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .beamforming import (PositioningState, compute_sinr, dsta,
                          scb_beamformer, scbwi_snr, zf_beamformer)
from .channel import ChannelSet, build_channel_set
from .positioning import build_tdoa_model, crlb, gdop, sample_tdoa, toa_variance
from .scenario import Geometry, ScenarioConfig, SPEED_OF_LIGHT_M_S, generate_geometry
from .scheduling import (CapacityError, SchedulePlan, check_constraints,
                         comm_schedule, gdop_schedule, hbs, parallax_schedule)

BEAMFORMING_SCHEMES = ("dsta", "zf", "scb", "scbwi")
SCHEDULING_SCHEMES = ("comm", "hybrid", "gdop", "parallax")


@dataclass(frozen=True)
class SchemeSpec:
    """One (beamforming, scheduling) combination to evaluate."""

    beamforming: str
    scheduling: str
    m: Optional[int] = None   # shortlist width, hybrid scheduling only

    def __post_init__(self) -> None:
        if self.beamforming not in BEAMFORMING_SCHEMES:
            raise ValueError(f"unknown beamforming scheme {self.beamforming!r}")
        if self.scheduling not in SCHEDULING_SCHEMES:
            raise ValueError(f"unknown scheduling scheme {self.scheduling!r}")
        if (self.scheduling == "hybrid") != (self.m is not None):
            raise ValueError("shortlist width m is set iff scheduling is hybrid")
        if self.m is not None and self.m < 1:
            raise ValueError("shortlist width m must be at least 1")

    @property
    def plan_key(self) -> tuple[str, Optional[int]]:
        return (self.scheduling, self.m)

    def label(self) -> str:
        if self.m is not None:
            return f"{self.beamforming}/{self.scheduling}(m={self.m})"
        return f"{self.beamforming}/{self.scheduling}"


@dataclass
class ReportRow:
    beamforming: str
    scheduling: str
    m: Optional[int]
    trial: int
    seed: int
    cell: int
    serving: tuple[int, ...]
    crlb_m2: float
    position_error_m: float
    gdop: float
    sinr_db: tuple[float, ...]     # per serving satellite, same order


@dataclass
class TrialFailure:
    trial: int
    scheme: str
    message: str


@dataclass
class CampaignResult:
    rows: list[ReportRow]
    failures: list[TrialFailure]
    config: ScenarioConfig
    campaign_seed: int


def _build_plan(
    key: tuple[str, Optional[int]],
    geometry: Geometry,
    channels: ChannelSet,
    config: ScenarioConfig,
) -> SchedulePlan:
    scheduling, m = key
    if scheduling == "comm":
        return comm_schedule(geometry, channels, config)
    if scheduling == "gdop":
        return gdop_schedule(geometry, channels, config)
    if scheduling == "parallax":
        return parallax_schedule(geometry, config)
    return hbs(geometry, channels, config, m=m)


def _fixed_beam_sinr(
    scheme: str,
    plan: SchedulePlan,
    channels: ChannelSet,
    config: ScenarioConfig,
) -> dict[tuple[int, int], float]:
    """Per-link SINR for the non-adaptive schemes."""
    noise = config.noise_power_w
    power = config.beam_power_w
    table: dict[tuple[int, int], float] = {}
    for sat, cells in plan.cells_by_sat().items():
        H = channels.h[sat, list(cells), :]
        if scheme == "scbwi":
            for c in cells:
                table[(sat, c)] = scbwi_snr(channels.h[sat, c], power, noise)
            continue
        if scheme == "zf":
            W = zf_beamformer(H, power)
        elif scheme == "scb":
            W = np.stack([scb_beamformer(channels.h[sat, c], power) for c in cells],
                         axis=1)
        else:
            raise ValueError(f"unknown fixed beamforming scheme {scheme!r}")
        for idx, sinr in enumerate(compute_sinr(H, W, noise)):
            table[(sat, cells[idx])] = float(sinr)
    return table


def _dsta_sinr(
    plan: SchedulePlan,
    geometry: Geometry,
    channels: ChannelSet,
    config: ScenarioConfig,
    backend: str,
) -> dict[tuple[int, int], float]:
    state = PositioningState(
        geometry,
        plan.serving_by_cell(),
        config.bandwidth_hz,
        config.ref_toa_var_s2,
        config.gamma_init,
    )
    for sat, cells in sorted(plan.cells_by_sat().items()):
        dsta(sat, list(cells), channels.h[sat, list(cells), :], state, config,
             backend=backend)
    return dict(state.sinr)


def estimate_position(
    geometry: Geometry,
    cell: int,
    serving: Sequence[int],
    sigma2: dict[int, float],
    sigma0_2: float,
    tdoa_s: np.ndarray,
    init_m: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Weighted least squares position from one TDOA measurement vector."""
    sats = geometry.sat_positions[list(serving)]
    ref = geometry.ref_position
    var = np.array([sigma2[i] for i in serving])
    R = np.diag(var) + sigma0_2
    L = np.linalg.cholesky(R)
    v = SPEED_OF_LIGHT_M_S

    def residual(p: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(sats - p, axis=1)
        d0 = np.linalg.norm(ref - p)
        r = (d - d0) / v - tdoa_s
        return scipy.linalg.solve_triangular(L, r, lower=True)

    start = geometry.ut_positions[cell] if init_m is None else np.asarray(init_m, float)
    fit = scipy.optimize.least_squares(residual, start, method="lm")
    return fit.x


def run_trial(
    config: ScenarioConfig,
    schemes: Sequence[SchemeSpec],
    trial: int,
    campaign_seed: int,
    backend: str = "auto",
) -> tuple[list[ReportRow], list[TrialFailure]]:
    """All rows for one constellation/channel draw."""
    seed = campaign_seed + trial
    rng_geo = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    rng_phase = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    geometry = generate_geometry(config, rng_geo)
    channels = build_channel_set(geometry, config, rng_phase)

    plans: dict[tuple[str, Optional[int]], SchedulePlan] = {}
    failures: list[TrialFailure] = []
    rows: list[ReportRow] = []
    for spec in schemes:
        key = spec.plan_key
        if key not in plans:
            try:
                plan = _build_plan(key, geometry, channels, config)
            except CapacityError as exc:
                plans[key] = None
                failures.append(TrialFailure(trial, spec.label(), str(exc)))
                continue
            bad = check_constraints(plan, config)
            if bad:
                plans[key] = None
                failures.append(TrialFailure(trial, spec.label(), "; ".join(bad)))
                continue
            plans[key] = plan
        plan = plans[key]
        if plan is None:
            failures.append(TrialFailure(trial, spec.label(), "scheduling failed"))
            continue

        try:
            if spec.beamforming == "dsta":
                sinr = _dsta_sinr(plan, geometry, channels, config, backend)
            else:
                sinr = _fixed_beam_sinr(spec.beamforming, plan, channels, config)
        except Exception as exc:
            failures.append(TrialFailure(trial, spec.label(), str(exc)))
            continue

        serving_map = plan.serving_by_cell()
        for cell in range(config.num_cells):
            serving = serving_map[cell]
            sigma2 = {
                i: toa_variance(sinr[(i, cell)], config.bandwidth_hz) for i in serving
            }
            model = build_tdoa_model(geometry, cell, serving, sigma2,
                                     config.ref_toa_var_s2)
            rng_meas = np.random.default_rng(
                np.random.SeedSequence(seed, spawn_key=(2, cell)))
            tdoa = sample_tdoa(model, 1, rng_meas)[0]
            est = estimate_position(geometry, cell, serving, sigma2,
                                    config.ref_toa_var_s2, tdoa)
            err = float(np.linalg.norm(est - geometry.ut_positions[cell]))
            rows.append(ReportRow(
                beamforming=spec.beamforming,
                scheduling=spec.scheduling,
                m=spec.m,
                trial=trial,
                seed=seed,
                cell=cell,
                serving=tuple(serving),
                crlb_m2=float(crlb(model)),
                position_error_m=err,
                gdop=float(gdop(model)),
                sinr_db=tuple(10.0 * math.log10(sinr[(i, cell)]) for i in serving),
            ))
    return rows, failures


def _trial_worker(args: tuple) -> tuple[list[ReportRow], list[TrialFailure]]:
    return run_trial(*args)


def run_campaign(
    config: ScenarioConfig,
    schemes: Sequence[SchemeSpec],
    num_trials: int,
    campaign_seed: int = 0,
    jobs: int = 1,
    backend: str = "auto",
) -> CampaignResult:
    """Run ``num_trials`` independent trials; identical output for any ``jobs``."""
    if num_trials < 1:
        raise ValueError("need at least one trial")
    tasks = [(config, tuple(schemes), t, campaign_seed, backend)
             for t in range(num_trials)]
    rows: list[ReportRow] = []
    failures: list[TrialFailure] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for r, f in pool.map(_trial_worker, tasks):
                rows.extend(r)
                failures.extend(f)
    else:
        for task in tasks:
            r, f = run_trial(*task)
            rows.extend(r)
            failures.extend(f)
    rows.sort(key=lambda r: (r.beamforming, r.scheduling, r.m is not None,
                             r.m or 0, r.trial, r.cell))
    return CampaignResult(rows=rows, failures=failures, config=config,
                          campaign_seed=campaign_seed)


# -- report I/O ----------------------------------------------------------------

_COLUMNS = ("beamforming", "scheduling", "m", "trial", "seed", "cell",
            "serving", "crlb_m2", "position_error_m", "gdop", "sinr_db")


def _sidecar_path(path: str) -> str:
    stem = path[:-4] if path.endswith(".csv") else path
    return stem + ".config.json"


def write_report(result: CampaignResult, path: str) -> None:
    """CSV report plus a JSON sidecar holding the configuration and seed."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_COLUMNS)
        for r in result.rows:
            writer.writerow([
                r.beamforming,
                r.scheduling,
                "" if r.m is None else r.m,
                r.trial,
                r.seed,
                r.cell,
                ";".join(str(i) for i in r.serving),
                f"{r.crlb_m2:.17g}",
                f"{r.position_error_m:.17g}",
                f"{r.gdop:.17g}",
                ";".join(f"{x:.17g}" for x in r.sinr_db),
            ])
    sidecar = {
        "config": result.config.to_dict(),
        "campaign_seed": result.campaign_seed,
        "failures": [dataclasses.asdict(f) for f in result.failures],
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(path: str) -> list[ReportRow]:
    """Parse a report CSV; rejects duplicate (scheme, trial, cell) rows."""
    rows: list[ReportRow] = []
    seen: set[tuple] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"report is missing columns {sorted(missing)}")
        for rec in reader:
            row = ReportRow(
                beamforming=rec["beamforming"],
                scheduling=rec["scheduling"],
                m=None if rec["m"] == "" else int(rec["m"]),
                trial=int(rec["trial"]),
                seed=int(rec["seed"]),
                cell=int(rec["cell"]),
                serving=tuple(int(s) for s in rec["serving"].split(";")),
                crlb_m2=float(rec["crlb_m2"]),
                position_error_m=float(rec["position_error_m"]),
                gdop=float(rec["gdop"]),
                sinr_db=tuple(float(s) for s in rec["sinr_db"].split(";")),
            )
            key = (row.beamforming, row.scheduling, row.m, row.trial, row.cell)
            if key in seen:
                raise ValueError(f"duplicate report row {key}")
            seen.add(key)
            rows.append(row)
    return rows


def empirical_cdf(values: Iterable[float]) -> tuple[np.ndarray, np.ndarray]:
    """Sorted values paired with probabilities k/n, k = 1..n."""
    x = np.sort(np.asarray(list(values), dtype=float))
    if x.size == 0:
        raise ValueError("empty sample")
    return x, np.arange(1, x.size + 1) / x.size


def group_rows(rows: Iterable[ReportRow],
               keys: Sequence[str]) -> dict[tuple, list[ReportRow]]:
    """Rows bucketed by the given ReportRow field names."""
    out: dict[tuple, list[ReportRow]] = {}
    for row in rows:
        k = tuple(getattr(row, key) for key in keys)
        out.setdefault(k, []).append(row)
    return out


def mean_metric(rows: Iterable[ReportRow], metric: str) -> float:
    vals = [getattr(r, metric) for r in rows]
    if not vals:
        raise ValueError("no rows")
    return float(np.mean(vals))
