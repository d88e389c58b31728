"""Scenario geometry: hexagonal cell grid on a spherical Earth plus a
randomly drawn LEO constellation.

Cells sit on a hex lattice draped over the sphere around a configurable
anchor point, one user terminal per cell center. Satellites are sampled
uniformly on the spherical cap of the orbit shell from which the whole
grid is visible above the minimum elevation; one extra draw, the one of
maximum elevation seen from the anchor, becomes the reference satellite
used as the common timing anchor of all TDOA measurements.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
SPEED_OF_LIGHT_M_S = 299_792_458.0


def centered_hex_number(rings: int) -> int:
    """Cell count of a hex grid with the given number of rings around the center."""
    return 1 + 3 * rings * (rings + 1)


def hex_rings_for(count: int) -> int:
    """Inverse of centered_hex_number; raises if count is not a valid grid size."""
    rings = 0
    while centered_hex_number(rings) < count:
        rings += 1
    if centered_hex_number(rings) != count:
        raise ValueError(
            f"num_cells={count} is not a centered hexagonal number (1, 7, 19, 37, 61, ...)"
        )
    return rings


@dataclass
class ScenarioConfig:
    """Full parameter set of one simulation scenario.

    Power and threshold fields are stored in linear units; ``from_dict``
    accepts the dB-valued spellings (``beam_power_dbw``, ``gamma_init_db``,
    ``gamma_step_db``, ``gamma_max_db``) and converts on load. The noise
    density keeps its conventional dBm/Hz unit, with ``noise_power_w``
    derived over the signal bandwidth.
    """

    num_satellites: int = 21            # visible serving candidates (I)
    num_cells: int = 61                 # C, a centered hexagonal number
    cell_radius_m: float = 43_300.0
    max_beams: int = 12                 # per-satellite beam budget (K)
    serving_count: int = 4              # satellites scheduled per UT (I_TDOA)
    antennas_x: int = 8
    antennas_y: int = 8
    orbit_height_m: float = 600_000.0
    carrier_freq_hz: float = 4.0e9
    bandwidth_hz: float = 50.0e6
    beam_power_w: float = 10.0 ** 2.6   # 26 dBW
    noise_density_dbm_hz: float = -174.0
    ref_toa_var_s2: float = 1e-19       # reference-link TOA variance (sigma_0^2)
    candidate_width: int = 4            # HBS candidate pool size (m)
    gamma_init: float = 0.1             # initial SINR threshold, linear
    gamma_step: float = 10.0 ** 0.05    # multiplicative raise per DSTA iteration
    gamma_max: float = 1000.0           # threshold ceiling, linear
    min_elevation_deg: float = 10.0
    anchor_lat_deg: float = 0.0
    anchor_lon_deg: float = 0.0
    rng_seed: int = 0
    sdr_tolerance: float = 1e-7
    rank_tolerance: float = 1e-12
    use_exact_eigen: bool = False
    negate_mu: bool = False
    ut_order: Optional[tuple[int, ...]] = None

    def __post_init__(self) -> None:
        self.validate()

    # -- derived quantities -------------------------------------------------

    @property
    def num_antennas(self) -> int:
        return self.antennas_x * self.antennas_y

    @property
    def orbit_radius_m(self) -> float:
        return EARTH_RADIUS_M + self.orbit_height_m

    @property
    def noise_power_w(self) -> float:
        """Receiver noise power over the signal bandwidth (epsilon^2), watts."""
        return 10.0 ** ((self.noise_density_dbm_hz - 30.0) / 10.0) * self.bandwidth_hz

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        if self.num_satellites < 1:
            raise ValueError("num_satellites must be >= 1")
        if self.num_cells < 1:
            raise ValueError("num_cells must be >= 1")
        if self.serving_count < 3:
            raise ValueError("serving_count must be >= 3 (TDOA needs 3 equations)")
        if self.serving_count > self.num_satellites:
            raise ValueError("serving_count cannot exceed num_satellites")
        if self.num_cells * self.serving_count > self.num_satellites * self.max_beams:
            raise ValueError(
                "infeasible beam budget: num_cells*serving_count exceeds "
                "num_satellites*max_beams"
            )
        if not 1 <= self.candidate_width <= self.num_satellites:
            raise ValueError("candidate_width must be in [1, num_satellites]")
        for name in ("cell_radius_m", "orbit_height_m", "carrier_freq_hz",
                     "bandwidth_hz", "beam_power_w", "ref_toa_var_s2",
                     "sdr_tolerance", "rank_tolerance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.antennas_x < 1 or self.antennas_y < 1:
            raise ValueError("antenna counts must be >= 1")
        if not 0.0 < self.gamma_init <= self.gamma_max:
            raise ValueError("gamma thresholds must satisfy 0 < gamma_init <= gamma_max")
        if self.gamma_step <= 1.0:
            raise ValueError("gamma_step must exceed 1 (it multiplies the threshold)")
        if not 0.0 < self.min_elevation_deg <= 90.0:
            raise ValueError("min_elevation_deg must be in (0, 90]")
        if self.ut_order is not None:
            if sorted(self.ut_order) != list(range(self.num_cells)):
                raise ValueError("ut_order must be a permutation of range(num_cells)")

    # -- (de)serialization --------------------------------------------------

    _DB_FIELDS = {
        "beam_power_dbw": ("beam_power_w", lambda x: 10.0 ** (x / 10.0)),
        "gamma_init_db": ("gamma_init", lambda x: 10.0 ** (x / 10.0)),
        "gamma_step_db": ("gamma_step", lambda x: 10.0 ** (x / 10.0)),
        "gamma_max_db": ("gamma_max", lambda x: 10.0 ** (x / 10.0)),
    }

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            if key in cls._DB_FIELDS:
                target, conv = cls._DB_FIELDS[key]
                kwargs[target] = conv(value)
            elif key in known:
                kwargs[key] = tuple(value) if key == "ut_order" and value is not None else value
            else:
                raise ValueError(f"unknown config key: {key!r}")
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["ut_order"] is not None:
            out["ut_order"] = list(out["ut_order"])
        return out


@dataclass
class Geometry:
    """Positions of everything, meters, Earth-centered frame."""

    sat_positions: np.ndarray   # (I, 3) serving-candidate satellites
    ref_position: np.ndarray    # (3,) reference satellite
    cell_centers: np.ndarray    # (C, 3)
    ut_positions: np.ndarray    # (C, 3) one UT per cell center

    def serialize(self) -> bytes:
        """Deterministic byte image; equal seeds give bitwise-equal output."""
        parts = []
        for arr in (self.sat_positions, self.ref_position,
                    self.cell_centers, self.ut_positions):
            a = np.ascontiguousarray(arr, dtype=np.float64)
            parts.append(np.array(a.shape, dtype=np.int64).tobytes())
            parts.append(a.tobytes())
        return b"".join(parts)


def distance(x: np.ndarray, y: np.ndarray) -> float:
    """Euclidean distance between two points, meters."""
    return float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))


def _latlon_unit(lat_deg: float, lon_deg: float) -> np.ndarray:
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    return np.array([
        math.cos(lat) * math.cos(lon),
        math.cos(lat) * math.sin(lon),
        math.sin(lat),
    ])


def _tangent_basis(anchor_unit: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """East/north unit vectors of the tangent plane at a point on the sphere."""
    z = np.array([0.0, 0.0, 1.0])
    east = np.cross(z, anchor_unit)
    n = np.linalg.norm(east)
    if n < 1e-12:
        east = np.array([1.0, 0.0, 0.0])  # polar anchor: pick a fixed meridian
    else:
        east = east / n
    north = np.cross(anchor_unit, east)
    return east, north


def _hex_offsets(rings: int, spacing: float) -> np.ndarray:
    """Planar hex-lattice offsets, ring by ring, (C, 2) meters."""
    u = spacing * np.array([1.0, 0.0])
    v = spacing * np.array([0.5, math.sqrt(3.0) / 2.0])
    # axial directions for walking each ring counter-clockwise
    axial_dirs = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]
    pts = [np.zeros(2)]
    for ring in range(1, rings + 1):
        q, r = ring, 0  # start at the +u corner
        for d in range(6):
            step = axial_dirs[(d + 2) % 6]
            for _ in range(ring):
                pts.append(q * u + r * v)
                q, r = q + step[0], r + step[1]
    return np.array(pts)


def generate_cells(config: ScenarioConfig) -> np.ndarray:
    """Cell centers (C, 3) on the Earth sphere around the configured anchor.

    Planar hex offsets (spacing sqrt(3) * cell_radius) are mapped through the
    spherical exponential map, so geodesic distance from the anchor equals the
    planar offset length exactly.
    """
    rings = hex_rings_for(config.num_cells)
    spacing = math.sqrt(3.0) * config.cell_radius_m
    offsets = _hex_offsets(rings, spacing)
    anchor = _latlon_unit(config.anchor_lat_deg, config.anchor_lon_deg)
    east, north = _tangent_basis(anchor)
    centers = np.empty((len(offsets), 3))
    for k, (x, y) in enumerate(offsets):
        d = math.hypot(x, y)
        if d == 0.0:
            centers[k] = EARTH_RADIUS_M * anchor
            continue
        direction = (x * east + y * north) / d
        ang = d / EARTH_RADIUS_M
        centers[k] = EARTH_RADIUS_M * (math.cos(ang) * anchor + math.sin(ang) * direction)
    return centers


def elevation_deg(ground: np.ndarray, sat: np.ndarray) -> float:
    """Elevation of a satellite above the local horizon of a ground point."""
    ground = np.asarray(ground, dtype=float)
    sat = np.asarray(sat, dtype=float)
    up = ground / np.linalg.norm(ground)
    los = sat - ground
    rng = np.linalg.norm(los)
    if rng == 0.0:
        raise ValueError("satellite coincides with ground point")
    s = float(np.dot(los, up) / rng)
    return math.degrees(math.asin(max(-1.0, min(1.0, s))))


def visible_cap_half_angle(orbit_radius_m: float, min_elevation_deg: float) -> float:
    """Earth-center half angle of the orbit-shell cap visible above min elevation."""
    e = math.radians(min_elevation_deg)
    return math.pi / 2.0 - e - math.asin(EARTH_RADIUS_M * math.cos(e) / orbit_radius_m)


def generate_constellation(
    config: ScenarioConfig,
    rng: np.random.Generator,
    cell_centers: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample serving satellites plus the reference satellite.

    I + 1 points are drawn uniformly on the orbit-shell cap shrunk by the
    grid's angular radius, which keeps every draw above min_elevation from
    every cell center. The draw with maximum elevation from the anchor
    becomes the reference.
    """
    anchor = cell_centers[0] / np.linalg.norm(cell_centers[0])
    r_orbit = config.orbit_radius_m
    psi_max = visible_cap_half_angle(r_orbit, config.min_elevation_deg)
    cell_units = cell_centers / np.linalg.norm(cell_centers, axis=1, keepdims=True)
    grid_radius = float(np.max(np.arccos(np.clip(cell_units @ anchor, -1.0, 1.0))))
    psi_eff = psi_max - grid_radius
    if psi_eff <= 0.0:
        raise ValueError(
            "no orbit-shell region is visible from the whole grid at "
            f"min_elevation={config.min_elevation_deg} deg"
        )
    east, north = _tangent_basis(anchor)
    n = config.num_satellites + 1
    cos_psi = rng.uniform(math.cos(psi_eff), 1.0, size=n)
    azimuth = rng.uniform(0.0, 2.0 * math.pi, size=n)
    sin_psi = np.sqrt(np.clip(1.0 - cos_psi ** 2, 0.0, None))
    points = r_orbit * (
        sin_psi[:, None] * (np.cos(azimuth)[:, None] * east + np.sin(azimuth)[:, None] * north)
        + cos_psi[:, None] * anchor
    )
    anchor_ground = EARTH_RADIUS_M * anchor
    elevations = np.array([elevation_deg(anchor_ground, p) for p in points])
    ref_idx = int(np.argmax(elevations))
    ref = points[ref_idx]
    sats = np.delete(points, ref_idx, axis=0)
    return sats, ref


def generate_geometry(config: ScenarioConfig, rng: Optional[np.random.Generator] = None) -> Geometry:
    """Cells, UTs, and constellation for one trial."""
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    cells = generate_cells(config)
    sats, ref = generate_constellation(config, rng, cells)
    return Geometry(
        sat_positions=sats,
        ref_position=ref,
        cell_centers=cells,
        ut_positions=cells.copy(),
    )
