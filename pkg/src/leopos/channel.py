"""Downlink channel model: free-space loss, UPA steering, random phase.

Each satellite carries a uniform planar array whose boresight points to
nadir; the local x/y axes come from the east/north directions at the
sub-satellite point. A channel is a deterministic steering vector scaled
by the free-space amplitude and rotated by one uniform random phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .scenario import Geometry, ScenarioConfig, elevation_deg


def free_space_loss(freq_hz: float, dist_m: float) -> float:
    """Free-space path loss in dB (f in MHz and d in km inside the formula)."""
    if freq_hz <= 0 or dist_m <= 0:
        raise ValueError("frequency and distance must be positive")
    f_mhz = freq_hz / 1e6
    d_km = dist_m / 1e3
    return 20.0 * math.log10(f_mhz) + 20.0 * math.log10(d_km) + 32.4


def upa_response(theta_x: float, theta_y: float, nx: int, ny: int) -> np.ndarray:
    """Steering vector of an nx-by-ny planar array, Kronecker of the two axes.

    Each axis factor is (1/n) * [1, e^{-j pi t}, ..., e^{-j pi (n-1) t}], so
    the full vector has l2 norm exactly 1/sqrt(nx*ny).
    """
    if nx < 1 or ny < 1:
        raise ValueError("antenna counts must be >= 1")
    vx = np.exp(-1j * math.pi * theta_x * np.arange(nx)) / nx
    vy = np.exp(-1j * math.pi * theta_y * np.arange(ny)) / ny
    return np.kron(vx, vy)


def _array_axes(sat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Local (x, y, z) = (east, north, up) unit axes of a satellite's array."""
    up = sat / np.linalg.norm(sat)
    z = np.array([0.0, 0.0, 1.0])
    east = np.cross(z, up)
    n = np.linalg.norm(east)
    if n < 1e-12:
        east = np.array([1.0, 0.0, 0.0])  # satellite over a pole
    else:
        east = east / n
    north = np.cross(up, east)
    return east, north, up


def propagation_angles(sat: np.ndarray, ut: np.ndarray) -> tuple[float, float]:
    """Angles (phi_x, phi_y) between the satellite-to-UT ray and the array axes.

    Radians. A UT at boresight (straight down) gives (pi/2, pi/2).
    """
    sat = np.asarray(sat, dtype=float)
    ut = np.asarray(ut, dtype=float)
    ray = ut - sat
    d = np.linalg.norm(ray)
    if d == 0.0:
        raise ValueError("UT coincides with satellite")
    ray = ray / d
    east, north, _ = _array_axes(sat)
    phi_x = math.acos(max(-1.0, min(1.0, float(np.dot(ray, east)))))
    phi_y = math.acos(max(-1.0, min(1.0, float(np.dot(ray, north)))))
    return phi_x, phi_y


def steering_args(phi_x: float, phi_y: float) -> tuple[float, float]:
    """Map propagation angles to the UPA phase arguments (theta_x, theta_y)."""
    return math.sin(phi_y) * math.cos(phi_x), math.cos(phi_y)


def channel_vector(
    sat: np.ndarray,
    ut: np.ndarray,
    freq_hz: float,
    nx: int,
    ny: int,
    phase: float,
) -> np.ndarray:
    """Complex downlink channel: amplitude from FSPL, steering from geometry."""
    loss_db = free_space_loss(freq_hz, float(np.linalg.norm(np.asarray(ut) - np.asarray(sat))))
    amp = 10.0 ** (-loss_db / 20.0)
    phi_x, phi_y = propagation_angles(sat, ut)
    tx, ty = steering_args(phi_x, phi_y)
    return amp * np.exp(1j * phase) * upa_response(tx, ty, nx, ny)


@dataclass
class ChannelSet:
    """Channels h[i, c] for every satellite-UT pair, plus their ingredients."""

    h: np.ndarray          # (I, C, N) complex
    loss_db: np.ndarray    # (I, C)
    phase: np.ndarray      # (I, C)
    nx: int
    ny: int

    @property
    def num_satellites(self) -> int:
        return self.h.shape[0]

    @property
    def num_cells(self) -> int:
        return self.h.shape[1]


def build_channel_set(
    geometry: Geometry,
    config: ScenarioConfig,
    rng: np.random.Generator,
) -> ChannelSet:
    """Draw one channel realization for every satellite-UT pair.

    Phases are drawn satellite-major, so a fixed seed reproduces the set
    bit for bit. Every pair must be above the horizon; the constellation
    generator guarantees min-elevation visibility.
    """
    sats = geometry.sat_positions
    uts = geometry.ut_positions
    num_i, num_c = len(sats), len(uts)
    n = config.num_antennas
    h = np.empty((num_i, num_c, n), dtype=complex)
    loss = np.empty((num_i, num_c))
    phase = rng.uniform(0.0, 2.0 * math.pi, size=(num_i, num_c))
    for i in range(num_i):
        for c in range(num_c):
            elev = elevation_deg(uts[c], sats[i])
            if elev < 0.0:
                raise AssertionError(
                    f"satellite {i} below horizon of UT {c} (elevation {elev:.3f} deg)"
                )
            loss[i, c] = free_space_loss(
                config.carrier_freq_hz,
                float(np.linalg.norm(uts[c] - sats[i])),
            )
            phi_x, phi_y = propagation_angles(sats[i], uts[c])
            tx, ty = steering_args(phi_x, phi_y)
            amp = 10.0 ** (-loss[i, c] / 20.0)
            h[i, c] = amp * np.exp(1j * phase[i, c]) * upa_response(
                tx, ty, config.antennas_x, config.antennas_y
            )
    return ChannelSet(h=h, loss_db=loss, phase=phase, nx=config.antennas_x, ny=config.antennas_y)


def channel_similarity(channels: ChannelSet, sat: int, cell: int, served: Iterable[int]) -> float:
    """Similarity of h[sat, cell] to the channels the satellite already serves.

    Sum over the served set plus the candidate itself of
    |<h_c, h_c'>| / ||h_c'||^2; the self term contributes exactly 1.
    """
    hc = channels.h[sat, cell]
    total = 0.0
    for other in set(served) | {cell}:
        ho = channels.h[sat, other]
        denom = float(np.real(np.vdot(ho, ho)))
        if denom == 0.0:
            raise ValueError(f"zero channel for satellite {sat}, cell {other}")
        total += abs(np.vdot(hc, ho)) / denom
    return total


def dump_channels(channels: ChannelSet, path: str) -> None:
    """Text dump, one record per (satellite, cell): loss, phase, antenna entries.

    17 significant digits; meant for cross-language golden comparisons.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# sat,cell,loss_db,phase," +
                 ",".join(f"re{k},im{k}" for k in range(channels.h.shape[2])) + "\n")
        for i in range(channels.num_satellites):
            for c in range(channels.num_cells):
                entries = []
                for z in channels.h[i, c]:
                    entries.append(f"{z.real:.17g}")
                    entries.append(f"{z.imag:.17g}")
                fh.write(
                    f"{i},{c},{channels.loss_db[i, c]:.17g},"
                    f"{channels.phase[i, c]:.17g}," + ",".join(entries) + "\n"
                )


def load_channels(path: str, nx: int, ny: int) -> ChannelSet:
    """Read a dump back; inverse of dump_channels."""
    recs: list[tuple[int, int, float, float, np.ndarray]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            parts = line.strip().split(",")
            i, c = int(parts[0]), int(parts[1])
            loss, phase = float(parts[2]), float(parts[3])
            vals = np.array([float(x) for x in parts[4:]])
            recs.append((i, c, loss, phase, vals[0::2] + 1j * vals[1::2]))
    num_i = max(r[0] for r in recs) + 1
    num_c = max(r[1] for r in recs) + 1
    n = len(recs[0][4])
    h = np.zeros((num_i, num_c, n), dtype=complex)
    loss = np.zeros((num_i, num_c))
    phase = np.zeros((num_i, num_c))
    for i, c, l, p, vec in recs:
        h[i, c], loss[i, c], phase[i, c] = vec, l, p
    return ChannelSet(h=h, loss_db=loss, phase=phase, nx=nx, ny=ny)
