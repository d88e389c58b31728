"""Beamforming schemes and the per-satellite threshold-raising search.

All SINRs use the non-conjugated form |h^T w|^2 / (interference + noise);
frequency reuse removes inter-satellite terms, so interference only comes
from the same satellite's other beams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .conic import SdrInstance, SdrSolution, coupling_matrix, rank_one_extract, solve_feasibility
from .positioning import TdoaModel, build_tdoa_model, crlb_gradient, toa_variance
from .scenario import Geometry, ScenarioConfig


def compute_sinr(channels: np.ndarray, beams: np.ndarray, noise_power: float) -> np.ndarray:
    """Per-beam SINR for one satellite.

    ``channels`` rows are the served UTs' channels (K, N); ``beams`` columns
    are the matching beamformers (N, K).
    """
    channels = np.atleast_2d(np.asarray(channels, dtype=complex))
    beams = np.asarray(beams, dtype=complex)
    if beams.ndim == 1:
        beams = beams[:, None]
    if noise_power <= 0:
        raise ValueError("noise_power must be positive")
    gains = np.abs(channels @ beams) ** 2   # gains[c, c'] = |h_c^T w_c'|^2
    k = gains.shape[0]
    sig = np.diag(gains)
    intf = gains.sum(axis=1) - sig
    return sig / (intf + noise_power)


def scb_beamformer(channel: np.ndarray, power: float) -> np.ndarray:
    """Matched single-channel beam: sqrt(P/||h||^2) * conj(h)."""
    h = np.asarray(channel, dtype=complex)
    nrm2 = float(np.real(np.vdot(h, h)))
    if nrm2 == 0.0:
        raise ValueError("zero channel")
    if power <= 0:
        raise ValueError("power must be positive")
    return math.sqrt(power / nrm2) * h.conj()


def zf_beamformer(channels: np.ndarray, power: float) -> np.ndarray:
    """Zero-forcing beams (N, K) for one satellite's served channels (K, N).

    Built from the pseudo-inverse of the matrix whose rows are h_c^T, so the
    cross terms h_c^T w_{c'} vanish; scaled so the total radiated power is
    P * K.
    """
    H = np.atleast_2d(np.asarray(channels, dtype=complex))
    k, n = H.shape
    if k > n:
        raise ValueError("more served UTs than antennas")
    if power <= 0:
        raise ValueError("power must be positive")
    gram = H @ H.conj().T
    try:
        W0 = H.conj().T @ np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise ValueError("served channels are linearly dependent") from exc
    beta = math.sqrt(power * k / float(np.sum(np.abs(W0) ** 2)))
    return beta * W0


def scbwi_snr(channel: np.ndarray, power: float, noise_power: float) -> float:
    """Interference-free benchmark SNR: P * ||h||^2 / noise."""
    h = np.asarray(channel, dtype=complex)
    if noise_power <= 0:
        raise ValueError("noise_power must be positive")
    return power * float(np.real(np.vdot(h, h))) / noise_power


class PositioningState:
    """Network-wide SINR table that DSTA reads gradients from.

    Every scheduled link starts at the initial threshold; satellites update
    their rows as their searches progress and complete.
    """

    def __init__(
        self,
        geometry: Geometry,
        serving_by_cell: Mapping[int, Sequence[int]],
        bandwidth_hz: float,
        sigma0_2: float,
        initial_sinr: float,
    ) -> None:
        self.geometry = geometry
        self.serving_by_cell = {int(c): tuple(s) for c, s in serving_by_cell.items()}
        self.bandwidth_hz = float(bandwidth_hz)
        self.sigma0_2 = float(sigma0_2)
        self.sinr: dict[tuple[int, int], float] = {}
        for c, sats in self.serving_by_cell.items():
            for i in sats:
                self.sinr[(int(i), c)] = float(initial_sinr)

    def set_sinr(self, sat: int, cell: int, value: float) -> None:
        key = (int(sat), int(cell))
        if key not in self.sinr:
            raise KeyError(f"link {key} is not scheduled")
        self.sinr[key] = float(value)

    def model_for(self, cell: int) -> TdoaModel:
        sats = self.serving_by_cell[int(cell)]
        sigma2 = {
            i: toa_variance(self.sinr[(i, int(cell))], self.bandwidth_hz) for i in sats
        }
        return build_tdoa_model(self.geometry, int(cell), sats, sigma2, self.sigma0_2)

    def gradient(self, sat: int, cell: int) -> float:
        """d crlb(cell) / d SINR(sat, cell) at the current table values."""
        model = self.model_for(cell)
        return crlb_gradient(
            model, int(sat), self.bandwidth_hz, self.sinr[(int(sat), int(cell))]
        )


@dataclass
class DstaResult:
    """Outcome of one satellite's threshold search."""

    sat: int
    cells: tuple[int, ...]
    beams: np.ndarray                  # (N, K) extracted beamformers
    thresholds: np.ndarray             # (K,) final linear thresholds
    achieved_sinr: np.ndarray          # (K,) from the extracted beams
    solution: SdrSolution              # last kept feasibility witness
    baseline_feasible: bool
    threshold_history: list[tuple[float, ...]] = field(default_factory=list)


def _sinr_from_covariances(instance: SdrInstance, sol: SdrSolution) -> np.ndarray:
    S = coupling_matrix(instance, sol.covariances)
    sig = np.diag(S)
    intf = S.sum(axis=1) - sig
    return sig / (intf + instance.noise_power)


def dsta(
    sat: int,
    cells: Sequence[int],
    channels: np.ndarray,
    state: PositioningState,
    config: ScenarioConfig,
    backend: str = "auto",
) -> DstaResult:
    """Raise per-UT SINR thresholds while the satellite's slice stays feasible.

    Each iteration raises the threshold of the served UT whose CRLB improves
    fastest (most negative gradient), re-solves the feasibility slice, and on
    failure reverts the raise and freezes that UT. The kept covariances are
    from the last feasible solve; beams are their principal components.
    """
    cells = tuple(int(c) for c in cells)
    k = len(cells)
    if k == 0:
        raise ValueError("dsta called with no served cells")
    channels = np.atleast_2d(np.asarray(channels, dtype=complex))
    noise = config.noise_power_w
    power = config.beam_power_w

    def make_instance(gam: np.ndarray) -> SdrInstance:
        return SdrInstance.from_channels(
            channels, gam, power, noise, tolerance=config.sdr_tolerance
        )

    gamma = np.full(k, config.gamma_init)
    history: list[tuple[float, ...]] = [tuple(gamma)]
    sol = solve_feasibility(make_instance(gamma), backend=backend)
    baseline_feasible = sol.feasible
    raisable = [sol.feasible] * k

    if sol.feasible:
        inst = make_instance(gamma)
        for idx, sinr in enumerate(_sinr_from_covariances(inst, sol)):
            state.set_sinr(sat, cells[idx], max(float(sinr), 1e-300))

    while True:
        ceiling = config.gamma_max * (1.0 - 1e-12)
        candidates = [idx for idx in range(k) if raisable[idx] and gamma[idx] < ceiling]
        if not candidates:
            break
        grads = {idx: state.gradient(sat, cells[idx]) for idx in candidates}
        pick = min(candidates, key=lambda idx: (grads[idx], cells[idx]))
        trial = gamma.copy()
        trial[pick] = min(trial[pick] * config.gamma_step, config.gamma_max)
        attempt = solve_feasibility(make_instance(trial), backend=backend)
        if attempt.feasible:
            gamma = trial
            sol = attempt
            inst = make_instance(gamma)
            for idx, sinr in enumerate(_sinr_from_covariances(inst, sol)):
                state.set_sinr(sat, cells[idx], max(float(sinr), 1e-300))
        else:
            raisable[pick] = False
        history.append(tuple(gamma))

    n = channels.shape[1]
    beams = np.empty((n, k), dtype=complex)
    for idx in range(k):
        beams[:, idx] = rank_one_extract(sol.covariances[idx])
    achieved = compute_sinr(channels, beams, noise)
    for idx in range(k):
        state.set_sinr(sat, cells[idx], max(float(achieved[idx]), 1e-300))
    return DstaResult(
        sat=int(sat),
        cells=cells,
        beams=beams,
        thresholds=gamma,
        achieved_sinr=achieved,
        solution=sol,
        baseline_feasible=baseline_feasible,
        threshold_history=history,
    )
