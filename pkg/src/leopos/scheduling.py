"""Serving-set selection: which satellites position which cells.

A plan is a binary incidence matrix delta (satellites x cells) built one
commitment at a time. Every scheduler enforces the same three constraints:
entries are 0/1, every cell ends up with exactly ``serving_count``
satellites, and no satellite serves more than ``max_beams`` cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelSet, channel_similarity
from .positioning import EigenState, a_vector, eigen_update, mu_metric
from .scenario import Geometry, ScenarioConfig


class CapacityError(ValueError):
    """No satellite has a free beam for a cell that still needs one."""


@dataclass
class SchedulePlan:
    """Result of one scheduler run."""

    delta: np.ndarray                       # (I, C) int8 incidence
    commits: list[tuple[int, int]]          # (sat, cell) in commit order
    scheme: str
    m: Optional[int] = None                 # shortlist width, hybrid only

    @property
    def num_satellites(self) -> int:
        return self.delta.shape[0]

    @property
    def num_cells(self) -> int:
        return self.delta.shape[1]

    def serving_by_cell(self) -> dict[int, tuple[int, ...]]:
        """Per-cell serving satellites in the order they were committed."""
        out: dict[int, list[int]] = {c: [] for c in range(self.num_cells)}
        for sat, cell in self.commits:
            out[cell].append(sat)
        return {c: tuple(s) for c, s in out.items()}

    def cells_by_sat(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {i: [] for i in range(self.num_satellites)}
        for sat, cell in self.commits:
            out[sat].append(cell)
        return {i: tuple(c) for i, c in out.items() if c}


def check_constraints(plan: SchedulePlan, config: ScenarioConfig) -> list[str]:
    """Violation messages for the three scheduling constraints; empty if clean."""
    problems: list[str] = []
    d = plan.delta
    bad = np.argwhere((d != 0) & (d != 1))
    for i, c in bad:
        problems.append(f"entry ({i}, {c}) is {d[i, c]}, not binary")
    col = d.sum(axis=0)
    for c in np.nonzero(col != config.serving_count)[0]:
        problems.append(
            f"cell {c} has {col[c]} serving satellites, needs {config.serving_count}"
        )
    row = d.sum(axis=1)
    for i in np.nonzero(row > config.max_beams)[0]:
        problems.append(
            f"satellite {i} serves {row[i]} cells, capacity {config.max_beams}"
        )
    return problems


def _cell_order(config: ScenarioConfig) -> Sequence[int]:
    if config.ut_order is not None:
        return config.ut_order
    return range(config.num_cells)


def hbs(
    geometry: Geometry,
    channels: ChannelSet,
    config: ScenarioConfig,
    m: int,
) -> SchedulePlan:
    """Hybrid scheduler: interference shortlist, then geometry tie-break.

    Per cell, per commitment: from the satellites with free capacity not yet
    serving the cell, shortlist the ``m`` whose channel to the cell is least
    similar to the channels they already serve, then commit the shortlisted
    satellite whose ray most changes the cell's accumulated direction
    spectrum. ``m = 1`` ignores geometry, ``m >= I`` ignores interference.
    """
    if m < 1:
        raise ValueError("shortlist width m must be at least 1")
    I = config.num_satellites
    C = config.num_cells
    delta = np.zeros((I, C), dtype=np.int8)
    load = np.zeros(I, dtype=int)
    served: list[list[int]] = [[] for _ in range(I)]
    states = [EigenState.empty() for _ in range(C)]
    commits: list[tuple[int, int]] = []

    for c in _cell_order(config):
        for _ in range(config.serving_count):
            cand = [i for i in range(I) if load[i] < config.max_beams and delta[i, c] == 0]
            if not cand:
                raise CapacityError(
                    f"cell {c} still needs a satellite but none has a free beam"
                )
            rho = {i: channel_similarity(channels, i, c, served[i]) for i in cand}
            shortlist = sorted(cand, key=lambda i: (rho[i], i))[:m]
            best = None
            best_key = None
            for i in shortlist:
                mu = mu_metric(
                    states[c],
                    a_vector(geometry, i, c),
                    rank_tol=config.rank_tolerance,
                    exact=config.use_exact_eigen,
                )
                score = -mu if config.negate_mu else mu
                key = (score, -i)
                if best_key is None or key > best_key:
                    best, best_key = i, key
            delta[best, c] = 1
            load[best] += 1
            served[best].append(c)
            states[c] = eigen_update(
                states[c],
                a_vector(geometry, best, c),
                rank_tol=config.rank_tolerance,
                exact=config.use_exact_eigen,
            )
            commits.append((best, c))
    return SchedulePlan(delta=delta, commits=commits, scheme="hybrid", m=m)


def comm_schedule(
    geometry: Geometry, channels: ChannelSet, config: ScenarioConfig
) -> SchedulePlan:
    """Pure interference-aware scheduling (shortlist of one)."""
    plan = hbs(geometry, channels, config, m=1)
    return SchedulePlan(plan.delta, plan.commits, scheme="comm", m=None)


def gdop_schedule(
    geometry: Geometry, channels: ChannelSet, config: ScenarioConfig
) -> SchedulePlan:
    """Pure geometry-driven scheduling (shortlist of everyone)."""
    plan = hbs(geometry, channels, config, m=config.num_satellites)
    return SchedulePlan(plan.delta, plan.commits, scheme="gdop", m=None)


def parallax_schedule(geometry: Geometry, config: ScenarioConfig) -> SchedulePlan:
    """Spread-based selection: iteratively drop the most redundant ray.

    Per cell, start from every satellite with free capacity and remove the
    one whose view direction is most aligned with the rest (largest row sum
    of pairwise cosines) until ``serving_count`` remain.
    """
    I = config.num_satellites
    C = config.num_cells
    delta = np.zeros((I, C), dtype=np.int8)
    load = np.zeros(I, dtype=int)
    commits: list[tuple[int, int]] = []

    for c in _cell_order(config):
        avail = [i for i in range(I) if load[i] < config.max_beams]
        if len(avail) < config.serving_count:
            raise CapacityError(
                f"cell {c} needs {config.serving_count} satellites, "
                f"only {len(avail)} have free beams"
            )
        p = geometry.ut_positions[c]
        rays = geometry.sat_positions[avail] - p
        rays = rays / np.linalg.norm(rays, axis=1, keepdims=True)
        cosines = rays @ rays.T
        keep = list(range(len(avail)))
        while len(keep) > config.serving_count:
            sub = cosines[np.ix_(keep, keep)]
            drop = int(np.argmax(sub.sum(axis=1)))
            keep.pop(drop)
        for j in keep:
            i = avail[j]
            delta[i, c] = 1
            load[i] += 1
            commits.append((i, c))
    return SchedulePlan(delta=delta, commits=commits, scheme="parallax", m=None)


def dump_plan(plan: SchedulePlan, path: str) -> None:
    """CSV of commits in order; scheme recorded in a comment line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# scheme={plan.scheme} m={plan.m if plan.m is not None else ''}\n")
        fh.write("step,satellite,cell\n")
        for step, (sat, cell) in enumerate(plan.commits):
            fh.write(f"{step},{sat},{cell}\n")
