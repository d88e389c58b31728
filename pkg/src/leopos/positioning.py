"""TDOA positioning accuracy: CRLB, its SINR gradient, the reference-noise-free
approximation, GDOP, measurement sampling, and the incremental eigen state used
by the schedulers.

All TDOAs share the reference satellite, so the measurement covariance is
diag(sigma_i^2) + sigma_0^2 * ones; the direction rows are the unit-vector
differences a_i = (p - s_i)/d_i - (p - s_0)/d_0 scaled by 1/v.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .scenario import Geometry, SPEED_OF_LIGHT_M_S


class DegenerateGeometryError(RuntimeError):
    """Serving geometry too close to singular for a positioning estimate."""


def toa_variance(sinr: float, bandwidth_hz: float) -> float:
    """CRLB of a single TOA estimate: 3 / (4 pi^2 B^2 SINR), seconds^2."""
    if sinr <= 0:
        raise ValueError("sinr must be positive")
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth_hz must be positive")
    return 3.0 / (4.0 * math.pi ** 2 * bandwidth_hz ** 2 * sinr)


@dataclass
class TdoaModel:
    """TDOA measurement model of one UT under a fixed serving set."""

    cell: int
    serving: tuple[int, ...]      # satellite ids, row order of A and R
    a_vectors: np.ndarray         # (k, 3) unscaled direction differences
    A: np.ndarray                 # (k, 3) a_vectors / v
    sigma2: np.ndarray            # (k,) per-link TOA variances, s^2
    sigma0_2: float               # reference-link TOA variance, s^2
    R: np.ndarray                 # (k, k) TDOA covariance
    ranges_m: np.ndarray          # (k,) satellite-UT distances
    ref_range_m: float            # reference-UT distance


def build_tdoa_model(
    geometry: Geometry,
    cell: int,
    serving: Sequence[int],
    sigma2_by_sat: Mapping[int, float],
    sigma0_2: float,
) -> TdoaModel:
    """Assemble the measurement model for one UT.

    ``serving`` lists the scheduled satellites (>= 3 of them); row order
    follows the given sequence.
    """
    serving = tuple(int(i) for i in serving)
    if len(serving) < 3:
        raise ValueError("need at least 3 serving satellites for a TDOA fix")
    if len(set(serving)) != len(serving):
        raise ValueError("serving set contains duplicates")
    if sigma0_2 <= 0:
        raise ValueError("sigma0_2 must be positive")
    p = geometry.ut_positions[cell]
    ref = geometry.ref_position
    d0 = float(np.linalg.norm(p - ref))
    a0 = (p - ref) / d0
    k = len(serving)
    a_vectors = np.empty((k, 3))
    sigma2 = np.empty(k)
    ranges = np.empty(k)
    for row, sat in enumerate(serving):
        s = geometry.sat_positions[sat]
        d = float(np.linalg.norm(p - s))
        ranges[row] = d
        a_vectors[row] = (p - s) / d - a0
        var = float(sigma2_by_sat[sat])
        if var <= 0:
            raise ValueError(f"nonpositive TOA variance for satellite {sat}")
        sigma2[row] = var
    A = a_vectors / SPEED_OF_LIGHT_M_S
    R = np.diag(sigma2) + sigma0_2 * np.ones((k, k))
    return TdoaModel(
        cell=int(cell),
        serving=serving,
        a_vectors=a_vectors,
        A=A,
        sigma2=sigma2,
        sigma0_2=float(sigma0_2),
        R=R,
        ranges_m=ranges,
        ref_range_m=d0,
    )


def _fisher(model: TdoaModel) -> np.ndarray:
    return model.A.T @ np.linalg.solve(model.R, model.A)


def _trace_inverse(M: np.ndarray, context: str) -> float:
    vals = np.linalg.eigvalsh(M)
    if vals[0] <= vals[-1] * 1e-13 or vals[-1] <= 0.0:
        raise DegenerateGeometryError(f"singular Fisher matrix in {context}")
    return float(np.sum(1.0 / vals))


def crlb(model: TdoaModel) -> float:
    """Position-error bound tr((A^T R^-1 A)^-1), meters^2."""
    return _trace_inverse(_fisher(model), "crlb")


def crlb_gradient(model: TdoaModel, sat: int, bandwidth_hz: float, sinr: float) -> float:
    """d crlb / d SINR for one serving link; strictly negative.

    ``sinr`` must be the value whose toa_variance is stored in the model for
    that link (the chain rule runs through sigma^2 = 3/(4 pi^2 B^2 SINR)).
    """
    if sinr <= 0 or bandwidth_hz <= 0:
        raise ValueError("sinr and bandwidth must be positive")
    try:
        row = model.serving.index(int(sat))
    except ValueError:
        raise ValueError(f"satellite {sat} is not in the serving set") from None
    M = _fisher(model)
    e = np.zeros(len(model.serving))
    e[row] = 1.0
    z = model.A.T @ np.linalg.solve(model.R, e)
    try:
        y = np.linalg.solve(M, z)
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometryError("singular Fisher matrix in crlb_gradient") from exc
    dF_dsigma2 = float(y @ y)
    dsigma2_dsinr = -3.0 / (4.0 * math.pi ** 2 * bandwidth_hz ** 2 * sinr ** 2)
    return dF_dsigma2 * dsigma2_dsinr


def crlb_approx(model: TdoaModel) -> float:
    """Reference-noise-free approximation tr((A^T V^-1 A)^-1), meters^2."""
    M = model.A.T @ (model.A / model.sigma2[:, None])
    return _trace_inverse(M, "crlb_approx")


def gdop(model: TdoaModel) -> float:
    """(1/v) * sqrt(tr((A^T A)^-1)) with the model's scaled A."""
    val = _trace_inverse(model.A.T @ model.A, "gdop")
    return math.sqrt(val) / SPEED_OF_LIGHT_M_S


def sample_tdoa(model: TdoaModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw TDOA measurement vectors, (count, k) seconds.

    Per-satellite TOA errors are independent; the reference TOA error is
    drawn once per sample and shared, which is what correlates the rows.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    mean = (model.ranges_m - model.ref_range_m) / SPEED_OF_LIGHT_M_S
    toa = rng.normal(0.0, np.sqrt(model.sigma2), size=(count, len(model.serving)))
    toa0 = rng.normal(0.0, math.sqrt(model.sigma0_2), size=(count, 1))
    return mean + toa - toa0


# -- incremental eigen bookkeeping for the schedulers ------------------------


@dataclass(frozen=True)
class EigenState:
    """Eigen decomposition of the running sum of a a^T outer products.

    ``vectors`` columns are orthonormal; rank never exceeds 3.
    """

    values: np.ndarray    # (R,)
    vectors: np.ndarray   # (3, R)

    @classmethod
    def empty(cls) -> "EigenState":
        return cls(values=np.zeros(0), vectors=np.zeros((3, 0)))

    @property
    def rank(self) -> int:
        return len(self.values)

    def matrix(self) -> np.ndarray:
        """Dense 3x3 reconstruction of the accumulated outer-product sum."""
        if self.rank == 0:
            return np.zeros((3, 3))
        return (self.vectors * self.values) @ self.vectors.T

    def trace_pinv(self) -> float:
        """Trace of the Moore-Penrose pseudo-inverse: sum of 1/lambda_r."""
        return float(np.sum(1.0 / self.values)) if self.rank else 0.0


def eigen_update(
    state: EigenState,
    a: np.ndarray,
    rank_tol: float = 1e-12,
    exact: bool = False,
) -> EigenState:
    """State after adding one outer product a a^T.

    The fast path projects a onto the current eigenvectors, bumps each
    eigenvalue by its squared projection, and appends the normalized
    residual as a new eigenpair when its energy clears the rank tolerance.
    The exact path re-diagonalizes densely.
    """
    a = np.asarray(a, dtype=float).reshape(3)
    if exact:
        M = state.matrix() + np.outer(a, a)
        vals, vecs = np.linalg.eigh(M)
        keep = vals > rank_tol * (1.0 + float(np.trace(M)))
        return EigenState(values=vals[keep].copy(), vectors=vecs[:, keep].copy())
    proj = state.vectors.T @ a
    resid = a - state.vectors @ proj
    # second orthogonalization pass keeps the basis orthonormal to ~1e-15
    resid = resid - state.vectors @ (state.vectors.T @ resid)
    energy = float(resid @ resid)
    new_vals = state.values + proj ** 2
    if energy < rank_tol * (1.0 + float(np.sum(state.values))):
        return EigenState(values=new_vals, vectors=state.vectors.copy())
    vec = resid / math.sqrt(energy)
    return EigenState(
        values=np.concatenate([new_vals, [energy]]),
        vectors=np.column_stack([state.vectors, vec]),
    )


def mu_metric(
    state: EigenState,
    a: np.ndarray,
    rank_tol: float = 1e-12,
    exact: bool = False,
) -> float:
    """Change of the pseudo-inverse trace if a a^T were added to the state."""
    return eigen_update(state, a, rank_tol, exact).trace_pinv() - state.trace_pinv()


def a_vector(geometry: Geometry, sat: int, cell: int) -> np.ndarray:
    """Direction difference a_{i,c} used by CRLB rows and the mu metric."""
    p = geometry.ut_positions[cell]
    s = geometry.sat_positions[sat]
    ref = geometry.ref_position
    return (p - s) / np.linalg.norm(p - s) - (p - ref) / np.linalg.norm(p - ref)
