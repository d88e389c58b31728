"""Semidefinite feasibility for per-satellite SINR thresholds.

One instance asks: do beam covariances Q_c exist with

    tr(H'_c^T Q_c) >= gamma_c * (sum_{c' != c} tr(H'_c^T Q_{c'}) + eps_c^2),
    tr(Q_c) = P,  Q_c >= 0 (Hermitian PSD),

for every served UT c of one satellite? The answer is decided by maximizing
the worst normalized constraint margin; the slice is feasible exactly when
that optimum is nonnegative.

The default backend reduces the problem to the span of the channel
outer-products (dimension <= number of served UTs), which is exact: every
quadratic form only sees that span, and the leftover trace is padded back
isotropically on the orthogonal complement. The reduced real embedding is
handed to the Clarabel interior-point solver directly. A full-size cvxpy
route (backend="cvxpy") solves the same normalized program without any
reduction and is used as the cross-check in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp


class SdrSolverError(RuntimeError):
    """Backend failed to converge; distinct from a proven-infeasible slice."""


@dataclass
class SdrInstance:
    """Per-satellite threshold-feasibility problem data."""

    outer_products: np.ndarray    # (K, N, N) Hermitian PSD, one per served UT
    thresholds: np.ndarray        # (K,) linear SINR thresholds
    beam_power: float             # trace of every Q_c, watts
    noise_power: np.ndarray       # (K,) per-UT noise power, watts
    tolerance: float = 1e-7

    def __post_init__(self) -> None:
        self.outer_products = np.asarray(self.outer_products, dtype=complex)
        if self.outer_products.ndim != 3 or self.outer_products.shape[1] != self.outer_products.shape[2]:
            raise ValueError("outer_products must be (K, N, N)")
        k = self.outer_products.shape[0]
        self.thresholds = np.asarray(self.thresholds, dtype=float).reshape(k)
        self.noise_power = np.broadcast_to(
            np.asarray(self.noise_power, dtype=float), (k,)
        ).copy()
        if self.beam_power <= 0:
            raise ValueError("beam_power must be positive")
        if np.any(self.thresholds <= 0):
            raise ValueError("thresholds must be positive")
        if np.any(self.noise_power <= 0):
            raise ValueError("noise powers must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        for c, hp in enumerate(self.outer_products):
            scale = float(np.max(np.abs(hp)))
            if scale == 0.0:
                raise ValueError(f"outer product {c} is zero")
            if np.max(np.abs(hp - hp.conj().T)) > 1e-10 * scale:
                raise ValueError(f"outer product {c} is not Hermitian within 1e-10")
            if np.linalg.eigvalsh(hp)[0] < -1e-10 * np.real(np.trace(hp)):
                raise ValueError(f"outer product {c} is not PSD within 1e-10")

    @property
    def num_served(self) -> int:
        return self.outer_products.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.outer_products.shape[1]

    @classmethod
    def from_channels(
        cls,
        channels: np.ndarray,
        thresholds: Sequence[float],
        beam_power: float,
        noise_power: float | Sequence[float],
        tolerance: float = 1e-7,
    ) -> "SdrInstance":
        """Build H'_c = h_c h_c^H from channel row vectors (K, N)."""
        channels = np.asarray(channels, dtype=complex)
        if channels.ndim == 1:
            channels = channels[None, :]
        outer = np.einsum("ki,kj->kij", channels, channels.conj())
        return cls(outer, np.asarray(thresholds, float), float(beam_power),
                   np.asarray(noise_power, float), tolerance)


@dataclass
class SdrSolution:
    """Feasibility verdict plus the covariances that witnessed it."""

    feasible: bool
    covariances: np.ndarray   # (K, N, N) Hermitian, tr = beam_power
    margins: np.ndarray       # (K,) tr(G Q) - gamma * (interference + noise), watts
    slack: float              # optimum of the normalized worst-margin program
    status: str


def coupling_matrix(instance: SdrInstance, covariances: np.ndarray) -> np.ndarray:
    """S[c, c'] = tr(H'_c^T Q_{c'}), the received-power table, watts."""
    G = instance.outer_products.conj()  # transpose of Hermitian = conjugate
    return np.real(np.einsum("cij,dji->cd", G, covariances))


def physical_margins(instance: SdrInstance, covariances: np.ndarray) -> np.ndarray:
    S = coupling_matrix(instance, covariances)
    k = instance.num_served
    intf = S.sum(axis=1) - np.diag(S)
    return np.diag(S) - instance.thresholds * (intf + instance.noise_power)


# -- real symmetric embedding helpers ----------------------------------------


@lru_cache(maxsize=32)
def _svec_meta(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column-major upper-triangle indices and sqrt(2) scaling for svec(n)."""
    rows, cols = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    rows = np.array(rows)
    cols = np.array(cols)
    scale = np.where(rows == cols, 1.0, math.sqrt(2.0))
    return rows, cols, scale


def _svec(M: np.ndarray) -> np.ndarray:
    rows, cols, scale = _svec_meta(M.shape[0])
    return M[rows, cols] * scale


def _unsvec(v: np.ndarray, n: int) -> np.ndarray:
    rows, cols, scale = _svec_meta(n)
    M = np.zeros((n, n))
    M[rows, cols] = v / scale
    M[cols, rows] = M[rows, cols]
    return M


def _hermitian_embed(C: np.ndarray) -> np.ndarray:
    """M(C) = [[Re C, -Im C], [Im C, Re C]]; tr(C X) = tr(M(C) M(X)) / 2."""
    re, im = C.real, C.imag
    return np.block([[re, -im], [im, re]])


def _unembed(Y: np.ndarray) -> np.ndarray:
    r = Y.shape[0] // 2
    return 0.5 * (Y[:r, :r] + Y[r:, r:]) + 0.5j * (Y[r:, :r] - Y[:r, r:])


# -- backends -----------------------------------------------------------------


def _span_basis(products: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the union of the given matrices' column spaces."""
    cols = []
    for hp in products:
        vals, vecs = np.linalg.eigh(hp)
        keep = vals > max(vals[-1], 0.0) * 1e-12
        cols.append(vecs[:, keep] * np.sqrt(vals[keep]))
    stack = np.hstack(cols)
    u, s, _ = np.linalg.svd(stack, full_matrices=False)
    rank = int(np.sum(s > s[0] * 1e-12)) if s.size else 0
    if rank == 0:
        raise ValueError("all outer products are zero")
    return u[:, :rank]


def _solve_clarabel(
    instance: SdrInstance, polish: bool
) -> tuple[np.ndarray, float, str]:
    """Reduced-subspace solve; returns (covariances, slack, status)."""
    import clarabel

    k = instance.num_served
    n = instance.num_antennas
    P = instance.beam_power
    G = instance.outer_products.conj()
    # the quadratic forms act through G, so the basis must span G's
    # columns, not the raw outer products'
    U = _span_basis(G)
    r = U.shape[1]
    d = 2 * r
    T = d * (d + 1) // 2
    nvar = k * T + 1
    slack_col = nvar - 1

    # normalized signal coefficients: tr(Ghat_c Xtilde) with Xtilde = X / P
    coeff = []
    for c in range(k):
        Chat = (U.conj().T @ G[c] @ U) * (P / instance.noise_power[c])
        coeff.append(_svec(0.5 * _hermitian_embed(Chat)))
    tr_coeff = _svec(0.5 * np.eye(d))  # tr(X) = tr(Y) / 2

    def run(stage2: bool):
        rows, cols, vals, b, cones = [], [], [], [], []
        m = 0
        if stage2:
            # the margin slack plays no role here; pin it so the KKT
            # system stays nonsingular
            rows.append(m)
            cols.append(slack_col)
            vals.append(1.0)
            b.append(0.0)
            m += 1
            cones.append(clarabel.ZeroConeT(1))
        # trace rows: tr(X_c) <= 1, exact when there is no complement
        # left to absorb the power gap (r == n)
        for c in range(k):
            rows.extend([m] * T)
            cols.extend(range(c * T, (c + 1) * T))
            vals.extend(tr_coeff)
            b.append(1.0)
            m += 1
        cones.append(clarabel.ZeroConeT(k) if r == n else clarabel.NonnegativeConeT(k))
        # margin rows: sig_c / gamma_c - interference_c - 1 (- slack) >= 0
        for c in range(k):
            for cc in range(k):
                w = coeff[c] * (1.0 / instance.thresholds[c] if cc == c else -1.0)
                rows.extend([m] * T)
                cols.extend(range(cc * T, (cc + 1) * T))
                vals.extend(-w)
            if not stage2:
                rows.append(m)
                cols.append(slack_col)
                vals.append(1.0)
            b.append(-1.0)
            m += 1
        cones.append(clarabel.NonnegativeConeT(k))
        for c in range(k):
            for t in range(T):
                rows.append(m + t)
                cols.append(c * T + t)
                vals.append(-1.0)
                b.append(0.0)
            m += T
            cones.append(clarabel.PSDTriangleConeT(d))
        A = sp.csc_matrix((vals, (rows, cols)), shape=(m, nvar))
        q = np.zeros(nvar)
        if stage2:
            for c in range(k):
                q[c * T:(c + 1) * T] -= coeff[c] / instance.thresholds[c]
        else:
            q[slack_col] = -1.0
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        solver = clarabel.DefaultSolver(
            sp.csc_matrix((nvar, nvar)), q, A, np.array(b), cones, settings
        )
        return solver.solve()

    sol = run(stage2=False)
    status = str(sol.status)
    if status not in ("Solved", "AlmostSolved"):
        raise SdrSolverError(f"clarabel stage-1 status {status}")
    x = np.asarray(sol.x)
    slack = float(x[slack_col])
    feasible = slack >= -instance.tolerance

    if polish and feasible:
        sol2 = run(stage2=True)
        if str(sol2.status) in ("Solved", "AlmostSolved"):
            x = np.asarray(sol2.x)
            status += "+polish"

    covs = np.empty((k, n, n), dtype=complex)
    pad_dim = n - r
    for c in range(k):
        Y = _unsvec(x[c * T:(c + 1) * T], d)
        X = _unembed(Y) * P
        full = U @ X @ U.conj().T
        trace_gap = P - float(np.real(np.trace(full)))
        if pad_dim > 0:
            full = full + (trace_gap / pad_dim) * (np.eye(n) - U @ U.conj().T)
        covs[c] = 0.5 * (full + full.conj().T)
    return covs, slack, f"clarabel:{status}"


def _solve_cvxpy(instance: SdrInstance, polish: bool) -> tuple[np.ndarray, float, str]:
    """Full-size solve of the same normalized program; no reduction."""
    import cvxpy as cp

    k, n = instance.num_served, instance.num_antennas
    P = instance.beam_power
    G = instance.outer_products.conj()
    Ghat = [G[c] * (P / instance.noise_power[c]) for c in range(k)]
    Q = [cp.Variable((n, n), hermitian=True) for _ in range(k)]
    s = cp.Variable()

    def margin_exprs():
        out = []
        for c in range(k):
            sig = cp.real(cp.trace(Ghat[c] @ Q[c]))
            intf = sum(cp.real(cp.trace(Ghat[c] @ Q[cc])) for cc in range(k) if cc != c)
            out.append(sig / instance.thresholds[c] - intf - 1.0)
        return out

    base = [Q[c] >> 0 for c in range(k)] + [cp.trace(Q[c]) == 1.0 for c in range(k)]
    margins = margin_exprs()
    prob = cp.Problem(cp.Maximize(s), base + [mg >= s for mg in margins])
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise SdrSolverError(f"cvxpy stage-1 status {prob.status}")
    slack = float(s.value)
    feasible = slack >= -instance.tolerance
    status = f"cvxpy:{prob.status}"
    qvals = [np.array(Q[c].value) for c in range(k)]

    if polish and feasible:
        signal_sum = sum(
            cp.real(cp.trace(Ghat[c] @ Q[c])) / instance.thresholds[c] for c in range(k)
        )
        prob2 = cp.Problem(
            cp.Maximize(signal_sum),
            base + [mg >= 0 for mg in margins],
        )
        prob2.solve(solver=cp.CLARABEL)
        if prob2.status in ("optimal", "optimal_inaccurate"):
            qvals = [np.array(Q[c].value) for c in range(k)]
            status += "+polish"

    covs = np.empty((k, n, n), dtype=complex)
    for c in range(k):
        full = qvals[c] * P
        covs[c] = 0.5 * (full + full.conj().T)
    return covs, slack, status


def _solve_single(instance: SdrInstance) -> tuple[np.ndarray, float, str]:
    """Closed form for one served UT: all power on the principal direction."""
    G = instance.outer_products[0].conj()
    vals, vecs = np.linalg.eigh(G)
    peak = float(vals[-1])
    direction = vecs[:, -1]
    Q = instance.beam_power * np.outer(direction, direction.conj())
    slack = instance.beam_power * peak / (
        instance.thresholds[0] * instance.noise_power[0]
    ) - 1.0
    return Q[None, :, :], float(slack), "analytic"


def solve_feasibility(
    instance: SdrInstance,
    backend: str = "auto",
    polish: bool = True,
) -> SdrSolution:
    """Decide the threshold-feasibility slice and return witness covariances.

    Feasible slices return (when ``polish``) covariances that maximize the
    threshold-weighted signal sum subject to the same constraints, which
    keeps the power inside the channel span for rank-one extraction.
    Infeasible slices return the max-margin (best-effort) covariances.
    """
    if backend not in ("auto", "clarabel", "cvxpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "auto" and instance.num_served == 1:
        covs, slack, status = _solve_single(instance)
    elif backend == "cvxpy":
        covs, slack, status = _solve_cvxpy(instance, polish)
    else:
        covs, slack, status = _solve_clarabel(instance, polish)
    feasible = bool(slack >= -instance.tolerance)
    return SdrSolution(
        feasible=feasible,
        covariances=covs,
        margins=physical_margins(instance, covs),
        slack=slack,
        status=status,
    )


def rank_one_extract(covariance: np.ndarray) -> np.ndarray:
    """Best rank-one beamformer of a covariance: sqrt(lambda_max) times the
    principal eigenvector, phase-normalized so the first significant entry
    is real positive. Not rescaled to full power."""
    Q = np.asarray(covariance, dtype=complex)
    Q = 0.5 * (Q + Q.conj().T)
    vals, vecs = np.linalg.eigh(Q)
    lam = max(float(vals[-1]), 0.0)
    w = math.sqrt(lam) * vecs[:, -1]
    mags = np.abs(w)
    if mags.max() > 0.0:
        first = int(np.argmax(mags > 1e-12 * mags.max()))
        ph = w[first]
        if abs(ph) > 0:
            w = w * (ph.conjugate() / abs(ph))
    return w


def bisect_t(
    instance: SdrInstance,
    rel_tol: float = 1e-6,
    max_iter: int = 80,
    backend: str = "auto",
) -> tuple[float, SdrSolution]:
    """Largest t with thresholds t * gamma feasible (diagnostic).

    Returns that t and the solution of its slice. t < 1 means the instance
    itself is infeasible; t >= 1 means it has headroom.
    """
    def at(t: float) -> SdrSolution:
        scaled = replace(instance, thresholds=instance.thresholds * t)
        return solve_feasibility(scaled, backend=backend, polish=False)

    # SINR_c can never exceed the interference-free bound P * tr(H') / eps^2
    hi = float(np.min([
        instance.beam_power * np.real(np.trace(instance.outer_products[c]))
        / (instance.noise_power[c] * instance.thresholds[c])
        for c in range(instance.num_served)
    ])) * (1.0 + 1e-9) + 1e-30
    lo = 0.0
    best: Optional[SdrSolution] = None
    sol_hi = at(hi)
    if sol_hi.feasible:
        return hi, sol_hi
    for _ in range(max_iter):
        if hi - lo <= rel_tol * max(hi, 1.0):
            break
        mid = 0.5 * (lo + hi)
        sol = at(mid)
        if sol.feasible:
            lo, best = mid, sol
        else:
            hi = mid
    if best is None:
        lo_sol = at(max(lo, 1e-12))
        best = lo_sol
    return lo, best
