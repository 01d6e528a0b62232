"""Estimators for the comparison models, plus error metrics.

The ordinal and m-wise maximum-likelihood problems are convex over the
feasible set {<1, w> = 0, |w|_inf <= B} thanks to strong log-concavity of
the links, so a projected-gradient loop with backtracking converges to
the global constrained optimum.  The feasible-set projection is computed
by Dykstra-style alternating projections between the mean-zero hyperplane
and the box.  Paired cardinal and per-item cardinal estimates are closed
form.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import ComparisonDesign, HyperDesign, SpectralSummary, _check_connected, spectrum
from .models import LinkFunction, MWiseLink
from .synth import ObservationBatch, QualityVector


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 5000
    grad_tolerance: float = 1e-8
    initial_step: float = 1.0
    step_shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    projection_tolerance: float = 1e-10

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        for name in ("grad_tolerance", "initial_step", "step_shrink",
                     "sufficient_decrease", "projection_tolerance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class EstimateResult:
    w_hat: QualityVector
    converged: bool
    iterations: int
    objective: float
    grad_norm: float

    def to_json(self, model_json: str = "{}", design_digest: str = "") -> str:
        return json.dumps(
            {
                "w_hat": [float(v) for v in self.w_hat.values],
                "converged": self.converged,
                "iterations": self.iterations,
                "objective": self.objective,
                "grad_norm": self.grad_norm,
                "model": json.loads(model_json),
                "design_digest": design_digest,
            }
        )


@dataclass(frozen=True)
class ErrorMetrics:
    sq_l2: float
    sq_lap: float


def design_digest(design: ComparisonDesign) -> str:
    return hashlib.sha256(design.to_json().encode()).hexdigest()[:12]


def project_feasible(x: np.ndarray, B: float, tol: float = 1e-10,
                     max_sweeps: int = 100_000) -> np.ndarray:
    """Euclidean projection onto {sum w = 0} intersect {|w|_inf <= B}.

    Dykstra's alternating projections with the correction term on the box
    side; the hyperplane is a subspace so its increment is not needed.
    Terminates when the hyperplane and box iterates agree within tol.
    """
    y = np.asarray(x, dtype=float)
    q = np.zeros_like(y)
    for _ in range(max_sweeps):
        z = y - np.mean(y)
        y_next = np.clip(z + q, -B, B)
        q = z + q - y_next
        gap = float(np.max(np.abs(y_next - z)))
        y = y_next
        if gap <= tol:
            # y is within gap of the mean-zero iterate, so recentring moves
            # it by at most tol while making the sum exactly zero.
            return y - np.mean(y)
    return y


# ---------------------------------------------------------------------------
# Likelihoods
# ---------------------------------------------------------------------------


def _ordinal_counts(batch: ObservationBatch, num_edges: int) -> tuple[np.ndarray, np.ndarray]:
    idx = batch.entry_indices
    y = np.asarray(batch.outcomes)
    wins = np.bincount(idx[y == 1], minlength=num_edges).astype(float)
    losses = np.bincount(idx[y == -1], minlength=num_edges).astype(float)
    return wins, losses


def _ordinal_closures(batch: ObservationBatch, design: ComparisonDesign,
                      link: LinkFunction):
    """Objective/gradient closures over per-edge win/loss counts.

    Aggregating once keeps the per-iteration cost at O(edges) regardless
    of the sample count.
    """
    j_idx, k_idx, _ = design.edge_arrays
    wins, losses = _ordinal_counts(batch, len(design.edges))
    sigma, n = link.sigma, batch.n

    def objective(w: np.ndarray) -> float:
        t = (w[j_idx] - w[k_idx]) / sigma
        # 1 - F(t) = F(-t) by link symmetry; evaluating the reflected CDF
        # keeps the log well away from cancellation.
        return float(-(wins @ link.log_cdf(t) + losses @ link.log_cdf(-t)) / n)

    def gradient(w: np.ndarray) -> np.ndarray:
        t = (w[j_idx] - w[k_idx]) / sigma
        slope = -(wins * link.pdf_over_cdf(t) - losses * link.pdf_over_cdf(-t))
        slope /= n * sigma
        return (np.bincount(j_idx, weights=slope, minlength=design.d)
                - np.bincount(k_idx, weights=slope, minlength=design.d))

    return objective, gradient


def ordinal_nll(w: np.ndarray, batch: ObservationBatch, design: ComparisonDesign,
                link: LinkFunction) -> float:
    """Negative log-likelihood of the ordinal model, averaged over samples."""
    objective, _ = _ordinal_closures(batch, design, link)
    return objective(np.asarray(w, dtype=float))


def ordinal_nll_gradient(w: np.ndarray, batch: ObservationBatch,
                         design: ComparisonDesign, link: LinkFunction) -> np.ndarray:
    _, gradient = _ordinal_closures(batch, design, link)
    return gradient(np.asarray(w, dtype=float))


def _mwise_counts(batch: ObservationBatch, num_subsets: int, m: int) -> np.ndarray:
    flat = batch.entry_indices * m + np.asarray(batch.outcomes, dtype=np.intp)
    return np.bincount(flat, minlength=num_subsets * m).astype(float).reshape(
        num_subsets, m)


def _mwise_closures(batch: ObservationBatch, design: HyperDesign, link: MWiseLink):
    counts = _mwise_counts(batch, len(design.subsets), link.m)
    subset_array = design.subset_array
    flat_subsets = subset_array.ravel()
    totals = counts.sum(axis=1, keepdims=True)
    n = batch.n

    def objective(w: np.ndarray) -> float:
        logp = link.log_position_probs(w[subset_array])
        return float(-np.sum(counts * logp) / n)

    def gradient(w: np.ndarray) -> np.ndarray:
        probs = link.position_probs(w[subset_array])
        contrib = (totals * probs - counts) / n
        return np.bincount(flat_subsets, weights=contrib.ravel(),
                           minlength=design.d)

    return objective, gradient


def mwise_nll(w: np.ndarray, batch: ObservationBatch, design: HyperDesign,
              link: MWiseLink) -> float:
    objective, _ = _mwise_closures(batch, design, link)
    return objective(np.asarray(w, dtype=float))


def mwise_nll_gradient(w: np.ndarray, batch: ObservationBatch, design: HyperDesign,
                       link: MWiseLink) -> np.ndarray:
    _, gradient = _mwise_closures(batch, design, link)
    return gradient(np.asarray(w, dtype=float))


# ---------------------------------------------------------------------------
# Projected gradient solver
# ---------------------------------------------------------------------------


def _projected_gradient(objective: Callable[[np.ndarray], float],
                        gradient: Callable[[np.ndarray], np.ndarray],
                        d: int, B: float, opts: SolverOptions,
                        callback: Callable[[np.ndarray, float], None] | None = None,
                        ) -> tuple[np.ndarray, bool, int, float, float]:
    proj = lambda v: project_feasible(v, B, opts.projection_tolerance)
    w = proj(np.zeros(d))
    f = objective(w)
    converged = False
    pg_norm = float("inf")
    iters = 0
    if callback is not None:
        callback(w, f)
    for iters in range(1, opts.max_iters + 1):
        g = gradient(w)
        w_unit = proj(w - g)
        pg_norm = float(np.linalg.norm(w_unit - w))
        if pg_norm <= opts.grad_tolerance:
            converged = True
            iters -= 1
            break
        step = opts.initial_step
        w_new = w_unit if step == 1.0 else proj(w - step * g)
        f_new = objective(w_new)
        # The float slack keeps the line search from thrashing once the
        # per-step objective decrease falls below the resolution of f.
        slack = 1e-15 * max(1.0, abs(f))
        while f_new > f + opts.sufficient_decrease * float(g @ (w_new - w)) + slack:
            step *= opts.step_shrink
            if step < 1e-16:
                break
            w_new = proj(w - step * g)
            f_new = objective(w_new)
        if f_new > f + slack:
            break  # backtracking stalled at machine precision
        w, f = w_new, f_new
        if callback is not None:
            callback(w, f)
    # Tight final projection so the result satisfies the feasibility
    # tolerances of QualityVector, not just the solver's working tolerance.
    w = project_feasible(w, B, min(1e-13, opts.projection_tolerance))
    return w, converged, iters, objective(w), pg_norm


def mle_ordinal(batch: ObservationBatch, design: ComparisonDesign, link: LinkFunction,
                B: float, opts: SolverOptions = SolverOptions(),
                callback: Callable | None = None) -> EstimateResult:
    """Constrained MLE for the ordinal pairwise model.

    One-sided degenerate data is fine: the box constraint keeps the
    optimum finite, which is exactly the role of the bound B.
    """
    if batch.kind != "ordinal_pair":
        raise ValueError(f"expected an ordinal_pair batch, got {batch.kind!r}")
    if not design.connected:
        raise ValueError("MLE requires a connected comparison graph")
    if B <= 0:
        raise ValueError("B must be positive")
    obj, grad = _ordinal_closures(batch, design, link)
    w, conv, iters, f, pg = _projected_gradient(obj, grad, design.d, B, opts, callback)
    return EstimateResult(QualityVector(w, B), conv, iters, f, pg)


def mle_mwise(batch: ObservationBatch, design: HyperDesign, link: MWiseLink,
              B: float, opts: SolverOptions = SolverOptions(),
              callback: Callable | None = None) -> EstimateResult:
    """Constrained MLE for the m-wise choice model."""
    if batch.kind != "mwise":
        raise ValueError(f"expected an mwise batch, got {batch.kind!r}")
    if not design.connected:
        raise ValueError("MLE requires a connected comparison hypergraph")
    if design.m != link.m:
        raise ValueError(f"design m={design.m} does not match link m={link.m}")
    if B <= 0:
        raise ValueError("B must be positive")
    obj, grad = _mwise_closures(batch, design, link)
    w, conv, iters, f, pg = _projected_gradient(obj, grad, design.d, B, opts, callback)
    return EstimateResult(QualityVector(w, B), conv, iters, f, pg)


# ---------------------------------------------------------------------------
# Closed-form cardinal estimators
# ---------------------------------------------------------------------------


def ls_paired_cardinal(batch: ObservationBatch, design: ComparisonDesign) -> EstimateResult:
    """Least squares for paired cardinal data: w = (1/n) L^dagger X^T y.

    L is the Laplacian of the batch's realised measurement matrix, so a
    noiseless batch is inverted exactly on any connected sample.  The
    result sums to zero automatically because L^dagger annihilates 1.
    """
    if batch.kind != "cardinal_pair":
        raise ValueError(f"expected a cardinal_pair batch, got {batch.kind!r}")
    j_idx, k_idx, _ = design.edge_arrays
    counts = np.bincount(batch.entry_indices, minlength=len(design.edges)).astype(float)
    sampled = counts > 0
    if not _check_connected(design.d, [(int(j), int(k)) for j, k, s in
                                       zip(j_idx, k_idx, sampled) if s]):
        raise ValueError("sampled comparison graph is disconnected; w is not identifiable")
    lap = np.zeros((design.d, design.d))
    for e in np.nonzero(sampled)[0]:
        j, k, c = j_idx[e], k_idx[e], counts[e]
        lap[j, j] += c
        lap[k, k] += c
        lap[j, k] -= c
        lap[k, j] -= c
    lap /= batch.n
    # X^T y accumulated per edge: each sample adds y_i (e_j - e_k).
    sums = np.zeros(len(design.edges))
    np.add.at(sums, batch.entry_indices, np.asarray(batch.outcomes, dtype=float))
    xty = np.zeros(design.d)
    np.add.at(xty, j_idx, sums)
    np.add.at(xty, k_idx, -sums)
    summary = spectrum(lap)
    w = summary.pinv() @ (xty / batch.n)
    w = w - np.mean(w)  # remove float residue along the nullspace
    resid = np.asarray(batch.outcomes, dtype=float) - (w[j_idx] - w[k_idx])[batch.entry_indices]
    objective = float(resid @ resid / (2.0 * batch.n))
    bound = float(np.max(np.abs(w)))
    return EstimateResult(QualityVector(w, bound), True, 0, objective, 0.0)


def mean_cardinal(batch: ObservationBatch, d: int) -> EstimateResult:
    """Per-item sample means recentred to sum zero."""
    if batch.kind != "cardinal_item":
        raise ValueError(f"expected a cardinal_item batch, got {batch.kind!r}")
    counts = np.bincount(batch.entry_indices, minlength=d).astype(float)
    if np.any(counts == 0):
        missing = np.nonzero(counts == 0)[0]
        raise ValueError(f"items never observed: {missing.tolist()}")
    sums = np.zeros(d)
    np.add.at(sums, batch.entry_indices, np.asarray(batch.outcomes, dtype=float))
    means = sums / counts
    w = means - np.mean(means)
    resid_obj = float(np.sum((np.asarray(batch.outcomes, dtype=float)
                              - means[batch.entry_indices]) ** 2) / (2.0 * batch.n))
    bound = float(np.max(np.abs(w)))
    return EstimateResult(QualityVector(w, bound), True, 0, resid_obj, 0.0)


def error_metrics(w_hat: QualityVector | np.ndarray, w_star: QualityVector | np.ndarray,
                  summary: SpectralSummary) -> ErrorMetrics:
    """Squared Euclidean and squared Laplacian semi-norm errors."""
    a = w_hat.values if isinstance(w_hat, QualityVector) else np.asarray(w_hat, dtype=float)
    b = w_star.values if isinstance(w_star, QualityVector) else np.asarray(w_star, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    delta = a - b
    coords = summary.eigenvectors @ delta
    sq_lap = float(max(np.sum(summary.eigenvalues * coords**2), 0.0))
    return ErrorMetrics(sq_l2=float(delta @ delta), sq_lap=sq_lap)
