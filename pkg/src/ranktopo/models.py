"""Link-function families for ordinal and m-wise comparison models.

A pairwise link is a symmetric CDF F mapping the scaled score difference
to a win probability.  Two scalars summarise it over the working interval
[-2B/sigma, 2B/sigma]: gamma, the strong log-concavity curvature (which
makes the MLE problem strongly convex), and zeta, the peak density over
the interval probability mass (which controls KL divergences from above).
The m-wise analogue bundles a choice probability over m-vectors with a
curvature matrix lower-bounding its negative-log Hessian.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import expit, log_expit, log_ndtr, ndtr

SYMMETRY_TOL = 1e-10
FD_STEP = 1e-6

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _normal_pdf(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def _normal_cdf(x: np.ndarray) -> np.ndarray:
    # ndtr evaluates via erfc; absolute error below 1e-15 on the real line.
    return ndtr(np.asarray(x, dtype=float))


def _btl_neg_log_second(x: np.ndarray) -> np.ndarray:
    # d^2/dt^2 [log(1 + e^{-t})] = F(t)(1 - F(t))
    f = expit(np.asarray(x, dtype=float))
    return f * (1.0 - f)


def _thurstone_neg_log_second(x: np.ndarray) -> np.ndarray:
    # With h = phi/Phi (inverse Mills ratio), d^2/dt^2 (-log Phi) = h(h + t).
    x = np.asarray(x, dtype=float)
    h = np.exp(-0.5 * x * x - math.log(_SQRT_2PI) - log_ndtr(x))
    return h * (h + x)


@dataclass(frozen=True)
class LinkFunction:
    """A symmetric CDF with derivatives and a noise scale.

    ``cdf`` and ``pdf`` take the already-rescaled argument t = x/sigma;
    callers are responsible for dividing by sigma.  ``neg_log_second`` is
    the second derivative of -log F, the quantity whose infimum over the
    working interval is the strong log-concavity constant.
    """

    name: str
    sigma: float
    cdf: Callable[[np.ndarray], np.ndarray]
    pdf: Callable[[np.ndarray], np.ndarray]
    neg_log_second: Callable[[np.ndarray], np.ndarray]

    def win_probability(self, score_diff: np.ndarray) -> np.ndarray:
        """P[first item wins] for raw score differences."""
        return self.cdf(np.asarray(score_diff, dtype=float) / self.sigma)

    def log_cdf(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.name == "thurstone":
            return log_ndtr(t)
        if self.name == "btl":
            return log_expit(t)
        return np.log(self.cdf(t))

    def pdf_over_cdf(self, t: np.ndarray) -> np.ndarray:
        """F'(t)/F(t), evaluated in log space where that is more stable."""
        t = np.asarray(t, dtype=float)
        if self.name == "btl":
            return expit(-t)  # F'/F = 1 - F for the logistic link
        if self.name == "thurstone":
            return np.exp(-0.5 * t * t - math.log(_SQRT_2PI) - log_ndtr(t))
        return self.pdf(t) / self.cdf(t)

    def to_json(self, B: float | None = None) -> str:
        obj: dict = {"family": self.name, "sigma": self.sigma}
        if B is not None:
            obj["B"] = B
        return json.dumps(obj)


def _fd_pdf(cdf: Callable) -> Callable:
    def pdf(x):
        x = np.asarray(x, dtype=float)
        return (cdf(x + FD_STEP) - cdf(x - FD_STEP)) / (2.0 * FD_STEP)

    return pdf


def _fd_neg_log_second(cdf: Callable, step: float = 1e-5) -> Callable:
    def second(x):
        x = np.asarray(x, dtype=float)
        g0 = -np.log(cdf(x))
        gp = -np.log(cdf(x + step))
        gm = -np.log(cdf(x - step))
        return (gp - 2.0 * g0 + gm) / (step * step)

    return second


def _screen_custom_cdf(cdf: Callable) -> None:
    grid = np.linspace(-8.0, 8.0, 1601)
    vals = np.asarray(cdf(grid), dtype=float)
    if np.any(vals <= 0.0) or np.any(vals >= 1.0):
        raise ValueError("custom link must satisfy 0 < F(x) < 1 on finite inputs")
    if np.max(np.abs(vals + vals[::-1] - 1.0)) > SYMMETRY_TOL:
        raise ValueError("custom link must satisfy F(x) = 1 - F(-x)")
    if np.any(np.diff(vals) < -SYMMETRY_TOL):
        raise ValueError("custom link must be nondecreasing")


def make_link(family: str | Callable, sigma: float = 1.0) -> LinkFunction:
    """Construct a link: 'thurstone', 'btl', or a custom CDF callable.

    Custom CDFs are screened for symmetry, monotonicity and interior range
    on a test grid, and get finite-difference derivatives.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if family == "thurstone":
        return LinkFunction("thurstone", sigma, _normal_cdf, _normal_pdf,
                            _thurstone_neg_log_second)
    if family == "btl":
        return LinkFunction("btl", sigma, expit, _btl_neg_log_second,
                            _btl_neg_log_second)
    if callable(family):
        _screen_custom_cdf(family)
        return LinkFunction("custom", sigma, family, _fd_pdf(family),
                            _fd_neg_log_second(family))
    raise ValueError(f"unknown link family {family!r}")


@dataclass(frozen=True)
class ModelParams:
    """Interval bound B with the derived curvature and KL parameters.

    sigma is carried along so that bound formulas (which mix sigma with
    gamma and zeta) can be evaluated from this object alone.
    """

    B: float
    gamma: float
    zeta: float
    sigma: float

    def __post_init__(self) -> None:
        if self.B < 0:
            raise ValueError("B must be nonnegative")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive (strong log-concavity)")
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")


def _golden_refine(fun: Callable[[float], float], lo: float, hi: float,
                   minimize: bool, iters: int = 80) -> float:
    """Golden-section search; returns the extremal function value."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    sign = 1.0 if minimize else -1.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    e = a + inv_phi * (b - a)
    fc, fe = sign * fun(c), sign * fun(e)
    for _ in range(iters):
        if fc < fe:
            b, e, fe = e, c, fc
            c = b - inv_phi * (b - a)
            fc = sign * fun(c)
        else:
            a, c, fc = c, e, fe
            e = a + inv_phi * (b - a)
            fe = sign * fun(e)
    xs = [lo, hi, (a + b) / 2.0]
    vals = [sign * fun(x) for x in xs]
    return sign * min(min(vals), fc, fe)


def _grid_extremum(fun: Callable, lo: float, hi: float, resolution: float,
                   minimize: bool) -> float:
    """Dense grid scan refined by golden-section around the best bracket."""
    if hi <= lo:
        return float(fun(lo))
    npts = max(int(math.ceil((hi - lo) / resolution)) + 1, 3)
    npts = min(npts, 2_000_001)
    grid = np.linspace(lo, hi, npts)
    vals = np.asarray(fun(grid), dtype=float)
    idx = int(np.argmin(vals) if minimize else np.argmax(vals))
    a = grid[max(idx - 1, 0)]
    b = grid[min(idx + 1, npts - 1)]
    best_grid = float(vals[idx])
    refined = _golden_refine(lambda x: float(fun(x)), a, b, minimize)
    return min(best_grid, refined) if minimize else max(best_grid, refined)


def compute_zeta(link: LinkFunction, B: float) -> float:
    """max F' over [0, 2B/sigma], divided by F(2B/sigma)(1 - F(2B/sigma))."""
    if B < 0:
        raise ValueError("B must be nonnegative")
    hi = 2.0 * B / link.sigma
    peak = _grid_extremum(link.pdf, 0.0, hi, 1e-4, minimize=False)
    # 1 - F(hi) = F(-hi); the product evaluated in log space survives far
    # larger intervals than the naive form, whose upper factor rounds to 1.
    log_denom = float(link.log_cdf(np.asarray(hi)) + link.log_cdf(np.asarray(-hi)))
    denom = math.exp(log_denom)
    if denom <= 0.0 or not math.isfinite(denom):
        raise ValueError(f"interval [0, {hi}] is too wide: F(1-F) underflows")
    return peak / denom


def compute_gamma(link: LinkFunction, B: float) -> float:
    """min of d^2/dt^2 (-log F) over [-2B/sigma, 2B/sigma].

    Rejects links whose computed minimum is not strictly positive: such a
    link is not strongly log-concave on the working interval.
    """
    if B < 0:
        raise ValueError("B must be nonnegative")
    hi = 2.0 * B / link.sigma
    gamma = _grid_extremum(link.neg_log_second, -hi, hi, 1e-4, minimize=True)
    if gamma <= 0:
        raise ValueError(
            f"link {link.name!r} is not strongly log-concave on [-{hi}, {hi}]"
        )
    return gamma


def model_params(link: LinkFunction, B: float) -> ModelParams:
    """Bundle gamma and zeta for a link over the interval set by B."""
    return ModelParams(B=B, gamma=compute_gamma(link, B),
                       zeta=compute_zeta(link, B), sigma=link.sigma)


# ---------------------------------------------------------------------------
# m-wise links
# ---------------------------------------------------------------------------


def _cyclic_shifts(m: int) -> tuple[np.ndarray, ...]:
    # R_j maps a subset-score vector x to (x_j, x_{j+1}, ..., x_{j-1}); the
    # choice probability of position j is then F(x^T R_j) = F(rotated x).
    mats = []
    for j in range(m):
        r = np.zeros((m, m))
        for b in range(m):
            r[(j + b) % m, b] = 1.0
        mats.append(r)
    return tuple(mats)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


@dataclass(frozen=True)
class MWiseLink:
    """Choice model over m-item subsets with shift-invariant probabilities.

    ``choice_prob(x)`` is the probability of choosing the first listed item
    from subset scores x; ``curvature`` lower-bounds the Hessian of
    -log F over [-B, B]^m and has the all-ones vector in its nullspace.
    """

    name: str
    m: int
    B: float
    beta: float
    curvature: np.ndarray

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError(f"need m >= 2, got {self.m}")

    @cached_property
    def shifts(self) -> tuple[np.ndarray, ...]:
        return _cyclic_shifts(self.m)

    def choice_prob(self, x: np.ndarray) -> float:
        """Probability that the first of the m listed items is chosen."""
        return float(softmax(np.asarray(x, dtype=float))[0])

    def position_probs(self, x: np.ndarray) -> np.ndarray:
        """Choice probabilities for every position; rows for 2-d input."""
        return softmax(np.asarray(x, dtype=float))

    def log_position_probs(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        shifted = x - np.max(x, axis=-1, keepdims=True)
        return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))

    def neg_log_hessian(self, x: np.ndarray) -> np.ndarray:
        """Exact Hessian of -log F at x: diag(p) - p p^T with p = softmax(x)."""
        p = softmax(np.asarray(x, dtype=float))
        return np.diag(p) - np.outer(p, p)

    def grad_choice_prob(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the first-item choice probability; orthogonal to 1."""
        p = softmax(np.asarray(x, dtype=float))
        g = -p[0] * p
        g[0] += p[0]
        return g

    def to_json(self) -> str:
        return json.dumps({"family": self.name, "m": self.m, "B": self.B})


def pl_curvature_coefficient(m: int, B: float, grid_points: int = 51,
                             mc_points: int = 4000, seed: int = 0) -> float:
    """min over [-B, B]^m of lambda_2 of the exact -log F Hessian.

    m <= 3 uses a full grid at resolution 2B/(grid_points-1) per axis;
    larger m uses the box corners plus Monte-Carlo samples (the minimiser
    empirically sits at a corner).
    """
    if m <= 3:
        axes = [np.linspace(-B, B, grid_points)] * m
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([g.ravel() for g in mesh], axis=-1)
    else:
        corners = np.array(
            [[B if (idx >> b) & 1 else -B for b in range(m)]
             for idx in range(1 << m)]
        )
        rng = np.random.default_rng(seed)
        points = np.vstack([corners, rng.uniform(-B, B, size=(mc_points, m))])
    p = softmax(points, axis=1)
    hess = p[:, None, :] * np.eye(points.shape[1])[None, :, :] - p[:, :, None] * p[:, None, :]
    vals = np.linalg.eigvalsh(hess)
    return float(np.min(vals[:, 1]))


def plackett_luce(m: int, B: float = 1.0) -> MWiseLink:
    """The softmax choice model: P[item i] proportional to e^{w_i}.

    The curvature matrix is beta * (I - 11^T/m) with beta the numerically
    minimised second eigenvalue of the exact Hessian over [-B, B]^m.  At
    m = 2 the choice probability coincides with the BTL link at sigma = 1.
    """
    if m < 2:
        raise ValueError(f"need m >= 2, got {m}")
    beta = pl_curvature_coefficient(m, B)
    curvature = beta * (np.eye(m) - np.ones((m, m)) / m)
    return MWiseLink(name="plackett_luce", m=m, B=B, beta=beta,
                     curvature=curvature)
