"""Executable minimax bounds: KL divergences, packings, Fano, theorem reports.

Unnamed constants in the theorems default to 1.0 and are threaded through
every report, so the numbers produced here are honest "up to constants"
quantities; tests assert scalings, never the constants themselves.  The
Fano pipeline goes further and executes the lower-bound proof recipe
end to end, producing a fully constructive numeric bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .graph import ComparisonDesign, HyperDesign, lower_bound_statistic, spectrum
from .models import LinkFunction, ModelParams, MWiseLink, softmax

THEOREMS = ("T1_lap", "T2_l2", "T3_paired", "T4_mwise_lap", "T4_mwise_l2")


@dataclass(frozen=True)
class BoundConstants:
    """The numerical constants c_* of the theorems, all defaulting to 1."""

    c1l: float = 1.0
    c1u: float = 1.0
    c2l: float = 1.0
    c2u: float = 1.0
    c3l: float = 1.0
    c3u: float = 1.0
    c4l: float = 1.0
    c4u: float = 1.0
    c_sample: float = 1.0

    def __post_init__(self) -> None:
        for name in ("c1l", "c1u", "c2l", "c2u", "c3l", "c3u", "c4l", "c4u", "c_sample"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("c1l", "c1u", "c2l", "c2u", "c3l", "c3u", "c4l", "c4u", "c_sample")}


@dataclass(frozen=True)
class BoundReport:
    lower: float
    upper: float
    applicable: bool
    constants: BoundConstants
    formula: str
    context: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lower < 0 or self.upper < 0:
            raise ValueError("bounds must be nonnegative")

    def to_json(self) -> str:
        return json.dumps(
            {
                "formula": self.formula,
                "lower": self.lower,
                "upper": self.upper,
                "applicable": self.applicable,
                "constants": self.constants.as_dict(),
                **self.context,
            }
        )


# ---------------------------------------------------------------------------
# KL divergences
# ---------------------------------------------------------------------------


def _values(w) -> np.ndarray:
    return np.asarray(getattr(w, "values", w), dtype=float)


def kl_exact(w1, w2, design: ComparisonDesign | HyperDesign,
             link: LinkFunction | MWiseLink, n: float) -> float:
    """KL divergence between the n-sample observation laws at w1 and w2.

    Pairwise designs contribute Bernoulli KLs per edge, hyper designs
    categorical KLs per subset, each weighted by the expected number of
    samples the design allocates to that entry.
    """
    a, b = _values(w1), _values(w2)
    if a.shape != b.shape or a.shape != (design.d,):
        raise ValueError("quality vectors must both have the design's dimension")
    if isinstance(design, HyperDesign):
        if not isinstance(link, MWiseLink):
            raise ValueError("hyper designs need an m-wise link")
        scores1 = a[design.subset_array]
        scores2 = b[design.subset_array]
        lp1 = link.log_position_probs(scores1)
        lp2 = link.log_position_probs(scores2)
        per_subset = np.sum(np.exp(lp1) * (lp1 - lp2), axis=1)
        return float(n * np.mean(per_subset))
    if not isinstance(link, LinkFunction):
        raise ValueError("pairwise designs need a pairwise link")
    j_idx, k_idx, weights = design.edge_arrays
    t1 = (a[j_idx] - a[k_idx]) / link.sigma
    t2 = (b[j_idx] - b[k_idx]) / link.sigma
    p1 = link.cdf(t1)
    # Bernoulli KL written with log F(t) and log F(-t) = log(1 - F(t)).
    per_edge = (p1 * (link.log_cdf(t1) - link.log_cdf(t2))
                + (1.0 - p1) * (link.log_cdf(-t1) - link.log_cdf(-t2)))
    return float(n * np.sum(weights * per_edge))


def kl_upper(w1, w2, design: ComparisonDesign, params: ModelParams, n: float) -> float:
    """The Laplacian-seminorm KL bound (n zeta / sigma^2) |w1 - w2|_L^2.

    Dominates kl_exact whenever both vectors lie in the bound set for
    params.B, the domain on which the bound is valid; membership is
    enforced here.
    """
    a, b = _values(w1), _values(w2)
    for v in (a, b):
        if float(np.max(np.abs(v))) > params.B + 1e-12:
            raise ValueError("KL upper bound requires |w|_inf <= B")
    delta = a - b
    sq = float(delta @ design.laplacian @ delta)
    return n * params.zeta / params.sigma**2 * max(sq, 0.0)


# ---------------------------------------------------------------------------
# Gilbert-Varshamov packing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PackingSet:
    """Binary packing vectors with first coordinate pinned to zero."""

    vectors: np.ndarray  # M x d, entries in {0, 1}
    alpha: float
    M: int
    target: int
    shortfall: bool

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] != self.M:
            raise ValueError("vector matrix must be M x d")


def gv_target(d: int, alpha: float) -> int:
    """Packing cardinality floor(exp{(d/2)(log2 + 2a log 2a + (1-2a)log(1-2a))})."""
    if not (0.0 < alpha < 0.25):
        raise ValueError(f"alpha must lie in (0, 1/4), got {alpha}")
    inner = math.log(2.0) + 2 * alpha * math.log(2 * alpha) \
        + (1 - 2 * alpha) * math.log(1 - 2 * alpha)
    return int(math.floor(math.exp(d / 2.0 * inner)))


def _void_keys(bits: np.ndarray) -> np.ndarray:
    packed = np.packbits(bits, axis=1)
    return packed.view(f"V{packed.shape[1]}").ravel()


def gv_packing(d: int, alpha: float, seed=0, max_rejects: int = 1_000_000) -> PackingSet:
    """Greedy randomised construction of a GV packing.

    Draws uniform binary vectors with first coordinate zero, keeping those
    at squared Hamming distance >= alpha*d from everything kept so far,
    until the Eq.-24 target is reached or max_rejects candidates have been
    discarded (the non-constructive existence bound says nothing about
    constructibility, so shortfalls are reported, not hidden).  When
    alpha*d <= 1 the distance condition is plain distinctness, which is
    checked by hashing so that large targets stay cheap.
    """
    if d < 2:
        raise ValueError(f"need d >= 2, got {d}")
    target = gv_target(d, alpha)
    rng = np.random.default_rng(seed)
    min_dist = alpha * d

    if min_dist <= 1.0:
        # Distinct vectors suffice; deduplicate by hashed bit-packing so
        # multi-million-vector targets stay cheap.
        seen = set()
        rows = []
        rejects = 0
        while len(rows) < target and rejects <= max_rejects:
            batch = max(target - len(rows) + 1024, 4096)
            bits = rng.integers(0, 2, size=(batch, d), dtype=np.uint8)
            bits[:, 0] = 0
            keys = _void_keys(bits)
            for i, key in enumerate(keys):
                kb = key.tobytes()
                if kb in seen:
                    rejects += 1
                    if rejects > max_rejects:
                        break
                    continue
                seen.add(kb)
                rows.append(bits[i])
                if len(rows) == target:
                    break
        vectors = np.array(rows, dtype=np.uint8) if rows else np.zeros((0, d), np.uint8)
    else:
        kept: list[np.ndarray] = []
        matrix = np.zeros((0, d), dtype=np.uint8)
        rejects = 0
        while len(kept) < target and rejects <= max_rejects:
            batch = rng.integers(0, 2, size=(1024, d), dtype=np.uint8)
            batch[:, 0] = 0
            for cand in batch:
                if matrix.shape[0]:
                    dists = np.sum(matrix != cand, axis=1)
                    if dists.min() < min_dist:
                        rejects += 1
                        if rejects > max_rejects:
                            break
                        continue
                kept.append(cand)
                matrix = np.vstack([matrix, cand])
                if len(kept) == target:
                    break
        vectors = matrix

    m_found = vectors.shape[0]
    return PackingSet(vectors=vectors, alpha=alpha, M=m_found,
                      target=target, shortfall=m_found < target)


def fano_bound(delta_sq: float, beta: float, M: int) -> float:
    """delta^2/2 (1 - (beta + log 2)/log M), clamped below at zero."""
    if M < 2:
        raise ValueError(f"Fano needs a packing of size >= 2, got M={M}")
    if delta_sq < 0 or beta < 0:
        raise ValueError("delta_sq and beta must be nonnegative")
    return max(0.0, delta_sq / 2.0 * (1.0 - (beta + math.log(2.0)) / math.log(M)))


# ---------------------------------------------------------------------------
# m-wise pre-factors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MWisePrefactors:
    """Box extrema of the link quantities entering the m-wise theorem."""

    inf_choice_prob: float
    sup_grad_hdag_sq: float
    sup_grad_log_sq: float
    lambda2_h: float
    lambda_m_h: float

    @cached_property
    def zeta(self) -> float:
        """sup |grad F|^2_{H^dagger} / inf F, the m-wise KL coefficient."""
        return self.sup_grad_hdag_sq / self.inf_choice_prob


def _box_points(m: int, B: float, grid_points: int, mc_points: int, seed) -> np.ndarray:
    # Full grid for m <= 3 (resolution 2B/(grid_points-1) per axis); box
    # corners plus Monte-Carlo fill-in beyond that.
    if m <= 3:
        axes = [np.linspace(-B, B, grid_points)] * m
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)
    corners = np.array(
        [[B if (idx >> b) & 1 else -B for b in range(m)] for idx in range(1 << m)]
    )
    rng = np.random.default_rng(seed)
    return np.vstack([corners, rng.uniform(-B, B, size=(mc_points, m))])


def mwise_prefactors(link: MWiseLink, grid_points: int = 51,
                     mc_points: int = 4000, seed: int = 0) -> MWisePrefactors:
    points = _box_points(link.m, link.B, grid_points, mc_points, seed)
    p = softmax(points, axis=1)
    p0 = p[:, 0]
    grad_f = -p0[:, None] * p
    grad_f[:, 0] += p0
    grad_log = -p.copy()
    grad_log[:, 0] += 1.0
    h_pinv = np.linalg.pinv(link.curvature)
    grad_hdag = np.einsum("ij,jk,ik->i", grad_f, h_pinv, grad_f)
    h_eigs = np.linalg.eigvalsh(link.curvature)
    return MWisePrefactors(
        inf_choice_prob=float(p0.min()),
        sup_grad_hdag_sq=float(grad_hdag.max()),
        sup_grad_log_sq=float(np.max(np.sum(grad_log**2, axis=1))),
        lambda2_h=float(h_eigs[1]),
        lambda_m_h=float(h_eigs[-1]),
    )


# ---------------------------------------------------------------------------
# Theorem reports
# ---------------------------------------------------------------------------


def minimax_bounds(theorem: str, design: ComparisonDesign | HyperDesign,
                   params: ModelParams | MWiseLink, n: float,
                   constants: BoundConstants = BoundConstants(),
                   t1_display_reading: bool = False) -> BoundReport:
    """Evaluate one of the minimax lower/upper bound formula pairs.

    T1_lap / T2_l2 / T3_paired take a ComparisonDesign with ModelParams;
    T4_mwise_lap / T4_mwise_l2 take a HyperDesign with an MWiseLink.  The
    applicable flag records whether the lower bound's sample-size
    condition holds; formulas are evaluated either way.

    Two normalisations of the T1 lower bound are in circulation, differing
    by a dimension factor; the default is the per-dimension rate, and
    t1_display_reading switches to the d-times-larger reading.
    """
    if theorem not in THEOREMS:
        raise ValueError(f"unknown theorem {theorem!r}; expected one of {THEOREMS}")
    if n <= 0:
        raise ValueError("n must be positive")
    summary = spectrum(design)
    d = design.d
    if summary.lambda2 <= 0:
        raise ValueError("bounds require a connected design")

    if theorem.startswith("T4"):
        if not isinstance(design, HyperDesign) or not isinstance(params, MWiseLink):
            raise ValueError("T4 needs a HyperDesign and an MWiseLink")
        link = params
        pre = mwise_prefactors(link)
        m = link.m
        lower_pref = pre.inf_choice_prob / (m**2 * pre.lambda_m_h * pre.sup_grad_hdag_sq)
        upper_pref = m**2 * pre.sup_grad_log_sq / pre.lambda2_h**2
        applicable = n >= constants.c_sample * summary.trace_pinv / (
            pre.zeta * link.B**2 * pre.lambda_m_h)
        if theorem == "T4_mwise_lap":
            lower = constants.c4l * lower_pref * d / n
            upper = constants.c4u * upper_pref * d / n
        else:
            lower = constants.c4l * lower_pref * d * d / n
            # Euclidean upper bound: the seminorm bound divided by the
            # algebraic connectivity.
            upper = constants.c4u * upper_pref * d / (summary.lambda2 * n)
        context = {"theorem": theorem, "d": d, "m": m, "n": n, "B": link.B,
                   "prefactors": {"inf_F": pre.inf_choice_prob,
                                  "sup_grad_hdag_sq": pre.sup_grad_hdag_sq,
                                  "sup_grad_log_sq": pre.sup_grad_log_sq,
                                  "lambda2_H": pre.lambda2_h,
                                  "lambda_m_H": pre.lambda_m_h}}
        return BoundReport(lower, upper, applicable, constants, theorem, context)

    if not isinstance(design, ComparisonDesign) or not isinstance(params, ModelParams):
        raise ValueError(f"{theorem} needs a ComparisonDesign and ModelParams")
    sigma, zeta, gamma, B = params.sigma, params.zeta, params.gamma, params.B
    sample_floor = constants.c_sample * sigma**2 * summary.trace_pinv / (zeta * B**2)
    applicable = n >= sample_floor
    context = {"theorem": theorem, "d": d, "n": n, "sigma": sigma, "B": B,
               "gamma": gamma, "zeta": zeta, "lambda2": summary.lambda2,
               "trace_pinv": summary.trace_pinv, "sample_floor": sample_floor}

    if theorem == "T1_lap":
        lower = constants.c1l * sigma**2 / (zeta * n)
        if t1_display_reading:
            lower *= d
        upper = constants.c1u * (zeta / gamma) * sigma**2 * d / n
    elif theorem == "T2_l2":
        stat = max(float(d * d), lower_bound_statistic(summary))
        lower = constants.c2l * sigma**2 / n * stat
        upper = constants.c2u * (zeta / gamma) * sigma**2 * d / (summary.lambda2 * n)
        context["lb_statistic"] = stat
    else:  # T3_paired
        lower = constants.c3l * sigma**2 * summary.trace_pinv / n
        upper = constants.c3u * sigma**2 * summary.trace_pinv / n
        applicable = True
    return BoundReport(lower, upper, applicable, constants, theorem, context)


# ---------------------------------------------------------------------------
# Cardinal versus ordinal decision
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CvoReport:
    decision: str  # ordinal_better | cardinal_better | indeterminate
    b_l: float
    b_u: float
    b: int
    sigma_ord: float
    sigma_card: float
    B: float

    def to_json(self) -> str:
        return json.dumps(
            {"decision": self.decision, "b_l": self.b_l, "b_u": self.b_u,
             "b": self.b, "sigma_ord": self.sigma_ord,
             "sigma_card": self.sigma_card, "B": self.B}
        )


def cvo_decision(sigma_ord: float, sigma_card: float, B: float,
                 constants: BoundConstants = BoundConstants()) -> CvoReport:
    """Choose between comparison and numeric-score elicitation.

    The b-factors specialise the Euclidean theorem to the Gaussian link;
    ordinal elicitation wins when b_u sigma^2 < sigma_c^2, cardinal when
    b_l sigma^2 > sigma_c^2, and with loose default constants a genuine
    indeterminate band remains in between.
    """
    from .models import compute_gamma, compute_zeta, make_link

    if sigma_ord <= 0 or sigma_card <= 0 or B <= 0:
        raise ValueError("all scales must be positive")
    link = make_link("thurstone", sigma_ord)
    zeta_g = compute_zeta(link, B)
    gamma_g = compute_gamma(link, B)
    b_l = constants.c2l / zeta_g
    b_u = constants.c2u * zeta_g / gamma_g
    b = int(math.ceil(constants.c_sample * sigma_ord**2 / (zeta_g * B**2)))
    if b_u * sigma_ord**2 < sigma_card**2:
        decision = "ordinal_better"
    elif b_l * sigma_ord**2 > sigma_card**2:
        decision = "cardinal_better"
    else:
        decision = "indeterminate"
    return CvoReport(decision, b_l, b_u, b, sigma_ord, sigma_card, B)


# ---------------------------------------------------------------------------
# Constructive Fano pipeline
# ---------------------------------------------------------------------------


def fano_pipeline(design: ComparisonDesign, params: ModelParams, n: float,
                  alpha: float = 0.01, variant: str = "lap", seed: int = 0,
                  packing_cap: int = 512) -> float:
    """Execute the lower-bound proof recipe and return the numeric bound.

    Builds a packing (the three-vector proof set for d <= 9, else a GV
    packing), maps it through the design's eigensystem into the bound set,
    verifies membership, computes the mean KL through the seminorm bound,
    and applies the Fano inequality with the realised minimum separation.
    variant 'lap' lower-bounds the squared Laplacian seminorm risk,
    variant 'l2' the squared Euclidean risk.

    Packings larger than packing_cap are truncated: any subset of a
    packing is still a packing, trading bound strength for tractable
    pairwise computations.
    """
    if variant not in ("lap", "l2"):
        raise ValueError(f"unknown variant {variant!r}")
    if not design.connected:
        raise ValueError("the pipeline requires a connected design")
    summary = spectrum(design)
    d = design.d
    sigma, zeta, B = params.sigma, params.zeta, params.B
    sqrt_pinv = np.sqrt(summary.pinv_diag)

    if d <= 9:
        delta_sq = sigma**2 * math.log(2.0) / (8.0 * n * zeta)
        if variant == "lap":
            z = np.zeros((3, d))
            z[0, -1] = -1.0
            z[1, -1] = 1.0
            w_set = math.sqrt(delta_sq / d) * (z * sqrt_pinv) @ summary.eigenvectors
        else:
            z = np.zeros((3, d))
            z[0, 1] = 1.0
            z[1, 1] = -1.0
            w_set = math.sqrt(delta_sq) * (z * sqrt_pinv) @ summary.eigenvectors
    else:
        packing = gv_packing(d, alpha, seed)
        if packing.shortfall:
            raise ValueError(
                f"greedy packing shortfall: found {packing.M} of {packing.target} vectors"
            )
        z = packing.vectors[:packing_cap].astype(float)
        if variant == "lap":
            delta_sq = 0.01 * sigma**2 * d / (n * zeta)
            w_set = math.sqrt(delta_sq / d) * (z * sqrt_pinv) @ summary.eigenvectors
        else:
            delta_sq = 0.01 * sigma**2 * d * d / (4.0 * n * zeta)
            # Pair heavily-used packing coordinates with small eigenvalues:
            # permute eigencoordinates 2..d so pair activity descends while
            # the eigenvalues ascend, keeping the mean KL small.
            counts = z.sum(axis=0)
            activity = counts * (z.shape[0] - counts)
            order = np.argsort(-activity[1:], kind="stable") + 1
            z_perm = np.zeros_like(z)
            z_perm[:, 0] = z[:, 0]
            z_perm[:, 1:] = z[:, order]
            w_set = math.sqrt(delta_sq / d) * z_perm @ summary.eigenvectors

    peak = float(np.max(np.abs(w_set)))
    if peak > B + 1e-12:
        raise ValueError(
            f"packing leaves the bound set (|w|_inf = {peak:.3g} > B = {B}); "
            "the sample-size condition is too tight for these constants"
        )
    m_count = w_set.shape[0]
    gram = w_set @ design.laplacian @ w_set.T
    diag = np.diag(gram)
    lap_dists = diag[:, None] + diag[None, :] - 2.0 * gram
    off = ~np.eye(m_count, dtype=bool)
    beta = float(n * zeta / sigma**2 * np.mean(np.maximum(lap_dists[off], 0.0)))
    if variant == "lap":
        separation = float(np.min(lap_dists[off]))
    else:
        sq = np.sum(w_set**2, axis=1)
        l2_dists = sq[:, None] + sq[None, :] - 2.0 * w_set @ w_set.T
        separation = float(np.min(l2_dists[off]))
    return fano_bound(max(separation, 0.0), beta, m_count)
