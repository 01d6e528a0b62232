"""Comparison graphs and their scaled-Laplacian spectra.

A comparison design assigns to each compared pair (or m-wise subset) the
fraction of the measurement budget it receives.  The induced scaled
Laplacian L = (1/n) X^T X has trace 2 (pairwise) or m(m-1) (m-wise), and
its spectrum governs both achievable estimation error and the minimax
lower bounds, so most of the analysis in the rest of the package starts
from the SpectralSummary computed here.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from functools import cached_property

import numpy as np

WEIGHT_SUM_TOL = 1e-12
TRACE_TOL = 1e-9
# Eigenvalues below DEFAULT_ZERO_TOL * lambda_max are treated as exact zeros
# when forming pseudo-inverses and counting connected components spectrally.
DEFAULT_ZERO_TOL = 1e-10

PAIRWISE_KINDS = (
    "complete",
    "star",
    "path",
    "cycle",
    "barbell",
    "complete_bipartite",
    "lattice2d",
    "hypercube",
    "expander",
)


class EigensolverError(RuntimeError):
    """Raised when the symmetric eigendecomposition fails to converge."""


def _check_connected(d: int, groups: list[tuple[int, ...]]) -> bool:
    """Union-find connectivity over item groups (edges or hyperedges)."""
    parent = list(range(d))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for group in groups:
        root = find(group[0])
        for item in group[1:]:
            r = find(item)
            if r != root:
                parent[r] = root
    return len({find(i) for i in range(d)}) == 1


@dataclass(frozen=True)
class ComparisonDesign:
    """Weighted pairwise comparison graph.

    Edge weights are fractions of the total number of comparisons, so they
    must be nonnegative and sum to one.  Item indices are 0-based.
    """

    d: int
    edges: tuple[tuple[int, int, float], ...]
    kind: str = "custom"

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError(f"need at least 2 items, got d={self.d}")
        if not self.edges:
            raise ValueError("design has no edges")
        total = 0.0
        for j, k, w in self.edges:
            if not (0 <= j < self.d and 0 <= k < self.d):
                raise ValueError(f"edge ({j},{k}) out of range for d={self.d}")
            if j == k:
                raise ValueError(f"self-comparison ({j},{j}) is not a valid edge")
            if w < 0:
                raise ValueError(f"negative edge weight {w}")
            total += w
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"edge weights sum to {total}, expected 1")

    @cached_property
    def connected(self) -> bool:
        return _check_connected(self.d, [(j, k) for j, k, w in self.edges if w > 0])

    @cached_property
    def laplacian(self) -> np.ndarray:
        """Scaled Laplacian, sum_e w_e (e_j - e_k)(e_j - e_k)^T; trace 2."""
        lap = np.zeros((self.d, self.d))
        for j, k, w in self.edges:
            lap[j, j] += w
            lap[k, k] += w
            lap[j, k] -= w
            lap[k, j] -= w
        return lap

    @cached_property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(j, k, weight) as parallel arrays, for vectorised samplers."""
        j = np.array([e[0] for e in self.edges], dtype=np.intp)
        k = np.array([e[1] for e in self.edges], dtype=np.intp)
        w = np.array([e[2] for e in self.edges], dtype=float)
        return j, k, w

    def to_json(self) -> str:
        return json.dumps(
            {
                "d": self.d,
                "kind": self.kind,
                "edges": [[j, k, w] for j, k, w in self.edges],
            }
        )


def design_from_json(text: str) -> ComparisonDesign:
    obj = json.loads(text)
    edges = tuple((int(j), int(k), float(w)) for j, k, w in obj["edges"])
    return ComparisonDesign(d=int(obj["d"]), edges=edges, kind=obj.get("kind", "custom"))


@dataclass(frozen=True)
class HyperDesign:
    """m-wise comparison hypergraph: a multiset of m-item subsets.

    Samples are spread evenly over the listed subsets.  Subset order fixes
    the columns of the selection matrices, i.e. the positions that m-wise
    winners refer to.
    """

    d: int
    m: int
    subsets: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError(f"need at least 2 items, got d={self.d}")
        if not (2 <= self.m <= self.d):
            raise ValueError(f"need 2 <= m <= d, got m={self.m}, d={self.d}")
        if not self.subsets:
            raise ValueError("design has no subsets")
        for subset in self.subsets:
            if len(subset) != self.m or len(set(subset)) != self.m:
                raise ValueError(f"subset {subset} is not {self.m} distinct items")
            if not all(0 <= i < self.d for i in subset):
                raise ValueError(f"subset {subset} out of range for d={self.d}")

    @cached_property
    def connected(self) -> bool:
        return _check_connected(self.d, list(self.subsets))

    @cached_property
    def laplacian(self) -> np.ndarray:
        return hypergraph_laplacian(self)

    @cached_property
    def subset_array(self) -> np.ndarray:
        return np.array(self.subsets, dtype=np.intp)


def hypergraph_laplacian(design: HyperDesign) -> np.ndarray:
    """Average of E_i (m I - 11^T) E_i^T over subsets; trace m(m-1).

    Reduces entrywise to the pairwise scaled Laplacian when m = 2.
    """
    d, m = design.d, design.m
    lap = np.zeros((d, d))
    for subset in design.subsets:
        idx = np.asarray(subset)
        lap[idx, idx] += m - 1.0
        jj, kk = np.meshgrid(idx, idx)
        off = jj != kk
        lap[jj[off], kk[off]] -= 1.0
    lap /= len(design.subsets)
    return lap


@dataclass(frozen=True)
class SpectralSummary:
    """Eigendecomposition L = U^T diag(eigenvalues) U with derived quantities.

    Rows of ``eigenvectors`` are eigenvectors, eigenvalues ascending.
    Eigenvalues within ``zero_tolerance`` of zero are reported as exact
    zeros and excluded from the pseudo-inverse trace.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    trace_pinv: float
    lambda2: float
    zero_tolerance: float

    @property
    def d(self) -> int:
        return self.eigenvalues.shape[0]

    @cached_property
    def pinv_diag(self) -> np.ndarray:
        """Diagonal of Lambda^dagger: reciprocals on the nonzero spectrum."""
        q = np.zeros_like(self.eigenvalues)
        nz = self.eigenvalues > 0
        q[nz] = 1.0 / self.eigenvalues[nz]
        return q

    def reconstruct(self) -> np.ndarray:
        return self.eigenvectors.T @ np.diag(self.eigenvalues) @ self.eigenvectors

    def pinv(self) -> np.ndarray:
        return self.eigenvectors.T @ np.diag(self.pinv_diag) @ self.eigenvectors

    def to_csv(self) -> str:
        lines = ["index,eigenvalue"]
        lines += [f"{i},{float(v)!r}" for i, v in enumerate(self.eigenvalues)]
        return "\n".join(lines) + "\n"


def spectrum(design: ComparisonDesign | HyperDesign | np.ndarray,
             zero_tolerance: float = DEFAULT_ZERO_TOL) -> SpectralSummary:
    """Eigendecompose a design's (hyper)graph Laplacian.

    Eigenvalues are clamped to exact zero below zero_tolerance * lambda_max;
    eigensolver non-convergence surfaces as EigensolverError.
    """
    lap = design if isinstance(design, np.ndarray) else design.laplacian
    try:
        vals, vecs = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"symmetric eigensolver failed: {exc}") from exc
    lam_max = float(vals[-1]) if vals[-1] > 0 else 0.0
    abs_tol = zero_tolerance * lam_max
    if np.any(vals < -max(abs_tol, 1e-10)):
        raise EigensolverError(
            f"Laplacian has a significantly negative eigenvalue {vals[0]}"
        )
    vals = vals.copy()
    vals[np.abs(vals) <= abs_tol] = 0.0
    vals[vals < 0] = 0.0
    nonzero = vals[vals > 0]
    trace_pinv = float(np.sum(1.0 / nonzero)) if nonzero.size else 0.0
    lambda2 = float(vals[1]) if len(vals) > 1 else 0.0
    return SpectralSummary(
        eigenvalues=vals,
        eigenvectors=vecs.T,
        trace_pinv=trace_pinv,
        lambda2=lambda2,
        zero_tolerance=abs_tol,
    )


def laplacian_seminorm(summary: SpectralSummary, u: np.ndarray, v: np.ndarray) -> float:
    """sqrt((u-v)^T L (u-v)); zero along constant shifts."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (summary.d,) or v.shape != (summary.d,):
        raise ValueError(
            f"vectors must have length {summary.d}, got {u.shape} and {v.shape}"
        )
    coords = summary.eigenvectors @ (u - v)
    val = float(np.sum(summary.eigenvalues * coords**2))
    return math.sqrt(max(val, 0.0))


# ---------------------------------------------------------------------------
# Canonical topologies
# ---------------------------------------------------------------------------


def _is_prime(q: int) -> bool:
    if q < 2:
        return False
    for p in range(2, int(math.isqrt(q)) + 1):
        if q % p == 0:
            return False
    return True


def _unweighted(d: int, pairs: list[tuple[int, int]], kind: str) -> ComparisonDesign:
    """Spread the budget evenly over an edge multiset: L = L' / |E|."""
    counts = Counter((min(j, k), max(j, k)) for j, k in pairs)
    total = sum(counts.values())
    edges = tuple((j, k, c / total) for (j, k), c in sorted(counts.items()))
    return ComparisonDesign(d=d, edges=edges, kind=kind)


def _complete_pairs(items: list[int]) -> list[tuple[int, int]]:
    return [(a, b) for i, a in enumerate(items) for b in items[i + 1:]]


def _expander_pairs(q: int) -> list[tuple[int, int]]:
    # Margulis-Gabber-Galil degree-8 multigraph on the q x q torus.  The
    # four generator maps below, applied at every node and symmetrised,
    # give the 8 incidences; self-loops (at the torus axes) carry no
    # comparison information and are dropped from the edge multiset.
    pairs = []
    for x in range(q):
        for y in range(q):
            a = x * q + y
            for u, v in (
                ((x + 2 * y) % q, y),
                ((x + 2 * y + 1) % q, y),
                (x, (y + 2 * x) % q),
                (x, (y + 2 * x + 1) % q),
            ):
                b = u * q + v
                if a != b:
                    pairs.append((a, b))
    return pairs


_KIND_RE = re.compile(r"^([a-z_0-9]+)\((\d+),(\d+)\)$")


def parse_kind(kind: str) -> tuple[str, int | None, int | None]:
    """Split 'lattice2d(4,4)'-style kind strings into (name, m1, m2)."""
    match = _KIND_RE.match(kind.strip())
    if match:
        return match.group(1), int(match.group(2)), int(match.group(3))
    return kind.strip(), None, None


def _default_split(kind: str, d: int) -> tuple[int, int]:
    if kind == "complete_bipartite":
        return d - d // 2, d // 2
    # most-square factorisation with both sides >= 2
    for m1 in range(int(math.isqrt(d)), 1, -1):
        if d % m1 == 0 and d // m1 >= 2:
            return m1, d // m1
    raise ValueError(f"d={d} has no m1*m2 factorisation with m1, m2 >= 2")


def build_topology(kind: str, d: int,
                   m1: int | None = None, m2: int | None = None) -> ComparisonDesign:
    """Build one of the canonical unweighted comparison topologies.

    The budget is spread evenly over the graph's edge multiset, so the
    scaled Laplacian is L'/|E|.  Parametrised kinds accept either explicit
    m1/m2 arguments or an inline form such as ``complete_bipartite(3,5)``;
    with neither, a balanced split is chosen.

    Dimension preconditions: barbell needs even d, hypercube a power of
    two, lattice2d d = m1*m2 (both >= 2), complete_bipartite d = m1+m2,
    expander d = q^2 for prime q.
    """
    name, km1, km2 = parse_kind(kind)
    m1 = m1 if m1 is not None else km1
    m2 = m2 if m2 is not None else km2
    if d < 2:
        raise ValueError(f"need d >= 2, got {d}")
    items = list(range(d))

    if name == "complete":
        return _unweighted(d, _complete_pairs(items), name)
    if name == "star":
        return _unweighted(d, [(0, i) for i in range(1, d)], name)
    if name == "path":
        return _unweighted(d, [(i, i + 1) for i in range(d - 1)], name)
    if name == "cycle":
        if d < 3:
            raise ValueError("cycle needs d >= 3")
        return _unweighted(d, [(i, (i + 1) % d) for i in range(d)], name)
    if name == "barbell":
        if d % 2 != 0 or d < 4:
            raise ValueError(f"barbell needs even d >= 4, got {d}")
        half = d // 2
        pairs = _complete_pairs(items[:half]) + _complete_pairs(items[half:])
        pairs.append((half - 1, half))  # single bridge between the cliques
        return _unweighted(d, pairs, name)
    if name == "complete_bipartite":
        if m1 is None or m2 is None:
            m1, m2 = _default_split(name, d)
        if m1 + m2 != d or m1 < 1 or m2 < 1:
            raise ValueError(f"complete_bipartite needs d = m1+m2, got {d} != {m1}+{m2}")
        return _unweighted(
            d, [(a, m1 + b) for a in range(m1) for b in range(m2)],
            f"complete_bipartite({m1},{m2})",
        )
    if name == "lattice2d":
        if m1 is None or m2 is None:
            m1, m2 = _default_split(name, d)
        if m1 * m2 != d or m1 < 2 or m2 < 2:
            raise ValueError(f"lattice2d needs d = m1*m2 with m1, m2 >= 2, got d={d}")
        pairs = []
        for r in range(m1):
            for c in range(m2):
                node = r * m2 + c
                if c + 1 < m2:
                    pairs.append((node, node + 1))
                if r + 1 < m1:
                    pairs.append((node, node + m2))
        return _unweighted(d, pairs, f"lattice2d({m1},{m2})")
    if name == "hypercube":
        bits = d.bit_length() - 1
        if d != 1 << bits or d < 4:
            raise ValueError(f"hypercube needs d a power of 2 (>= 4), got {d}")
        pairs = [(v, v ^ (1 << b)) for v in range(d) for b in range(bits) if v < v ^ (1 << b)]
        return _unweighted(d, pairs, name)
    if name == "expander":
        q = math.isqrt(d)
        if q * q != d or not _is_prime(q):
            raise ValueError(f"expander needs d = q^2 for prime q, got {d}")
        return _unweighted(d, _expander_pairs(q), name)
    raise ValueError(f"unknown topology kind {kind!r}")


# ---------------------------------------------------------------------------
# Topology optimality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimalityReport:
    """Raw spectral statistics plus a thresholded classification.

    ratio_r = 1/(lambda2 * d) is the gap ratio whose boundedness marks an
    optimal topology; lb_statistic is the trailing-window sum of inverse
    eigenvalues whose growth beyond d^2 marks a strictly suboptimal one.
    The thresholds are heuristics for fixed d (the underlying conditions
    are asymptotic), so the raw statistics are always reported.
    """

    ratio_r: float
    lb_statistic: float
    classification: str
    c_opt: float
    c_sub: float


def lower_bound_statistic(summary: SpectralSummary) -> float:
    """max over d' in {2..d} of sum_{i=floor(0.99 d')}^{d'} 1/lambda_i.

    Indices are 1-based over the ascending spectrum; zero eigenvalues
    contribute zero (pseudo-inverse reading), which also covers the small-d'
    windows that formally include lambda_1 = 0.
    """
    q = summary.pinv_diag
    best = 0.0
    for d_prime in range(2, summary.d + 1):
        lo = int(math.floor(0.99 * d_prime))
        window = float(np.sum(q[lo - 1:d_prime]))
        best = max(best, window)
    return best


def optimality_report(summary: SpectralSummary, d: int,
                      c_opt: float = 2.0, c_sub: float = 4.0) -> OptimalityReport:
    """Classify a connected design as optimal / suboptimal / indeterminate."""
    if summary.lambda2 <= 0:
        raise ValueError("optimality analysis requires a connected design")
    if d != summary.d:
        raise ValueError(f"d={d} does not match summary dimension {summary.d}")
    ratio = 1.0 / (summary.lambda2 * d)
    stat = lower_bound_statistic(summary)
    if ratio <= c_opt:
        label = "optimal"
    elif stat > c_sub * d * d:
        label = "suboptimal"
    else:
        label = "indeterminate"
    return OptimalityReport(
        ratio_r=ratio, lb_statistic=stat, classification=label,
        c_opt=c_opt, c_sub=c_sub,
    )
