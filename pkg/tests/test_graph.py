"""Tests for comparison-graph construction and spectral analysis."""

import json
import math

import numpy as np
import pytest
import scipy.linalg

from ranktopo.graph import (
    ComparisonDesign,
    HyperDesign,
    build_topology,
    design_from_json,
    hypergraph_laplacian,
    laplacian_seminorm,
    lower_bound_statistic,
    optimality_report,
    spectrum,
)

from oracles import closed_form_spectrum, measurement_matrix

# (kind, smallest valid d >= 4, a larger valid d)
TOPOLOGY_CASES = [
    ("complete", 4, 12),
    ("star", 4, 12),
    ("path", 4, 12),
    ("cycle", 4, 12),
    ("barbell", 4, 12),
    ("complete_bipartite", 4, 12),
    ("lattice2d", 4, 12),
    ("hypercube", 4, 16),
    ("expander", 4, 25),
]

# The Margulis-Gabber-Galil expander has no closed-form spectrum, so its
# algebraic connectivity is pinned after a cross-solver computation.
EXPANDER_LAMBDA2 = {4: 0.5, 9: 0.1414353635223338, 25: 0.03343268884465986,
                    49: 0.013231752043790146}


def _split(kind, d):
    if kind == "complete_bipartite":
        return d - d // 2, d // 2
    if kind == "lattice2d":
        for m1 in range(int(math.isqrt(d)), 1, -1):
            if d % m1 == 0 and d // m1 >= 2:
                return m1, d // m1
    return None, None


class TestTopologySpectra:
    @pytest.mark.parametrize("kind,d_small,d_large", TOPOLOGY_CASES)
    def test_closed_form_match(self, kind, d_small, d_large):
        """Numeric eigensolve agrees with the closed-form catalog to 1e-8."""
        for d in (d_small, d_large):
            design = build_topology(kind, d)
            summary = spectrum(design)
            m1, m2 = _split(kind, d)
            reference = closed_form_spectrum(kind, d, m1, m2)
            if reference is None:
                np.testing.assert_allclose(
                    summary.lambda2, EXPANDER_LAMBDA2[d], rtol=0, atol=1e-10)
                continue
            np.testing.assert_allclose(summary.eigenvalues, reference,
                                       rtol=0, atol=1e-8)

    def test_complete_d4_spectrum(self):
        summary = spectrum(build_topology("complete", 4))
        np.testing.assert_allclose(summary.eigenvalues, [0, 2 / 3, 2 / 3, 2 / 3],
                                   atol=1e-12)
        assert abs(summary.trace_pinv - 4.5) < 1e-10

    def test_star_d4_spectrum(self):
        summary = spectrum(build_topology("star", 4))
        np.testing.assert_allclose(summary.eigenvalues, [0, 1 / 3, 1 / 3, 4 / 3],
                                   atol=1e-12)

    def test_cycle_d4_spectrum(self):
        summary = spectrum(build_topology("cycle", 4))
        np.testing.assert_allclose(summary.eigenvalues, [0, 0.5, 0.5, 1.0],
                                   atol=1e-12)

    def test_hypercube_d8_lambda2(self):
        assert abs(spectrum(build_topology("hypercube", 8)).lambda2 - 1 / 6) < 1e-12

    def test_bipartite_2_2_spectrum(self):
        summary = spectrum(build_topology("complete_bipartite", 4, 2, 2))
        np.testing.assert_allclose(summary.eigenvalues, [0, 0.5, 0.5, 1.0],
                                   atol=1e-12)

    def test_expander_cross_solver(self):
        """numpy and scipy eigensolvers agree on the expander spectrum."""
        for d in (9, 25):
            design = build_topology("expander", d)
            ours = spectrum(design).eigenvalues
            theirs = np.sort(scipy.linalg.eigh(design.laplacian, eigvals_only=True))
            theirs[np.abs(theirs) < 1e-12] = 0.0
            np.testing.assert_allclose(ours, theirs, atol=1e-10)

    def test_kind_string_parsing(self):
        design = build_topology("complete_bipartite(3,5)", 8)
        assert design.kind == "complete_bipartite(3,5)"
        summary = spectrum(design)
        np.testing.assert_allclose(
            summary.eigenvalues, closed_form_spectrum("complete_bipartite", 8, 3, 5),
            atol=1e-10)

    @pytest.mark.parametrize("kind,d", [
        ("hypercube", 6), ("barbell", 7), ("expander", 16), ("expander", 10),
        ("lattice2d", 7), ("complete", 1), ("unknown_kind", 4),
    ])
    def test_dimension_errors(self, kind, d):
        with pytest.raises(ValueError):
            build_topology(kind, d)


class TestDesignInvariants:
    def _valid_dims(self, kind):
        dims = []
        for d in range(4, 65):
            try:
                build_topology(kind, d)
            except ValueError:
                continue
            dims.append(d)
        return dims

    @pytest.mark.parametrize("kind", [c[0] for c in TOPOLOGY_CASES])
    def test_trace_psd_nullspace(self, kind):
        """trace(L) = 2, PSD, ones-nullspace and tr(L+) >= d^2/4 throughout."""
        dims = self._valid_dims(kind)
        assert dims, f"no valid dimensions for {kind}"
        for d in dims[:: max(len(dims) // 8, 1)]:
            design = build_topology(kind, d)
            lap = design.laplacian
            assert abs(np.trace(lap) - 2.0) < 1e-9
            summary = spectrum(design)
            assert np.all(summary.eigenvalues >= 0)
            assert np.linalg.norm(lap @ np.ones(d)) < 1e-9
            assert design.connected
            assert summary.lambda2 > 0
            assert summary.trace_pinv >= d * d / 4 - 1e-9

    def test_weights_sum_to_one(self):
        for kind, d, _ in TOPOLOGY_CASES:
            design = build_topology(kind, d)
            assert abs(sum(w for _, _, w in design.edges) - 1.0) < 1e-12
            assert all(w >= 0 for _, _, w in design.edges)

    def test_connectivity_flag_matches_lambda2(self):
        two_cliques = ComparisonDesign(
            4, ((0, 1, 0.5), (2, 3, 0.5)), "disconnected")
        assert not two_cliques.connected
        assert spectrum(two_cliques).lambda2 == 0.0

    def test_validation_errors(self):
        with pytest.raises(ValueError):
            ComparisonDesign(2, ((0, 0, 1.0),))  # self loop
        with pytest.raises(ValueError):
            ComparisonDesign(2, ((0, 1, 0.5),))  # weights don't sum to 1
        with pytest.raises(ValueError):
            ComparisonDesign(2, ((0, 1, 2.0), (0, 1, -1.0)))  # negative weight
        with pytest.raises(ValueError):
            ComparisonDesign(2, ((0, 3, 1.0),))  # out of range
        with pytest.raises(ValueError):
            ComparisonDesign(1, ((0, 0, 1.0),))


class TestSpectralSummary:
    def test_reconstruction(self):
        for kind in ("complete", "path", "barbell"):
            design = build_topology(kind, 8)
            summary = spectrum(design)
            err = np.linalg.norm(summary.reconstruct() - design.laplacian, "fro")
            assert err < 1e-8

    def test_zero_clamping(self):
        summary = spectrum(build_topology("complete", 6))
        assert summary.eigenvalues[0] == 0.0
        assert summary.pinv_diag[0] == 0.0

    def test_pinv_identity_on_range(self):
        design = build_topology("star", 6)
        summary = spectrum(design)
        product = summary.pinv() @ design.laplacian
        centering = np.eye(6) - np.ones((6, 6)) / 6
        np.testing.assert_allclose(product, centering, atol=1e-10)


class TestSeminorm:
    def test_zero_cases(self):
        summary = spectrum(build_topology("complete", 5))
        u = np.arange(5.0)
        assert laplacian_seminorm(summary, u, u) == 0.0
        assert laplacian_seminorm(summary, u + 1.0, u) < 1e-12

    def test_single_edge_value(self):
        design = ComparisonDesign(2, ((0, 1, 1.0),), "single")
        summary = spectrum(design)
        value = laplacian_seminorm(summary, np.array([0.2, 0.0]), np.zeros(2))
        assert abs(value - 0.2) < 1e-12

    def test_length_mismatch(self):
        summary = spectrum(build_topology("complete", 4))
        with pytest.raises(ValueError):
            laplacian_seminorm(summary, np.zeros(3), np.zeros(4))

    def test_matches_direct_quadratic_form(self):
        design = build_topology("path", 7)
        summary = spectrum(design)
        rng = np.random.default_rng(11)
        for _ in range(50):
            u = rng.standard_normal(7)
            v = rng.standard_normal(7)
            direct = math.sqrt((u - v) @ design.laplacian @ (u - v))
            assert abs(laplacian_seminorm(summary, u, v) - direct) < 1e-10


class TestHypergraph:
    def test_m2_reduces_to_pairwise(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            d = int(rng.integers(3, 9))
            n_sub = int(rng.integers(d, 3 * d))
            subsets = []
            for _ in range(n_sub):
                pair = rng.choice(d, size=2, replace=False)
                subsets.append(tuple(int(v) for v in pair))
            hyper = HyperDesign(d, 2, tuple(subsets))
            from collections import Counter
            counts = Counter((min(s), max(s)) for s in subsets)
            edges = tuple((j, k, c / n_sub) for (j, k), c in sorted(counts.items()))
            pairwise = ComparisonDesign(d, edges)
            np.testing.assert_allclose(hyper.laplacian, pairwise.laplacian,
                                       rtol=0, atol=1e-12)

    @pytest.mark.parametrize("m", [2, 3, 5])
    def test_trace(self, m):
        import itertools
        hyper = HyperDesign(6, m, tuple(itertools.combinations(range(6), m)))
        assert abs(np.trace(hyper.laplacian) - m * (m - 1)) < 1e-9

    def test_single_full_subset(self):
        hyper = HyperDesign(3, 3, ((0, 1, 2),))
        expected = 3 * np.eye(3) - np.ones((3, 3))
        np.testing.assert_allclose(hypergraph_laplacian(hyper), expected, atol=1e-12)

    def test_nullspace_and_connectivity(self):
        hyper = HyperDesign(6, 3, ((0, 1, 2), (2, 3, 4), (3, 4, 5)))
        assert hyper.connected
        summary = spectrum(hyper)
        assert summary.lambda2 > 0
        assert np.linalg.norm(hyper.laplacian @ np.ones(6)) < 1e-12
        split = HyperDesign(6, 3, ((0, 1, 2), (3, 4, 5)))
        assert not split.connected
        assert spectrum(split).lambda2 == 0.0

    def test_subset_validation(self):
        with pytest.raises(ValueError):
            HyperDesign(4, 3, ((0, 1, 1),))
        with pytest.raises(ValueError):
            HyperDesign(4, 3, ((0, 1, 9),))
        with pytest.raises(ValueError):
            HyperDesign(4, 5, ((0, 1, 2, 3, 4),))


class TestOptimality:
    def test_complete_d10(self):
        report = optimality_report(spectrum(build_topology("complete", 10)), 10)
        assert abs(report.ratio_r - 0.45) < 1e-10
        assert report.classification == "optimal"

    def test_star_d10(self):
        report = optimality_report(spectrum(build_topology("star", 10)), 10)
        assert report.classification == "optimal"

    def test_path_d10_not_optimal(self):
        report = optimality_report(spectrum(build_topology("path", 10)), 10)
        assert abs(report.ratio_r - 9.194278) < 1e-5
        assert report.classification != "optimal"

    def test_path_d40_suboptimal(self):
        report = optimality_report(spectrum(build_topology("path", 40)), 40)
        assert report.classification == "suboptimal"

    def test_lb_statistic_complete_d10(self):
        # window sums of 1/lambda over the (2/9)-flat spectrum peak at 9
        stat = lower_bound_statistic(spectrum(build_topology("complete", 10)))
        assert abs(stat - 9.0) < 1e-9

    def test_thresholds_overridable(self):
        summary = spectrum(build_topology("path", 10))
        loose = optimality_report(summary, 10, c_opt=10.0)
        assert loose.classification == "optimal"
        tight = optimality_report(summary, 10, c_sub=0.5)
        assert tight.classification == "suboptimal"

    def test_disconnected_rejected(self):
        design = ComparisonDesign(4, ((0, 1, 0.5), (2, 3, 0.5)))
        with pytest.raises(ValueError):
            optimality_report(spectrum(design), 4)


class TestProjectionIdentity:
    @pytest.mark.parametrize("kind", ["complete", "star", "path"])
    def test_q_is_rank_deficient_projection(self, kind):
        """Q = (1/n) X L+ X^T has trace d-1, unit operator norm, fro^2 = d-1."""
        design = build_topology(kind, 8)
        x = measurement_matrix(design)
        n = x.shape[0]
        lap = x.T @ x / n
        np.testing.assert_allclose(lap, design.laplacian, atol=1e-12)
        q = x @ spectrum(design).pinv() @ x.T / n
        assert abs(np.trace(q) - 7.0) < 1e-8
        assert abs(np.linalg.norm(q, 2) - 1.0) < 1e-8
        assert abs(np.linalg.norm(q, "fro") ** 2 - 7.0) < 1e-8
        np.testing.assert_allclose(q @ q, q, atol=1e-8)


class TestRestrictedCauchySchwarz:
    def test_inequality_holds(self):
        """|<u, v>| <= |u|_{L+} |v|_L for u orthogonal to the ones vector."""
        design = build_topology("cycle", 9)
        summary = spectrum(design)
        lap = design.laplacian
        lap_pinv = summary.pinv()
        rng = np.random.default_rng(99)
        for _ in range(1000):
            u = rng.standard_normal(9)
            u -= u.mean()
            v = rng.standard_normal(9)
            lhs = abs(u @ v)
            rhs = math.sqrt(u @ lap_pinv @ u) * math.sqrt(v @ lap @ v)
            assert lhs <= rhs + 1e-9


class TestSerialization:
    def test_json_roundtrip(self):
        design = build_topology("barbell", 8)
        restored = design_from_json(design.to_json())
        assert restored == design
        payload = json.loads(design.to_json())
        assert set(payload) == {"d", "kind", "edges"}

    def test_spectral_csv(self):
        summary = spectrum(build_topology("complete", 4))
        lines = summary.to_csv().strip().split("\n")
        assert lines[0] == "index,eigenvalue"
        assert len(lines) == 5
        assert float(lines[1].split(",")[1]) == 0.0
