import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chctopo.diagram import PersistenceDiagram
from chctopo.landscape import (
    PersistenceLandscape,
    average,
    evaluate,
    format_landscape,
    landscape_from_diagram,
    linear_combination,
    lp_distance,
    parse_landscape,
    read_landscape,
    write_landscape,
)

from oracles import dense_lp, exactly_monotone, landscape_samples


def land(points, dim=0, trunc=1e9):
    return landscape_from_diagram(PersistenceDiagram(points, dim), trunc)


def layer_points(L, k):
    xs, ys = L.layers[k - 1]
    return list(zip(xs.tolist(), ys.tolist()))


diagram_points = st.lists(
    st.tuples(st.floats(0, 1), st.floats(0.001, 1)).map(lambda t: (t[0], t[0] + t[1])),
    max_size=12,
)
# multiples of 2**-20: hat peaks and crossings are exact in binary floating point
dyadic_points = st.lists(
    st.tuples(st.integers(0, 2**20), st.integers(1, 2**20)).map(
        lambda t: (t[0] / 2**20, (t[0] + t[1]) / 2**20)
    ),
    max_size=12,
)
# stored breakpoints of float diagrams carry one rounding each
ULP_SLACK = 8 * np.finfo(float).eps * 2.0


class TestConstruction:
    def test_single_hat(self):
        L = land([(2, 6)])
        assert len(L) == 1
        assert layer_points(L, 1) == [(2, 0), (4, 2), (6, 0)]

    def test_empty_is_zero(self):
        L = land([])
        assert len(L) == 0
        assert evaluate(L, 1, 0.3) == 0.0

    def test_nested_hats(self):
        L = land([(1, 4), (2, 3), (2, 3)])
        assert layer_points(L, 1) == [(1, 0), (2.5, 1.5), (4, 0)]
        assert layer_points(L, 2) == [(2, 0), (2.5, 0.5), (3, 0)]
        assert layer_points(L, 3) == [(2, 0), (2.5, 0.5), (3, 0)]
        assert evaluate(L, 4, 2.5) == 0.0

    def test_crossing_hats(self):
        L = land([(0, 4), (2, 6)])
        assert layer_points(L, 1) == [(0, 0), (2, 2), (3, 1), (4, 2), (6, 0)]
        assert layer_points(L, 2) == [(2, 0), (3, 1), (4, 0)]

    def test_disjoint_hats_share_a_layer(self):
        L = land([(0, 2), (3, 5)])
        assert len(L) == 1
        assert layer_points(L, 1) == [(0, 0), (1, 1), (2, 0), (3, 0), (4, 1), (5, 0)]

    def test_truncates_essential_points(self):
        L = landscape_from_diagram(PersistenceDiagram([(-1, math.inf)]), truncation=1.0)
        assert layer_points(L, 1) == [(-1, 0), (0, 1), (1, 0)]

    def test_truncation_below_birth(self):
        with pytest.raises(ValueError):
            landscape_from_diagram(PersistenceDiagram([(2, math.inf)]), truncation=1.0)

    @settings(max_examples=200, deadline=None)
    @given(diagram_points)
    def test_matches_kth_max_oracle(self, pts):
        L = land(pts)
        xs = np.linspace(-0.1, 2.1, 2001)
        for k in range(1, len(pts) + 2):
            ref = landscape_samples(pts, k, xs)
            assert np.max(np.abs(evaluate(L, k, xs) - ref)) <= 1e-12
        assert len(L) <= len(pts)

    @settings(max_examples=200, deadline=None)
    @given(dyadic_points)
    def test_exact_monotonicity_on_dyadic_diagrams(self, pts):
        assert exactly_monotone(land(pts).layers)

    @settings(max_examples=200, deadline=None)
    @given(diagram_points)
    def test_invariants(self, pts):
        L = land(pts)
        assert exactly_monotone(L.layers, ULP_SLACK)
        for lx, ly in L.layers:
            assert np.all(np.diff(lx) > 0) and np.all(ly >= 0)
            assert np.all(np.abs(np.diff(ly)) <= np.diff(lx) + ULP_SLACK)
        peak = max(((d - b) / 2 for b, d in pts), default=0.0)
        assert L.max_height() == pytest.approx(peak, abs=1e-15)


class TestEvaluate:
    L = land([(2, 6)])

    def test_peak(self):
        assert evaluate(self.L, 1, 4) == 2.0

    def test_outside_support(self):
        assert evaluate(self.L, 1, 7) == 0.0

    def test_beyond_layer_count(self):
        assert evaluate(self.L, 2, 4) == 0.0

    def test_layer_index_from_one(self):
        with pytest.raises(ValueError):
            evaluate(self.L, 0, 4)


class TestCombination:
    def test_identity(self):
        L = land([(0, 2), (1, 3)])
        assert linear_combination([1.0], [L]).allclose(L, atol=0)

    def test_half_plus_half(self):
        L = land([(0, 2), (1, 3)])
        assert linear_combination([0.5, 0.5], [L, L]).allclose(L, atol=0)

    def test_disjoint_half_hats(self):
        C = linear_combination([0.5, 0.5], [land([(0, 2)]), land([(2, 4)])])
        assert layer_points(C, 1) == [(0, 0), (1, 0.5), (2, 0), (3, 0.5), (4, 0)]
        xs = np.arange(0, 4.0005, 1e-3)
        ref = 0.5 * landscape_samples([(0, 2)], 1, xs) + 0.5 * landscape_samples([(2, 4)], 1, xs)
        assert np.max(np.abs(evaluate(C, 1, xs) - ref)) <= 1e-9

    def test_empty_list(self):
        with pytest.raises(ValueError):
            linear_combination([], [])
        with pytest.raises(ValueError):
            average([])

    def test_mixed_dims(self):
        with pytest.raises(ValueError):
            average([land([(0, 1)], 0), land([(0, 1)], 1)])

    def test_average_of_two_hats(self):
        A = average([land([(0, 2)]), land([(0, 4)])])
        # (3, 0.5) lies on the segment from (2, 1) to (4, 0), canonical storage drops it
        assert layer_points(A, 1) == [(0, 0), (1, 1), (2, 1), (4, 0)]
        assert [evaluate(A, 1, x) for x in (0, 1, 2, 3, 4)] == [0, 1, 1, 0.5, 0]
        xs = np.arange(0, 4.0005, 1e-3)
        ref = (landscape_samples([(0, 2)], 1, xs) + landscape_samples([(0, 4)], 1, xs)) / 2
        assert np.max(np.abs(evaluate(A, 1, xs) - ref)) <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(diagram_points, st.integers(1, 5))
    def test_average_of_identical_is_exact(self, pts, n):
        L = land(pts)
        A = average([L] * n)
        assert len(A) == len(L)
        for (ax, ay), (lx, ly) in zip(A.layers, L.layers):
            assert np.array_equal(ax, lx) and np.array_equal(ay, ly)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(dyadic_points, min_size=1, max_size=4))
    def test_average_keeps_monotonicity(self, diagrams):
        A = average([land(p) for p in diagrams])
        assert exactly_monotone(A.layers, ULP_SLACK)
        xs = np.linspace(-0.1, 2.1, 801)
        ref = np.mean([landscape_samples(p, 1, xs) for p in diagrams], axis=0)
        assert np.max(np.abs(evaluate(A, 1, xs) - ref)) <= 1e-12


class TestDistance:
    def test_self(self):
        L = land([(0, 2), (1, 3)])
        for p in (1, 2, 3.5, math.inf):
            assert lp_distance(L, L, p) == 0.0

    def test_triangle_against_zero(self):
        L, Z = land([(0, 2)]), PersistenceLandscape()
        assert lp_distance(L, Z, 1) == 1.0
        assert lp_distance(L, Z, math.inf) == 1.0
        assert lp_distance(L, Z, 2) == pytest.approx(math.sqrt(2 / 3), rel=1e-15)

    def test_p_below_one(self):
        with pytest.raises(ValueError):
            lp_distance(land([(0, 1)]), land([(0, 1)]), 0.9)

    def test_sign_change_inside_segment(self):
        # difference goes from +1 to -1 on [0, 2]: two triangles of area 1/2
        A = PersistenceLandscape([([0, 2], [1, 0])])
        B = PersistenceLandscape([([0, 2], [0, 1])])
        assert lp_distance(A, B, 1) == pytest.approx(1.0, rel=1e-15)
        assert lp_distance(A, B, 3) == pytest.approx(0.5 ** (1 / 3), rel=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(diagram_points, diagram_points, st.sampled_from([1, 2]))
    def test_dense_sampling_oracle(self, P, Q, p):
        exact = lp_distance(land(P), land(Q), p)
        ref = dense_lp(P, Q, p, -0.1, 2.1)
        assert exact == pytest.approx(ref, rel=1e-6, abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(diagram_points, diagram_points, st.floats(1.0, 6.0))
    def test_general_p_oracle(self, P, Q, p):
        exact = lp_distance(land(P), land(Q), p)
        ref = dense_lp(P, Q, p, -0.1, 2.1)
        assert exact == pytest.approx(ref, rel=1e-5, abs=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(diagram_points, diagram_points)
    def test_sup_norm_at_breakpoints(self, P, Q):
        assert lp_distance(land(P), land(Q), math.inf) == pytest.approx(
            dense_lp(P, Q, math.inf, -0.1, 2.1), abs=1e-4
        )


class TestTextFormat:
    def test_round_trip(self, tmp_path):
        L = land([(0.1, 0.7), (0.2, 0.5), (0.3, 1 / 3)], dim=1)
        write_landscape(L, tmp_path / "l.txt")
        back = read_landscape(tmp_path / "l.txt")
        assert back.dim == 1 and lp_distance(L, back, math.inf) == 0.0
        head = (tmp_path / "l.txt").read_text().splitlines()[0]
        assert head == f"landscape dim 1 layers {len(L)}"

    def test_zero_landscape(self):
        L, used = parse_landscape(format_landscape(PersistenceLandscape(dim=0)).splitlines())
        assert len(L) == 0 and used == 1

    @pytest.mark.parametrize("text", ["landscape dim 0 layers 2\n0 0 1 1\n", "landscape dim 0\n",
                                      "landscape dim 0 layers 1\n0 0 1\n"])
    def test_malformed(self, text):
        with pytest.raises(ValueError):
            parse_landscape(text.rstrip("\n").split("\n"))
