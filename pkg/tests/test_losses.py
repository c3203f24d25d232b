import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvlearn.losses import (
    CostPair,
    LossKind,
    batch_loss,
    cost,
    cost_via_relu,
    loss_grad,
    newsvendor_cost,
    quadratic_cost,
)

C = CostPair(cp=2.0, ch=1.5)


def central_diff(f, y, h=1e-5):
    g = np.zeros_like(y)
    for k in range(y.size):
        e = np.zeros_like(y)
        e[k] = h
        g[k] = (f(y + e) - f(y - e)) / (2 * h)
    return g


class TestCostPair:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            CostPair(0.0, 1.0)
        with pytest.raises(ValueError):
            CostPair(1.0, -1.0)

    def test_from_ratio(self):
        assert CostPair.from_ratio(4, 1.5) == CostPair(6.0, 1.5)

    def test_fractile(self):
        assert CostPair(3, 1).critical_fractile == 0.75


def test_loss_kind_parse():
    assert LossKind.parse("Original") is LossKind.ORIGINAL
    assert LossKind.parse(LossKind.QUADRATIC) is LossKind.QUADRATIC
    with pytest.raises(ValueError, match="bogus"):
        LossKind.parse("bogus")


@pytest.mark.parametrize(
    "d, y, expected",
    [([10], [10], 0.0), ([10], [7], 6.0), ([10, 5], [7, 6], 7.5)],
)
def test_newsvendor_cost(d, y, expected):
    assert newsvendor_cost(d, y, C) == expected


@pytest.mark.parametrize(
    "d, y, expected",
    [([10], [10], 0.0), ([10], [7], 36.0), ([10, 5], [7, 6], 38.25)],
)
def test_quadratic_cost(d, y, expected):
    assert quadratic_cost(d, y, C) == expected


def test_length_mismatch():
    for fn in (newsvendor_cost, quadratic_cost, cost_via_relu):
        with pytest.raises(ValueError, match="mismatch"):
            fn([1, 2], [1], C)
    with pytest.raises(ValueError):
        loss_grad([1, 2], [1], C, LossKind.ORIGINAL)


def test_shortage_is_charged_cp():
    # cp=5 on shortage, ch=1 on overage
    c = CostPair(5.0, 1.0)
    assert newsvendor_cost([10], [8], c) == 10.0
    assert newsvendor_cost([8], [10], c) == 2.0


class TestLossGrad:
    def test_original_shortage(self):
        np.testing.assert_array_equal(loss_grad([10], [7], C, "original"), [-2.0])

    def test_original_overage(self):
        np.testing.assert_array_equal(loss_grad([10], [12], C, "original"), [1.5])

    def test_original_tie_is_zero(self):
        np.testing.assert_array_equal(loss_grad([10], [10], C, "original"), [0.0])

    def test_quadratic(self):
        # frozen from a central difference of quadratic_cost at h=1e-5
        np.testing.assert_allclose(loss_grad([10], [7], C, "quadratic"), [-24.0], rtol=1e-9)

    @pytest.mark.parametrize("kind", list(LossKind))
    def test_finite_differences(self, kind):
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 200:
            d = rng.uniform(0, 30, size=3)
            y = rng.uniform(0, 30, size=3)
            if np.min(np.abs(d - y)) <= 1e-3:
                continue
            c = CostPair(*rng.uniform(0.5, 10, size=2))
            fd = central_diff(lambda v: cost(d, v, c, kind), y)
            an = loss_grad(d, y, c, kind)
            assert np.linalg.norm(an - fd) <= 1e-5 * np.linalg.norm(fd)
            checked += 1


def test_relu_identity_random():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        m = rng.integers(1, 6)
        d, y = rng.uniform(-50, 50, size=(2, m))
        c = CostPair(*rng.uniform(0.1, 20, size=2))
        assert abs(cost_via_relu(d, y, c) - newsvendor_cost(d, y, c)) <= 1e-12 * max(1.0, newsvendor_cost(d, y, c))


@pytest.mark.parametrize("d, y, expected", [([10], [7], 6.0), ([5], [9], 6.0)])
def test_relu_examples(d, y, expected):
    assert cost_via_relu(d, y, C) == expected


vectors = st.lists(st.floats(-100, 100), min_size=1, max_size=5)


@given(vectors, st.data(), st.floats(0.1, 10), st.floats(0.1, 10))
@settings(max_examples=200, deadline=None)
def test_subgradient_inequality(d, data, cp, ch):
    d = np.array(d)
    y = np.array(data.draw(st.lists(st.floats(-100, 100), min_size=len(d), max_size=len(d))))
    y2 = np.array(data.draw(st.lists(st.floats(-100, 100), min_size=len(d), max_size=len(d))))
    c = CostPair(cp, ch)
    g = loss_grad(d, y, c, LossKind.ORIGINAL)
    assert newsvendor_cost(d, y2, c) >= newsvendor_cost(d, y, c) + g @ (y2 - y) - 1e-9


@given(vectors, st.data(), st.floats(0.01, 50))
@settings(max_examples=100, deadline=None)
def test_homogeneity(d, data, k):
    d = np.array(d)
    y = np.array(data.draw(st.lists(st.floats(-100, 100), min_size=len(d), max_size=len(d))))
    assert newsvendor_cost(k * d, k * y, C) == pytest.approx(k * newsvendor_cost(d, y, C), rel=1e-9, abs=1e-9)
    assert quadratic_cost(k * d, k * y, C) == pytest.approx(k**2 * quadratic_cost(d, y, C), rel=1e-9, abs=1e-9)


def test_batch_loss_is_row_mean():
    D = np.array([[10.0], [5.0]])
    Y = np.array([[7.0], [6.0]])
    value, grad = batch_loss(D, Y, C, "original")
    assert value == pytest.approx((6.0 + 1.5) / 2)
    np.testing.assert_allclose(grad, [[-1.0], [0.75]])
