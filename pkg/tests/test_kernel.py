import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bfkit.errors import ParameterError
from bfkit.kernel import MaskedFilter, build_kernel, masked_filter


def naive_weights(mask, k):
    """Dense w(r, s) matrix built pixel by pixel."""
    H, W = mask.shape
    h = k.d // 2
    w = np.zeros((H * W, H * W))
    for r0 in range(H):
        for r1 in range(W):
            if not mask[r0, r1]:
                continue
            row = np.zeros(H * W)
            for s0 in range(H):
                for s1 in range(W):
                    dy, dx = s0 - r0, s1 - r1
                    if mask[s0, s1] and abs(dy) <= h and abs(dx) <= h:
                        row[s0 * W + s1] = math.exp(-(dy * dy + dx * dx) / (2 * k.sigma ** 2))
            w[r0 * W + r1] = row / row.sum()
    return w


def test_kernel_d3_values():
    k = build_kernel(3, 1.0)
    e = math.exp
    np.testing.assert_allclose(k.weights, [[e(-1), e(-0.5), e(-1)],
                                           [e(-0.5), 1, e(-0.5)],
                                           [e(-1), e(-0.5), e(-1)]], rtol=0, atol=1e-15)


def test_kernel_default_all_offsets():
    k = build_kernel()
    assert k.weights.shape == (17, 17)
    for i in range(17):
        for j in range(17):
            expect = math.exp(-((i - 8) ** 2 + (j - 8) ** 2) / 32.0)
            assert abs(k.weights[i, j] - expect) <= 1e-15
    assert k.weights[0, 0] == pytest.approx(math.exp(-4), abs=1e-15)
    assert k.weights[8, 8] == 1.0 == k.weights.max()


def test_kernel_symmetries():
    w = build_kernel(9, 2.5).weights
    np.testing.assert_array_equal(w, w[::-1])
    np.testing.assert_array_equal(w, w[:, ::-1])
    np.testing.assert_array_equal(w, np.rot90(w))


@pytest.mark.parametrize("d,sigma", [(19, 4), (4, 2), (1, 1), (5, 0), (5, -1)])
def test_kernel_parameter_errors(d, sigma):
    with pytest.raises(ParameterError):
        build_kernel(d, sigma)


def test_constant_field_preserved():
    mask = np.ones((10, 12), bool)
    out = masked_filter(np.full((10, 12), 3.5), mask, build_kernel(5, 1.5))
    np.testing.assert_allclose(out, 3.5, rtol=1e-14)


def test_single_pixel_mask():
    mask = np.zeros((7, 7), bool)
    mask[3, 4] = True
    field = np.random.default_rng(0).random((7, 7))
    out = masked_filter(field, mask, build_kernel(5, 2))
    assert out[3, 4] == pytest.approx(field[3, 4], rel=1e-15)
    out[3, 4] = 0
    assert not out.any()


def test_l_shaped_mask_matches_double_loop():
    mask = np.zeros((5, 5), bool)
    mask[:, 0] = True
    mask[4, :] = True
    field = np.arange(25, dtype=float).reshape(5, 5) / 7.0
    k = build_kernel(3, 1.0)
    expect = (naive_weights(mask, k) @ field.ravel()).reshape(5, 5)
    np.testing.assert_allclose(masked_filter(field, mask, k), expect, rtol=1e-12, atol=1e-15)


def test_dimension_mismatch():
    with pytest.raises(ParameterError):
        masked_filter(np.zeros((3, 3)), np.ones((3, 4), bool), build_kernel(3, 1))


def test_adjoint_matches_transpose():
    rng = np.random.default_rng(1)
    mask = rng.random((9, 8)) < 0.6
    k = build_kernel(5, 1.2)
    op = MaskedFilter(mask, k)
    f = rng.random((9, 8))
    expect = (naive_weights(mask, k).T @ f.ravel()).reshape(9, 8)
    np.testing.assert_allclose(op.adjoint(f), expect, rtol=1e-12, atol=1e-15)


def test_matches_naive_on_32x32():
    rng = np.random.default_rng(2)
    mask = rng.random((32, 32)) < 0.7
    field = rng.random((32, 32))
    k = build_kernel(5, 1.5)
    expect = (naive_weights(mask, k) @ field.ravel()).reshape(32, 32)
    got = masked_filter(field, mask, k)
    np.testing.assert_allclose(got, expect, rtol=1e-12, atol=1e-15)


masks = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s))


@settings(max_examples=40, deadline=None)
@given(masks, st.sampled_from([0.05, 0.3, 0.7, 1.0]), st.sampled_from([(3, 1.0), (5, 1.5), (9, 2.0)]))
def test_row_stochastic_and_range(rng, density, ds):
    mask = rng.random((12, 15)) < density
    mask[0, 0] = True
    k = build_kernel(*ds)
    op = MaskedFilter(mask, k)
    np.testing.assert_allclose(op.row_sums()[mask], 1.0, atol=1e-10)
    field = rng.random(mask.shape)
    out = op(field)
    h = k.d // 2
    for r0, r1 in zip(*np.nonzero(mask)):
        win = (slice(max(r0 - h, 0), r0 + h + 1), slice(max(r1 - h, 0), r1 + h + 1))
        vals = field[win][mask[win]]
        assert vals.min() - 1e-12 <= out[r0, r1] <= vals.max() + 1e-12
    assert not out[~mask].any()


@settings(max_examples=30, deadline=None)
@given(masks)
def test_locality(rng):
    mask = rng.random((20, 20)) < 0.8
    k = build_kernel(5, 1.5)
    field = rng.random((20, 20))
    s = tuple(rng.integers(0, 20, 2))
    bumped = field.copy()
    bumped[s] += 10.0
    diff = masked_filter(bumped, mask, k) != masked_filter(field, mask, k)
    rows, cols = np.nonzero(diff)
    assert np.all(np.abs(rows - s[0]) < k.d) and np.all(np.abs(cols - s[1]) < k.d)
