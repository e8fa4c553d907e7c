import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from bfkit.errors import DegenerateInputError, ParameterError
from bfkit.metrics import EXACT_MAX_N, cv, dice, intensity_match, psnr, ssim, wilcoxon_signed_rank
from bfkit.simulate import PhantomSpec, corrupt, legendre_bias, phantom
from oracles import naive_psnr, naive_ssim, sign_flip_pvalue

seeds = st.integers(0, 2**31)


# psnr

def test_psnr_identical_is_inf():
    a = np.random.default_rng(0).random((8, 8))
    assert psnr(a, a) == math.inf


def test_psnr_uniform_error():
    a = np.full((5, 5), 0.3)
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_psnr_matches_loop(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((20, 17)), rng.random((20, 17))
    assert abs(psnr(a, b, peak=2.0) - naive_psnr(a, b, 2.0)) <= 1e-9


def test_psnr_region_and_errors():
    a = np.zeros((4, 4))
    b = np.zeros((4, 4))
    b[0] = 1.0
    region = np.zeros((4, 4), bool)
    region[2:] = True
    assert psnr(a, b, region=region) == math.inf
    with pytest.raises(ParameterError):
        psnr(a, np.zeros((4, 5)))
    with pytest.raises(ParameterError):
        psnr(a, b, peak=0)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_psnr_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((9, 9)), rng.random((9, 9))
    assert psnr(a, b) == psnr(b, a)


# ssim

def test_ssim_identical():
    a = np.random.default_rng(1).random((24, 30))
    assert abs(ssim(a, a) - 1.0) <= 1e-12


def test_ssim_constant_closed_form():
    c, delta = 0.4, 0.15
    c1 = 0.01 ** 2
    expect = (2 * c * (c + delta) + c1) / (c * c + (c + delta) ** 2 + c1)
    assert ssim(np.full((16, 16), c), np.full((16, 16), c + delta)) == pytest.approx(expect, abs=1e-12)


def test_ssim_matches_windowed_oracle():
    rng = np.random.default_rng(2)
    a = rng.random((32, 32))
    b = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
    assert abs(ssim(a, b) - naive_ssim(a, b)) <= 1e-9


def test_ssim_too_small():
    with pytest.raises(ParameterError):
        ssim(np.zeros((10, 20)), np.zeros((10, 20)))


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_ssim_bounds(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((16, 16)), rng.random((16, 16))
    assert -1 <= ssim(a, b) <= 1
    assert abs(ssim(b, b) - 1) <= 1e-12


# cv

def test_cv_values():
    region = np.ones((1, 2), bool)
    assert cv(np.array([[1.0, 3.0]]), region) == pytest.approx(0.5, rel=1e-15)
    assert cv(np.full((3, 3), 2.0), np.ones((3, 3), bool)) == 0


def test_cv_degenerate():
    with pytest.raises(DegenerateInputError):
        cv(np.zeros((3, 3)), np.ones((3, 3), bool))
    with pytest.raises(DegenerateInputError):
        cv(np.ones((3, 3)), np.zeros((3, 3), bool))


def test_cv_bias_raises_tissue_cv():
    clean, labels = phantom(PhantomSpec(64, 64))
    I = corrupt(clean, legendre_bias(64, 64))
    for k in range(1, 5):
        assert cv(clean, labels[k]) == 0
        assert cv(I, labels[k]) > 0


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(1e-3, 1e3))
def test_cv_scale_invariant(seed, alpha):
    rng = np.random.default_rng(seed)
    x = rng.random((8, 8)) + 0.1
    region = rng.random((8, 8)) < 0.5
    region[0, 0] = True
    assert abs(cv(alpha * x, region) - cv(x, region)) <= 1e-12


# dice

def test_dice_values():
    a = np.zeros((4, 4), bool)
    b = np.zeros((4, 4), bool)
    assert dice(a, b) == 1.0
    a[0] = True
    assert dice(a, a) == 1.0
    b[1] = True
    assert dice(a, b) == 0.0
    b[0, :2] = True
    b[1, 2:] = False
    assert dice(a, b) == 0.5


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_dice_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((6, 6)) < 0.5, rng.random((6, 6)) < 0.5
    assert dice(a, b) == dice(b, a)


# intensity matching

def test_intensity_match_recovers_gain():
    ref = np.random.default_rng(0).random((6, 6))
    np.testing.assert_allclose(intensity_match(0.25 * ref, ref), ref, rtol=1e-14)


# wilcoxon

def test_wilcoxon_all_positive_n6():
    x = np.arange(6.0)
    out = wilcoxon_signed_rank(x, x + 0.5)
    assert out["W"] == 0 and out["p"] == pytest.approx(0.03125, abs=1e-15)


def test_wilcoxon_symmetric_pairs():
    x = np.zeros(8)
    y = np.array([1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0])
    assert wilcoxon_signed_rank(x, y)["p"] == 1.0


def test_wilcoxon_all_zero():
    assert wilcoxon_signed_rank([1, 2, 3], [1, 2, 3]) == {"W": 0.0, "p": 1.0}


def test_wilcoxon_n10_fixture():
    rng = np.random.default_rng(10)
    x = rng.normal(0, 1, 10)
    y = x + rng.normal(0.4, 1, 10)
    assert wilcoxon_signed_rank(x, y)["p"] == pytest.approx(sign_flip_pvalue(x, y), abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, EXACT_MAX_N))
def test_wilcoxon_exact_with_ties(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 4, n).astype(float)
    y = rng.integers(0, 4, n).astype(float)
    if np.all(x == y):
        y[0] += 1
    assert wilcoxon_signed_rank(x, y)["p"] == pytest.approx(sign_flip_pvalue(x, y), abs=1e-15)


@pytest.mark.parametrize("seed", range(4))
def test_wilcoxon_exact_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random(9), rng.random(9)
    ref = stats.wilcoxon(x, y, method="exact")
    out = wilcoxon_signed_rank(x, y)
    assert out["W"] == pytest.approx(ref.statistic)
    assert out["p"] == pytest.approx(ref.pvalue, rel=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_wilcoxon_normal_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    x = rng.random(30)
    y = x + rng.normal(0.05, 0.2, 30)
    ref = stats.wilcoxon(x, y, method="approx", correction=True)
    out = wilcoxon_signed_rank(x, y)
    assert out["W"] == pytest.approx(ref.statistic)
    assert out["p"] == pytest.approx(ref.pvalue, rel=1e-10)
