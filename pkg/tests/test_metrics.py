import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drc.errors import ContractError
from drc.metrics import chi2_sf, kruskal_wallis, l1_diff, png_size_proxy, ssim


def test_l1_identity_and_hand_value():
    a = np.array([0.0, 0.0])
    b = np.array([1.0, 3.0])
    assert l1_diff(a, a) == 0.0
    assert l1_diff(a, b) == 2.0


def test_l1_symmetry_and_triangle(rng):
    for _ in range(100):
        a, b, c = rng.random((3, 16))
        assert l1_diff(a, b) == pytest.approx(l1_diff(b, a), rel=1e-12)
        assert l1_diff(a, c) <= l1_diff(a, b) + l1_diff(b, c) + 1e-12


def test_l1_shape_mismatch():
    with pytest.raises(ContractError):
        l1_diff(np.zeros(3), np.zeros(4))


def test_ssim_identity(rng):
    a = rng.random((32, 32))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_inverted_low(rng):
    a = rng.random((32, 32))
    assert ssim(a, 1.0 - a) < 0.5


def test_ssim_symmetric(rng):
    a = rng.random((24, 24))
    b = rng.random((24, 24))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_monotone_under_noise(rng):
    a = np.clip(rng.random((48, 48)) * 0.6 + 0.2, 0, 1)
    vals = []
    for amp in (0.02, 0.05, 0.1):
        b = np.clip(a + rng.normal(0, amp, a.shape), 0, 1)
        vals.append(ssim(a, b))
    assert vals[0] > vals[1] > vals[2]


def test_ssim_matches_skimage(rng):
    # independent reference implementation with the same constants
    from skimage.metrics import structural_similarity

    a = rng.random((40, 40))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    ref = structural_similarity(a, b, win_size=11, gaussian_weights=True,
                                sigma=1.5, use_sample_covariance=False,
                                data_range=1.0)
    assert ssim(a, b) == pytest.approx(ref, abs=2e-3)


def test_ssim_rejects_small_images():
    with pytest.raises(ContractError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_png_proxy_orders_noise(rng):
    flat = np.full((64, 64, 3), 120, dtype=np.uint8)
    noisy = np.clip(flat.astype(int) + rng.integers(-8, 9, flat.shape), 0,
                    255).astype(np.uint8)
    assert png_size_proxy(flat) < png_size_proxy(noisy)
    assert png_size_proxy(noisy) == png_size_proxy(noisy)  # deterministic


def test_kruskal_wallis_hand_case():
    out = kruskal_wallis([[1, 2, 3], [4, 5, 6]])
    # R1=6, R2=15: H = 12/42 * (12 + 75) - 21 = 3.857...
    assert out["H"] == pytest.approx(3.857, abs=1e-3)
    assert out["p"] == pytest.approx(0.0495, abs=1e-3)


def test_kruskal_wallis_identical_groups():
    out = kruskal_wallis([[2.0, 2.0, 2.0], [2.0, 2.0]])
    assert out["H"] == 0.0
    assert out["p"] == 1.0


def test_kruskal_wallis_permutation_invariant(rng):
    a = list(rng.random(12))
    b = list(rng.random(9))
    base = kruskal_wallis([a, b])
    shuffled = kruskal_wallis([list(rng.permutation(a)), list(rng.permutation(b))])
    assert base["H"] == pytest.approx(shuffled["H"], rel=1e-12)


def test_kruskal_wallis_matches_scipy(rng):
    from scipy import stats

    a = rng.random(20)
    b = rng.random(15) + 0.2
    c = rng.random(10)
    mine = kruskal_wallis([a, b, c])
    ref = stats.kruskal(a, b, c)
    assert mine["H"] == pytest.approx(ref.statistic, rel=1e-10)
    assert mine["p"] == pytest.approx(ref.pvalue, rel=1e-10)


def test_chi2_tail_against_series_expansion():
    # independent oracle: regularized lower incomplete gamma by power series,
    # p = 1 - P(df/2, x/2)
    import math

    def series_p(a, x):
        term = 1.0 / a
        total = term
        for n in range(1, 500):
            term *= x / (a + n)
            total += term
            if term < 1e-18 * total:
                break
        return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

    for x, df in [(0.5, 1), (3.857, 1), (2.0, 2), (7.81, 3), (15.0, 6), (1e-3, 2)]:
        oracle = 1.0 - series_p(df / 2.0, x / 2.0)
        assert chi2_sf(x, df) == pytest.approx(oracle, abs=1e-6)


@given(st.lists(st.floats(0, 100), min_size=2, max_size=30),
       st.lists(st.floats(0, 100), min_size=2, max_size=30))
@settings(max_examples=100, deadline=None)
def test_kruskal_wallis_p_in_range(a, b):
    out = kruskal_wallis([a, b])
    assert 0.0 < out["p"] <= 1.0
    assert out["H"] >= -1e-9
