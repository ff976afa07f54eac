import math

import numpy as np
import pytest
from scipy import special
from scipy import stats as sps

from ladderemo.stats import betainc, t_sf, t_test_one_tailed, welch_t


@pytest.mark.parametrize("a,b,x", [
    (0.5, 0.5, 0.3), (2.0, 0.5, 0.9), (9.0, 0.5, 0.999), (0.5, 0.5, 1e-6),
    (50.0, 0.5, 0.97), (3.3, 7.1, 0.4), (1.0, 1.0, 0.25),
])
def test_betainc_against_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("t,df", [(0.0, 3.0), (1.2247, 4.0), (-2.0, 7.5), (5.0, 1.0), (0.3, 120.0)])
def test_t_tail_against_scipy(t, df):
    assert t_sf(t, df) == pytest.approx(sps.t.sf(t, df), rel=1e-10, abs=1e-14)


def test_hand_example():
    t, df = welch_t([1, 2, 3], [0, 1, 2])
    assert t == pytest.approx(math.sqrt(1.5), rel=1e-12)
    assert df == pytest.approx(4.0, rel=1e-12)
    p = t_test_one_tailed([1, 2, 3], [0, 1, 2])
    assert p == pytest.approx(0.1438, abs=5e-4)
    assert p == pytest.approx(sps.t.sf(math.sqrt(1.5), 4), rel=1e-10)


def test_identical_samples():
    assert t_test_one_tailed([0.3, 0.5, 0.4], [0.3, 0.5, 0.4]) == 0.5


def test_constant_samples():
    assert t_test_one_tailed([1, 1, 1], [1, 1, 1]) == 0.5
    assert t_test_one_tailed([2, 2], [1, 1]) == 0.0
    assert t_test_one_tailed([1, 1], [2, 2]) == 1.0


def test_against_scipy_welch(rng):
    for _ in range(25):
        a = rng.normal(0.75, 0.01, 10)
        b = rng.normal(0.74, 0.02, rng.integers(2, 12))
        ref = sps.ttest_ind(a, b, equal_var=False, alternative="greater").pvalue
        assert t_test_one_tailed(a, b) == pytest.approx(ref, rel=1e-9)


def test_direction():
    strong = np.array([0.80, 0.81, 0.805, 0.802])
    weak = np.array([0.70, 0.71, 0.705, 0.69])
    assert t_test_one_tailed(strong, weak) < 0.05
    assert t_test_one_tailed(weak, strong) > 0.95
