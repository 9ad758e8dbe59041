import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapmetrics.errors import UndefinedCorrelationError
from mapmetrics.stats import kendall, pearson, rankdata, spearman


def kendall_oracle(x, y):
    """O(n^2) tau-b from concordant/discordant pair counts."""
    n = len(x)
    conc = disc = tx = ty = 0
    for i, j in itertools.combinations(range(n), 2):
        dx, dy = np.sign(x[i] - x[j]), np.sign(y[i] - y[j])
        if dx == 0 and dy == 0:
            continue
        if dx == 0:
            tx += 1
        elif dy == 0:
            ty += 1
        elif dx == dy:
            conc += 1
        else:
            disc += 1
    return (conc - disc) / np.sqrt((conc + disc + tx) * (conc + disc + ty))


def pearson_oracle(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    cov = np.sum((x - x.mean()) * (y - y.mean())) / (len(x) - 1)
    return cov / (np.std(x, ddof=1) * np.std(y, ddof=1))


def test_pearson_examples():
    x = np.arange(10.0)
    assert pearson(x, 2 * x + 1) == pytest.approx(1.0, abs=1e-15)
    assert pearson(x, -x) == pytest.approx(-1.0, abs=1e-15)


def test_pearson_oracle():
    rng = np.random.default_rng(3)
    x = rng.normal(size=100)
    y = 0.5 * x + rng.normal(size=100)
    assert pearson(x, y) == pytest.approx(pearson_oracle(x, y), abs=1e-12)


def test_spearman_examples():
    x = np.linspace(-2, 3, 30)
    assert spearman(x, x**3) == 1.0
    assert spearman(x, -x) == -1.0
    # hand ranks: x -> (1.5, 1.5, 3), y -> (1, 2, 3)
    assert spearman([1, 1, 2], [1, 2, 3]) == pytest.approx(pearson([1.5, 1.5, 3], [1, 2, 3]), abs=1e-15)


def test_rankdata_mid_ranks():
    assert rankdata([10, 20, 20, 5]).tolist() == [2.0, 3.5, 3.5, 1.0]


def test_kendall_examples():
    x = np.arange(12.0)
    assert kendall(x, x * 2) == 1.0
    assert kendall(x, -x) == -1.0
    with pytest.raises(UndefinedCorrelationError):
        kendall(x, np.ones(12))


def test_kendall_matches_quadratic_oracle():
    rng = np.random.default_rng(4)
    for trial in range(30):
        n = 200 if trial < 10 else int(rng.integers(3, 60))
        x = rng.normal(size=n)
        y = x + rng.normal(size=n)
        if trial % 3 == 1:
            x, y = np.round(x), np.round(y * 2)  # heavy ties
        assert kendall(x, y) == kendall_oracle(x, y) or \
            kendall(x, y) == pytest.approx(kendall_oracle(x, y), abs=1e-15)


def test_kendall_exact_on_200_pairs():
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=200), rng.normal(size=200)
    assert kendall(x, y) == pytest.approx(kendall_oracle(x, y), abs=1e-15)


def test_zero_variance_errors():
    with pytest.raises(UndefinedCorrelationError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedCorrelationError):
        spearman([1, 2, 3], [4, 4, 4])


def test_input_validation():
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2])
    with pytest.raises(ValueError):
        pearson([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        kendall([1, 2, np.nan], [1, 2, 3])


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 80), st.integers(0, 2**32 - 1))
def test_spearman_is_pearson_of_ranks(n, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.permutation(n).astype(float), rng.normal(size=n)
    assert spearman(x, y) == pearson(rankdata(x), rankdata(y))


@settings(max_examples=100, deadline=None)
@given(st.integers(5, 60), st.integers(0, 2**32 - 1), st.floats(0.1, 10), st.floats(-5, 5))
def test_coefficients_invariant_to_increasing_transforms(n, seed, scale, shift):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    y = x + rng.normal(size=n)
    assert pearson(scale * x + shift, y) == pytest.approx(pearson(x, y), abs=1e-12)
    assert spearman(np.exp(x), y) == pytest.approx(spearman(x, y), abs=1e-12)
    assert kendall(np.exp(x), y**3) == pytest.approx(kendall(x, y), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=3, max_size=40), st.integers(0, 2**32 - 1))
def test_coefficients_bounded(xs, seed):
    rng = np.random.default_rng(seed)
    x = np.array(xs, float)
    y = rng.integers(-3, 3, size=len(x)).astype(float)
    for f in (pearson, spearman, kendall):
        try:
            v = f(x, y)
        except UndefinedCorrelationError:
            continue
        assert -1.0 <= v <= 1.0
