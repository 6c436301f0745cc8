"""Provide tests for least-squares coefficient fitting."""

# Authors: The espsim developers
# License: AGPL

from typing import List

import numpy as np
import pytest
from numpy.testing import assert_allclose

from espsim.costmodel import (
    CostCoefficients,
    ProfileSample,
    Strategy,
    evaluate_fit,
    fit_coefficients,
)
from espsim.utils.exceptions import UnderdeterminedError


def _samples(
    coefficients: CostCoefficients,
    n: int,
    seed: int,
    noise: float = 0.0,
) -> List[ProfileSample]:
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n):
        size = int(rng.integers(1, 5))
        lengths = tuple(int(x) for x in rng.integers(100, 100_000, size=size))
        measured = coefficients.predict(lengths)
        if noise > 0:
            measured *= 1.0 + rng.uniform(-noise, noise)
        samples.append(ProfileSample(Strategy(4), lengths, measured))
    return samples


def test_fit_noiseless() -> None:
    """Test exact recovery from noiseless samples."""
    true = CostCoefficients(2.0, 0.05, 1e-7)
    fitted = fit_coefficients(_samples(true, 20, seed=1))
    assert_allclose(fitted.as_tuple(), true.as_tuple(), rtol=1e-6)


def test_fit_noisy_held_out() -> None:
    """Test held-out deviation under 5% multiplicative noise."""
    true = CostCoefficients(20.0, 0.0195, 1.15e-7)
    train = _samples(true, 50, seed=2, noise=0.05)
    test = _samples(true, 50, seed=3)
    fitted = fit_coefficients(train)
    assert evaluate_fit(fitted, test).max() < 0.10


def test_fit_clamps_negative() -> None:
    """Test that a coefficient pushed negative is held at zero."""
    true = CostCoefficients(0.0, 0.05, 1e-7)
    samples = _samples(true, 20, seed=4)
    # Shift every measurement down so the intercept wants to go negative
    shifted = [
        ProfileSample(s.strategy, s.lengths, s.measured_time - 0.5)
        for s in samples
        if s.measured_time > 1.0
    ]
    fitted = fit_coefficients(shifted)
    assert fitted.alpha == 0.0
    assert fitted.beta > 0 and fitted.gamma > 0


def test_fit_underdetermined() -> None:
    """Test rank-deficient sample sets."""
    sample = ProfileSample(Strategy(1), (1000,), 12.0)
    with pytest.raises(UnderdeterminedError, match="at least 3"):
        fit_coefficients([sample, sample])
    with pytest.raises(UnderdeterminedError, match="rank deficient"):
        fit_coefficients([sample, sample, sample])


def test_fit_mixed_strategies() -> None:
    """Test that samples of different strategies are refused."""
    samples = [
        ProfileSample(Strategy(1), (10,), 1.0),
        ProfileSample(Strategy(2), (20,), 2.0),
        ProfileSample(Strategy(1), (30, 4), 3.0),
    ]
    with pytest.raises(ValueError, match="mix strategies"):
        fit_coefficients(samples)


def test_profile_sample_validation() -> None:
    """Test profile sample validation."""
    with pytest.raises(ValueError, match="positive"):
        ProfileSample(Strategy(1), (10,), 0.0)
    with pytest.raises(ValueError, match="at least one"):
        ProfileSample(Strategy(1), (), 1.0)
