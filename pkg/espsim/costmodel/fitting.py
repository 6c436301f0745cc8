"""Provide least-squares fitting of prefill cost coefficients."""

# Authors: The espsim developers
# License: AGPL

from typing import Sequence

import numpy as np
from scipy.optimize import nnls

from ..utils import logger, raise_error
from ..utils.exceptions import UnderdeterminedError
from .coefficients import CostCoefficients, ProfileSample


__all__ = ["design_matrix", "fit_coefficients", "evaluate_fit"]


def design_matrix(samples: Sequence[ProfileSample]) -> np.ndarray:
    """Build the ``[1, sum(l), sum(l**2)]`` design matrix.

    Parameters
    ----------
    samples : sequence of ProfileSample
        The profiled iterations.

    Returns
    -------
    numpy.ndarray
        Array of shape ``(len(samples), 3)``.

    """
    rows = []
    for sample in samples:
        lengths = np.asarray(sample.lengths, dtype=np.float64)
        rows.append([1.0, lengths.sum(), np.square(lengths).sum()])
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def fit_coefficients(samples: Sequence[ProfileSample]) -> CostCoefficients:
    """Fit prefill coefficients by non-negative least squares.

    Columns are scaled to unit norm before solving. Coefficients that
    would be negative are held at zero while the others are refit (the
    active-set method of :func:`scipy.optimize.nnls`).

    Parameters
    ----------
    samples : sequence of ProfileSample
        Profiled iterations of one strategy.

    Returns
    -------
    CostCoefficients
        The fitted coefficients.

    Raises
    ------
    UnderdeterminedError
        If there are fewer than 3 samples or the design matrix is rank
        deficient.

    """
    if len(samples) < 3:
        raise_error(
            f"Need at least 3 profile samples, got {len(samples)}",
            klass=UnderdeterminedError,
        )
    strategies = {s.strategy for s in samples}
    if len(strategies) > 1:
        raise_error(
            f"Samples mix strategies {sorted(strategies)}; fit them apart"
        )
    X = design_matrix(samples)
    y = np.array([s.measured_time for s in samples], dtype=np.float64)
    scale = np.linalg.norm(X, axis=0)
    Xn = X / scale
    rank = np.linalg.matrix_rank(Xn)
    if rank < 3:
        raise_error(
            f"Profile samples are rank deficient (rank {rank} < 3)",
            klass=UnderdeterminedError,
        )
    solution, residual = nnls(Xn, y)
    alpha, beta, gamma = (solution / scale).tolist()
    logger.debug(
        f"Fitted {next(iter(strategies)).label}: alpha={alpha}, "
        f"beta={beta}, gamma={gamma} (residual {residual})"
    )
    return CostCoefficients(alpha=alpha, beta=beta, gamma=gamma)


def evaluate_fit(
    coefficients: CostCoefficients, samples: Sequence[ProfileSample]
) -> np.ndarray:
    """Compute relative prediction errors on (held-out) samples.

    Parameters
    ----------
    coefficients : CostCoefficients
        The fitted model.
    samples : sequence of ProfileSample
        Samples to predict.

    Returns
    -------
    numpy.ndarray
        ``|predicted - measured| / measured`` per sample.

    """
    predicted = design_matrix(samples) @ np.array(coefficients.as_tuple())
    measured = np.array([s.measured_time for s in samples], dtype=np.float64)
    return np.abs(predicted - measured) / measured
