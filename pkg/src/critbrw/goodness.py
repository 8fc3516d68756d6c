"""Chi-square goodness of fit against a geometric law on {1, 2, ...}."""

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    p_value: float
    bins: int
    observed: np.ndarray
    expected: np.ndarray


def geometric_chisquare(values, p, min_expected=5.0):
    """Test integers >= 1 against P{k} = p (1 - p)^(k - 1).

    Bins are k = 1, 2, ... while the expected count stays above
    ``min_expected``; everything beyond is pooled into one tail bin.
    """
    values = np.asarray(values, dtype=np.int64)
    n = len(values)
    if n == 0:
        raise ValueError("no observations")
    if values.min() < 1:
        raise ValueError("geometric values must be >= 1")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    q = 1.0 - p
    # expected count of bin k is n p q^(k-1); keep k while that exceeds the floor
    if q == 0.0:
        K = 1
    else:
        K = max(1, int(np.floor(1 + np.log(min_expected / (n * p)) / np.log(q))))
    K = min(K, int(values.max()))
    ks = np.arange(1, K + 1)
    expected = n * p * q ** (ks - 1)
    tail = n * q ** K
    observed = np.bincount(np.minimum(values, K + 1), minlength=K + 2)[1:]
    expected = np.append(expected, tail)
    if expected[-1] < min_expected:
        # fold a thin tail into the last regular bin
        observed = np.append(observed[:-2], observed[-2:].sum())
        expected = np.append(expected[:-2], expected[-2:].sum())
    if len(expected) < 2:
        return ChiSquareResult(0.0, 1.0, len(expected), observed, expected)
    res = stats.chisquare(observed, expected * (observed.sum() / expected.sum()))
    return ChiSquareResult(float(res.statistic), float(res.pvalue), len(expected),
                           observed, expected)
