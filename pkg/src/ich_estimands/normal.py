"""Standard normal helpers."""

from statistics import NormalDist

import numpy as np
from scipy.special import ndtr

_STD = NormalDist()


def norm_cdf(x):
    """Phi(x), vectorised; erfc-based, accurate to double precision."""
    out = ndtr(np.asarray(x, dtype=float))
    return out if np.ndim(out) else float(out)


def norm_ppf(p: float) -> float:
    """Inverse of Phi (Wichura's AS241 rational approximation)."""
    return _STD.inv_cdf(p)


def two_sided_p(z: float) -> float:
    return float(2.0 * ndtr(-abs(z)))
