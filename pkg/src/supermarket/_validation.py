"""Small argument checks shared by the solver and simulator entry points."""

import math
from numbers import Integral, Real


def check_arrival_rate(lam, name="lambda_"):
    if not isinstance(lam, Real) or not math.isfinite(lam) or not 0.0 < lam < 1.0:
        raise ValueError(f"{name} must satisfy 0 < {name} < 1, got {lam!r}")
    return float(lam)


def check_positive(x, name):
    if not isinstance(x, Real) or not math.isfinite(x) or x <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {x!r}")
    return float(x)


def check_nonnegative(x, name):
    if not isinstance(x, Real) or not math.isfinite(x) or x < 0:
        raise ValueError(f"{name} must be a nonnegative finite number, got {x!r}")
    return float(x)


def check_int(x, name, minimum=None, maximum=None):
    if isinstance(x, bool) or not isinstance(x, Integral):
        raise ValueError(f"{name} must be an integer, got {x!r}")
    x = int(x)
    if minimum is not None and x < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {x}")
    if maximum is not None and x > maximum:
        raise ValueError(f"{name} must be <= {maximum}, got {x}")
    return x


def check_unit_interval(x, name, open_left=False, open_right=False):
    if not isinstance(x, Real) or not math.isfinite(x):
        raise ValueError(f"{name} must be a finite number, got {x!r}")
    lo_ok = x > 0.0 if open_left else x >= 0.0
    hi_ok = x < 1.0 if open_right else x <= 1.0
    if not (lo_ok and hi_ok):
        lo = "(" if open_left else "["
        hi = ")" if open_right else "]"
        raise ValueError(f"{name} must lie in {lo}0, 1{hi}, got {x!r}")
    return float(x)
