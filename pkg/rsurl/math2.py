import numpy as np


def wrap_angle(x):
    """
    Wrap to (-pi, pi].
    The upper bound is included: wrap_angle(-pi) == pi.
    Values already inside the interval are returned unchanged (bitwise).
    """
    if np.ndim(x) == 0:
        x = float(x)
        if -np.pi < x <= np.pi:
            return x
        y = float(np.pi - np.mod(np.pi - x, 2 * np.pi))
        return np.pi if y <= -np.pi else y

    x = np.asarray(x, dtype=float)
    inside = (x > -np.pi) & (x <= np.pi)
    y = np.pi - np.mod(np.pi - x, 2 * np.pi)
    y = np.where(y <= -np.pi, np.pi, y)
    return np.where(inside, x, y)


def normalize11(x, low, high):
    """
    Normalize [low, high] to [-1, 1]
    low and high should either be scalars or have the same dimension as the last dimension of x
    """
    return 2 * (x - low) / (high - low) - 1


def denormalize11(x, low, high):
    """
    Denormalize [-1, 1] to [low, high]
    low and high should either be scalars or have the same dimension as the last dimension of x
    """
    return (x + 1) * (high - low)/2 + low


def numeric_derivative(fun, x, eps=1e-5):
    """
    Central difference derivative of the scalar function fun at x (any shape).
    The result has the shape of x.
    """
    x = np.array(x, dtype=float)
    derv = np.empty_like(x)
    for idx in np.ndindex(*x.shape):
        x0 = x[idx]
        x[idx] = x0 + eps
        f_plus = fun(x)
        x[idx] = x0 - eps
        f_minus = fun(x)
        x[idx] = x0
        derv[idx] = (f_plus - f_minus) / (2 * eps)
    return derv


def rolling_mean_brute(x, window):
    """Trailing mean over the last `window` samples, shorter windows at the start."""
    x = np.asarray(x, dtype=float)
    res = np.empty_like(x)
    for i in range(len(x)):
        res[i] = x[max(0, i - window + 1):i + 1].mean()
    return res


def ratio_or_nan(a, b):
    if b <= 0 or not np.isfinite(b):
        return np.nan
    return a / b
