import numpy as np

from rsurl import math2
from rsurl.printing import print2


def check_gradients(fun, params, h=1e-5, rtol=1e-4, atol=1e-6, verbose=0):
    """
    Compare the reverse-mode gradients of the scalar loss fun() with respect to each Tensor in params
    against central finite differences.
    fun is re-evaluated with perturbed parameter data, so it has to rebuild its graph on every call.
    Returns True if every entry satisfies |analytic - numeric| <= atol + rtol * max(|analytic|, |numeric|).
    """
    for p in params:
        p.zero_grad()
    fun().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    ok = True
    for p, g in zip(params, analytic):
        x0 = p.data.copy()

        def f(x):
            p.data[...] = x
            return fun().item()

        numeric = math2.numeric_derivative(f, x0, eps=h)
        p.data[...] = x0

        err = np.abs(g - numeric)
        bound = atol + rtol * np.maximum(np.abs(g), np.abs(numeric))
        if not np.all(err <= bound):
            ok = False
            print2(f"gradient mismatch in {p}: max abs error {err.max():.3e}", verbose=verbose)

    return ok
