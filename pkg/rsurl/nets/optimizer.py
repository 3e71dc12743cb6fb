import numpy as np

from rsurl.printing import print2


class NonFiniteGradientError(FloatingPointError):
    pass


def global_norm(grads):
    return float(np.sqrt(np.sum([np.sum(np.square(g)) for g in grads])))


def grad_clip(grads, max_norm):
    """Rescale the list of gradient arrays in place so their global norm is <= max_norm; returns the old norm."""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    n = global_norm(grads)
    if n > max_norm:
        for g in grads:
            g *= max_norm / n
    return n


class AdamState:
    __slots__ = ("m", "v", "beta1t", "beta2t", "n_steps", "n_skipped")

    def __init__(self, params):
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.beta1t = 1.
        self.beta2t = 1.
        self.n_steps = 0
        self.n_skipped = 0


def adam_step(params, grads, state: AdamState, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8, verbose=1):
    """
    One bias-corrected Adam update of the parameter Tensors with the gradient arrays.
    Non-finite gradients leave parameters and moments untouched and raise NonFiniteGradientError.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(f"{len(params)} parameters, {len(grads)} gradients and {len(state.m)} moments")
    if not all(np.all(np.isfinite(g)) for g in grads):
        state.n_skipped += 1
        print2(f"Adam: non-finite gradient, update skipped ({state.n_skipped} so far)", verbose=verbose)
        raise NonFiniteGradientError("Non-finite gradient")

    state.beta1t *= beta1
    state.beta2t *= beta2
    state.n_steps += 1
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = beta1 * state.m[i] + (1 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1 - beta2) * g**2
        mt = state.m[i] / (1 - state.beta1t)
        vt = state.v[i] / (1 - state.beta2t)
        p.data = p.data - lr * mt / (np.sqrt(vt) + eps)


class Adam:
    """Adam over a fixed list of parameter Tensors, reading their .grad after backward."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8, max_norm=None, verbose=1):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_norm = max_norm
        self.verbose = verbose
        self.state = AdamState(self.params)

    @property
    def n_skipped(self):
        return self.state.n_skipped

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        """Apply the accumulated gradients, returns the global gradient norm before clipping."""
        grads = [np.zeros_like(p.data) if p.grad is None else np.array(p.grad, dtype=float) for p in self.params]
        n = global_norm(grads)
        if self.max_norm is not None and np.isfinite(n):
            grad_clip(grads, max_norm=self.max_norm)
        adam_step(self.params, grads, self.state, lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
                  verbose=self.verbose)
        return n
