import numpy as np

from rsurl.object2 import CopyableObject
from rsurl import tensor as tn
from rsurl.tensor import Tensor, DimensionError

STD_MIN = 1e-6


def glorot_uniform(rng: np.random.Generator, n_in, n_out, scale=1.0):
    limit = np.sqrt(6 / (n_in + n_out))
    return scale * rng.uniform(-limit, limit, size=(n_in, n_out))


class Module(CopyableObject):
    """
    Container of named parameters (Tensors with requires_grad), buffers (plain arrays, not trained) and
    sub-modules. Parameter paths are dotted, e.g. 'trunk.layers.0.w'.
    """
    __slots__ = ("params", "buffers", "modules")

    def __init__(self):
        self.params = {}
        self.buffers = {}
        self.modules = {}

    def add_param(self, name, data):
        p = Tensor(data, requires_grad=True, name=name)
        self.params[name] = p
        return p

    def add_module(self, name, module):
        self.modules[name] = module
        return module

    def named_parameters(self, prefix="") -> dict:
        d = {prefix + k: p for k, p in self.params.items()}
        for name, m in self.modules.items():
            d.update(m.named_parameters(prefix=f"{prefix}{name}."))
        return d

    def named_buffers(self, prefix="") -> dict:
        d = {prefix + k: b for k, b in self.buffers.items()}
        for name, m in self.modules.items():
            d.update(m.named_buffers(prefix=f"{prefix}{name}."))
        return d

    def parameters(self) -> list:
        return list(self.named_parameters().values())

    def n_parameters(self):
        return int(np.sum([p.size for p in self.parameters()]))

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict:
        d = {k: p.data.copy() for k, p in self.named_parameters().items()}
        d.update({"buffer:" + k: np.asarray(b, dtype=float).copy() for k, b in self.named_buffers().items()})
        return d

    def load_state_dict(self, d: dict, strict=True):
        params = self.named_parameters()
        keys = set(params) | {"buffer:" + k for k in self.named_buffers()}
        if strict and set(d) != keys:
            raise ValueError(f"State dict does not match {type(self).__name__}: "
                             f"missing {sorted(keys - set(d))}, unexpected {sorted(set(d) - keys)}")

        for k, v in d.items():
            v = np.asarray(v, dtype=float)
            if k.startswith("buffer:"):
                module, name = self._locate(k[len("buffer:"):])
                if np.shape(module.buffers[name]) != v.shape:
                    raise DimensionError(f"Buffer '{k}': shape {v.shape} != {np.shape(module.buffers[name])}")
                module.buffers[name] = v.copy()
            elif k in params:
                if params[k].shape != v.shape:
                    raise DimensionError(f"Parameter '{k}': shape {v.shape} != {params[k].shape}")
                params[k].data = v.copy()
        return self

    def _locate(self, path):
        *names, leaf = path.split(".")
        m = self
        for n in names:
            m = m.modules[n]
        return m, leaf

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Linear(Module):
    __slots__ = ()

    def __init__(self, n_in, n_out, rng: np.random.Generator, scale=1.0):
        super().__init__()
        self.add_param("w", glorot_uniform(rng, n_in, n_out, scale=scale))
        self.add_param("b", np.zeros(n_out))

    @property
    def n_in(self):
        return self.params["w"].shape[0]

    @property
    def n_out(self):
        return self.params["w"].shape[1]

    def forward(self, x):
        x = tn.as_tensor(x)
        if x.shape[-1] != self.n_in:
            raise DimensionError(f"Linear expects inputs [..., {self.n_in}], got {x.shape}")
        return tn.add(tn.matmul(x, self.params["w"]), self.params["b"])


class Mlp(Module):
    """tanh hidden layers and a linear output layer, whose initial weights are scaled by final_scale."""
    __slots__ = ("sizes",)

    def __init__(self, sizes, rng: np.random.Generator, final_scale=0.01):
        super().__init__()
        if len(sizes) < 2:
            raise ValueError(f"Mlp needs at least input and output size, got {sizes}")
        self.sizes = tuple(int(s) for s in sizes)
        n = len(self.sizes) - 1
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            self.add_module(str(i), Linear(a, b, rng=rng, scale=final_scale if i == n - 1 else 1.0))

    @property
    def layers(self):
        return [self.modules[str(i)] for i in range(len(self.sizes) - 1)]

    def forward(self, x):
        layers = self.layers
        for layer in layers[:-1]:
            x = tn.tanh(layer(x))
        return layers[-1](x)


class Normalizer(Module):
    """Fixed per-feature standardization, fitted once on data; constant features keep std 1."""
    __slots__ = ()

    def __init__(self, n):
        super().__init__()
        self.buffers["mean"] = np.zeros(n)
        self.buffers["std"] = np.ones(n)

    def fit(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != len(self.buffers["mean"]) or len(x) == 0:
            raise DimensionError(f"Normalizer.fit expects [n>0, {len(self.buffers['mean'])}], got {x.shape}")
        std = x.std(axis=0)
        self.buffers["mean"] = x.mean(axis=0)
        self.buffers["std"] = np.where(std < STD_MIN, 1.0, std)
        return self

    def forward(self, x):
        return (np.asarray(x, dtype=float) - self.buffers["mean"]) / self.buffers["std"]
