"""
Multi-head self-attention over entity tokens.

    x     = tokens @ W_embed                               [B, n, d_model]
    A_i   = softmax(x W_i^Q (x W_i^K)^T / sqrt(d_k) + M)   M = -inf in the columns of invalid tokens
    y     = concat_i(A_i x W_i^V) @ W^O                    [B, n, d_model]

No positional encoding, so permuting the tokens permutes the output rows.
"""
import numpy as np

from rsurl import tensor as tn
from rsurl.tensor import Tensor, DimensionError
from rsurl.env.observation import ObsLayout
from rsurl.nets.layers import Module, Normalizer, glorot_uniform


class MultiHeadSelfAttention(Module):
    __slots__ = ("n_heads", "d_model", "d_k", "feature_dim")

    def __init__(self, feature_dim, rng: np.random.Generator, n_heads=4, d_model=64, d_k=16):
        super().__init__()
        if n_heads < 1 or d_k < 1 or d_model < 1:
            raise ValueError(f"Invalid attention sizes: n_heads={n_heads}, d_model={d_model}, d_k={d_k}")
        self.n_heads = int(n_heads)
        self.d_model = int(d_model)
        self.d_k = int(d_k)
        self.feature_dim = int(feature_dim)

        self.add_param("w_embed", glorot_uniform(rng, self.feature_dim, self.d_model))
        for i in range(self.n_heads):
            self.add_param(f"w_q{i}", glorot_uniform(rng, self.d_model, self.d_k))
            self.add_param(f"w_k{i}", glorot_uniform(rng, self.d_model, self.d_k))
            self.add_param(f"w_v{i}", glorot_uniform(rng, self.d_model, self.d_k))
        self.add_param("w_o", glorot_uniform(rng, self.n_heads * self.d_k, self.d_model))

    def head(self, i):
        return self.params[f"w_q{i}"], self.params[f"w_k{i}"], self.params[f"w_v{i}"]

    def check(self):
        if self.params["w_o"].shape != (self.n_heads * self.d_k, self.d_model):
            raise DimensionError(f"W_o {self.params['w_o'].shape} does not match "
                                 f"{self.n_heads} heads x d_k {self.d_k} -> d_model {self.d_model}")

    def forward(self, tokens, valid=None, return_weights=False):
        """
        tokens [B, n, feature_dim] or [n, feature_dim], valid [B, n] / [n] booleans (default all valid).
        Returns the outputs (same leading shape, last dimension d_model), and the attention weights
        [B, n_heads, n, n] as numpy array if return_weights.
        """
        tokens = tn.as_tensor(tokens)
        single = tokens.ndim == 2
        if single:
            tokens = tn.reshape(tokens, (1,) + tokens.shape)
        if tokens.ndim != 3 or tokens.shape[-1] != self.feature_dim:
            raise DimensionError(f"Attention expects tokens [B, n, {self.feature_dim}], got {tokens.shape}")
        self.check()

        b, n, _ = tokens.shape
        valid = np.ones((b, n), dtype=bool) if valid is None else np.asarray(valid, dtype=bool).reshape(b, n)
        if n < 1 or np.any(~valid.any(axis=-1)):
            raise ValueError("Attention over a token set without any valid token")

        mask = Tensor(np.broadcast_to(np.where(valid, 0., -np.inf)[:, np.newaxis, :], (b, n, n)).copy())

        x = tn.matmul(tokens, self.params["w_embed"])
        heads, weights = [], []
        for i in range(self.n_heads):
            w_q, w_k, w_v = self.head(i)
            q, k, v = tn.matmul(x, w_q), tn.matmul(x, w_k), tn.matmul(x, w_v)
            scores = tn.mul(tn.matmul(q, tn.transpose_last(k)), 1 / np.sqrt(self.d_k))
            a = tn.softmax(tn.add(scores, mask), axis=-1)
            heads.append(tn.matmul(a, v))
            weights.append(a.data)

        y = tn.matmul(tn.concat(heads, axis=-1), self.params["w_o"])
        if single:
            y = tn.reshape(y, (n, self.d_model))

        if return_weights:
            return y, np.stack(weights, axis=1)
        return y


def mhsa_forward(obs_features, params: MultiHeadSelfAttention, valid=None):
    return params(obs_features, valid=valid)


class ObsEncoder(Module):
    """
    Observation front-end shared by actors and the value net: masks invalid slots, standardizes, and with
    attention adds the ego token's attention output, projected back to the observation size, as a residual.
    W_back starts at zero, so an encoder with fresh attention reproduces the plain normalized observation.
    """
    __slots__ = ("layout", "use_attention")

    def __init__(self, layout: ObsLayout, rng: np.random.Generator, use_attention=False,
                 n_heads=4, d_model=64, d_k=16):
        super().__init__()
        self.layout = layout
        self.use_attention = False
        self.add_module("normalizer", Normalizer(layout.n_obs))
        if use_attention:
            self.add_attention(rng=rng, n_heads=n_heads, d_model=d_model, d_k=d_k)

    @property
    def normalizer(self):
        return self.modules["normalizer"]

    def add_attention(self, rng: np.random.Generator, n_heads=4, d_model=64, d_k=16):
        """Switch a plain encoder to attention; its outputs are unchanged until W_back is trained."""
        if self.use_attention:
            return self
        self.use_attention = True
        self.add_module("mhsa", MultiHeadSelfAttention(feature_dim=self.layout.token_dim, rng=rng,
                                                       n_heads=n_heads, d_model=d_model, d_k=d_k))
        self.add_param("w_back", np.zeros((d_model, self.layout.n_obs)))
        return self

    def forward(self, obs):
        obs = np.atleast_2d(self.layout.check(obs))
        x = Tensor(self.normalizer(self.layout.mask(obs)))
        if not self.use_attention:
            return x

        tokens, valid = self.layout.tokens(obs)
        h = self.modules["mhsa"](Tensor(tokens), valid=valid)
        ego = tn.index(h, (slice(None), 0, slice(None)))
        return tn.add(x, tn.matmul(ego, self.params["w_back"]))
