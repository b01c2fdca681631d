"""Recurrent and feed-forward building blocks plus diagonal-Gaussian ops.

Everything here operates on autodiff Tensors and is differentiable end to
end. Batched variants take (N, d) matrices; the single-vector entry points
promote to a one-row batch internally. Training runs at float32; the
gradient oracle rebuilds the same graphs at float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Parameter,
    Tensor,
    as_tensor,
    concat,
    log,
    masked_select,
    matmul,
    mul,
    reshape,
    sigmoid,
    softplus,
    tanh,
    tsum,
)

SIGMA_FLOOR = 1e-6  # added after softplus so KL never divides by ~0


@dataclass
class GruParams:
    """Weights for one GRU direction: update z, reset r, candidate h."""

    w_z: Parameter
    u_z: Parameter
    b_z: Parameter
    w_r: Parameter
    u_r: Parameter
    b_r: Parameter
    w_h: Parameter
    u_h: Parameter
    b_h: Parameter

    @property
    def input_dim(self) -> int:
        return self.w_z.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w_z.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_h, self.u_h, self.b_h]


@dataclass
class MlpParams:
    """Affine layers; tanh on all hidden layers, linear output."""

    layers: list[tuple[Parameter, Parameter]]

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    def parameters(self) -> list[Parameter]:
        return [p for w, b in self.layers for p in (w, b)]


@dataclass
class GaussianParams:
    """Diagonal Gaussian: mean and strictly positive standard deviation."""

    mu: Tensor
    sigma: Tensor

    def __post_init__(self):
        self.mu = as_tensor(self.mu)
        self.sigma = as_tensor(self.sigma)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def make_gru_params(name: str, input_dim: int, hidden_dim: int, rng: np.random.Generator, dtype=np.float32) -> GruParams:
    def w(suffix):
        return Parameter(glorot(rng, input_dim, hidden_dim, dtype), f"{name}.{suffix}")

    def u(suffix):
        return Parameter(glorot(rng, hidden_dim, hidden_dim, dtype), f"{name}.{suffix}")

    def b(suffix):
        return Parameter(np.zeros(hidden_dim, dtype=dtype), f"{name}.{suffix}")

    return GruParams(
        w_z=w("w_z"), u_z=u("u_z"), b_z=b("b_z"),
        w_r=w("w_r"), u_r=u("u_r"), b_r=b("b_r"),
        w_h=w("w_h"), u_h=u("u_h"), b_h=b("b_h"),
    )


def make_mlp_params(name: str, dims: list[int], rng: np.random.Generator, dtype=np.float32) -> MlpParams:
    """dims = [input, hidden..., output]."""
    layers = []
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        w = Parameter(glorot(rng, d_in, d_out, dtype), f"{name}.w{i}")
        b = Parameter(np.zeros(d_out, dtype=dtype), f"{name}.b{i}")
        layers.append((w, b))
    return MlpParams(layers=layers)


def _as_batch(x) -> tuple[Tensor, bool]:
    t = as_tensor(x)
    if t.data.ndim == 1:
        return reshape(t, (1, t.data.shape[0])), True
    return t, False


def gru_step(x, h, p: GruParams) -> Tensor:
    """One GRU update: h' = (1-z)*h + z*tanh(W_h x + U_h (r*h) + b_h)."""
    x, squeezed_x = _as_batch(x)
    h, squeezed_h = _as_batch(h)
    if x.shape[1] != p.input_dim or h.shape[1] != p.hidden_dim:
        raise ValueError(
            f"gru_step dims: x {x.shape}, h {h.shape} vs params ({p.input_dim}, {p.hidden_dim})"
        )
    z = sigmoid(matmul(x, p.w_z) + matmul(h, p.u_z) + p.b_z)
    r = sigmoid(matmul(x, p.w_r) + matmul(h, p.u_r) + p.b_r)
    cand = tanh(matmul(x, p.w_h) + matmul(mul(r, h), p.u_h) + p.b_h)
    out = (1.0 - z) * h + z * cand
    if squeezed_x and squeezed_h:
        out = reshape(out, (p.hidden_dim,))
    return out


def masked_gru_step(x, h, mask_col: np.ndarray, p: GruParams) -> Tensor:
    """GRU step that leaves rows with mask 0 bit-identical to their previous state."""
    m = np.asarray(mask_col).reshape(-1, 1)
    if np.all(m == 1.0):
        return gru_step(x, h, p)
    return masked_select(m, gru_step(x, h, p), h)


def gru_encode(xs: list, mask: np.ndarray, p: GruParams, reverse: bool = False) -> Tensor:
    """Run a masked unidirectional GRU over time-major inputs, return final state.

    xs: list of (N, input_dim) tensors, one per time step.
    mask: (N, T) with 1 where a real token sits. The state freezes on masked
    steps, so the returned state is the one at each row's last real token
    (first token when reverse=True).
    """
    n = int(np.asarray(xs[0].data if isinstance(xs[0], Tensor) else xs[0]).shape[0])
    h: Tensor = as_tensor(np.zeros((n, p.hidden_dim), dtype=p.w_z.data.dtype))
    steps = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    for t in steps:
        h = masked_gru_step(xs[t], h, mask[:, t], p)
    return h


def bigru(xs: list, mask: np.ndarray, p_fwd: GruParams, p_bwd: GruParams) -> Tensor:
    """Bidirectional masked GRU; concat of final forward and backward states."""
    if np.any(mask.sum(axis=1) < 1):
        raise ValueError("bigru: fully masked sequence in batch")
    h_fwd = gru_encode(xs, mask, p_fwd, reverse=False)
    h_bwd = gru_encode(xs, mask, p_bwd, reverse=True)
    return concat([h_fwd, h_bwd], axis=1)


def bigru_encode(seq: list, mask, p_fwd: GruParams, p_bwd: GruParams) -> Tensor:
    """Encode one sequence of input vectors into a (2*hidden_dim,) vector."""
    mask = np.asarray(mask).reshape(1, -1)
    xs = [reshape(as_tensor(x), (1, -1)) for x in seq]
    out = bigru(xs, mask, p_fwd, p_bwd)
    return reshape(out, (out.shape[1],))


def mlp_apply(x, stack: MlpParams) -> Tensor:
    """Affine stack with tanh on hidden layers and a linear final layer."""
    x, squeezed = _as_batch(x)
    if x.shape[1] != stack.input_dim:
        raise ValueError(f"mlp_apply: input dim {x.shape[1]} vs expected {stack.input_dim}")
    for i, (w, b) in enumerate(stack.layers):
        x = matmul(x, w) + b
        if i < len(stack.layers) - 1:
            x = tanh(x)
    if squeezed:
        x = reshape(x, (stack.output_dim,))
    return x


def gaussian_sample(g: GaussianParams, noise) -> Tensor:
    """Reparameterized draw z = mu + sigma * noise; gradients flow to mu, sigma."""
    noise = np.asarray(noise)
    if noise.shape != g.mu.data.shape:
        raise ValueError(f"noise shape {noise.shape} != mu shape {g.mu.data.shape}")
    return g.mu + mul(g.sigma, noise)


def gaussian_kl(q: GaussianParams, p: GaussianParams) -> Tensor:
    """Closed-form KL(q || p) for diagonal Gaussians, summed over the last axis.

    Batched (N, d) inputs give a (N,) result; (d,) inputs give a scalar.
    """
    if q.mu.data.shape != p.mu.data.shape:
        raise ValueError(f"KL dims differ: {q.mu.data.shape} vs {p.mu.data.shape}")
    if np.any(q.sigma.data <= 0) or np.any(p.sigma.data <= 0):
        raise ValueError("gaussian_kl: sigma must be strictly positive")
    var_ratio_term = (mul(q.sigma, q.sigma) + mul(q.mu - p.mu, q.mu - p.mu)) / (
        2.0 * mul(p.sigma, p.sigma)
    )
    per_dim = log(p.sigma) - log(q.sigma) + var_ratio_term - 0.5
    return tsum(per_dim, axis=-1)


class NoiseSource:
    """Supplies the standard-normal draws used for latent sampling."""

    def draw(self, name: str, shape: tuple[int, ...]) -> np.ndarray:
        raise NotImplementedError


class RandomNoise(NoiseSource):
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def draw(self, name, shape):
        return self.rng.standard_normal(shape)


class ZeroNoise(NoiseSource):
    """Zero noise: reparameterized samples collapse to the mean."""

    def draw(self, name, shape):
        return np.zeros(shape)


class FrozenNoise(NoiseSource):
    """Pre-drawn noise by name; identical across repeated forward passes."""

    def __init__(self, draws: dict[str, np.ndarray]):
        self.draws = draws

    def draw(self, name, shape):
        arr = np.asarray(self.draws[name])
        if arr.shape != tuple(shape):
            raise ValueError(f"frozen noise {name!r} has shape {arr.shape}, wanted {shape}")
        return arr

    @classmethod
    def draw_all(cls, rng: np.random.Generator, shapes: dict[str, tuple[int, ...]]) -> "FrozenNoise":
        return cls({name: rng.standard_normal(shape) for name, shape in shapes.items()})
