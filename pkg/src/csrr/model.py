"""Three-level latent-variable hierarchical recurrent dialogue model.

The csrr mode carries a discourse latent z_c (standard-normal prior), a
pair latent z_p shared by query and response, and per-utterance latents
z_q / z_r, all diagonal Gaussians whose means and deviations come from
small feed-forward heads. Utterances are encoded by a bidirectional GRU,
a context GRU conditioned on z_c rolls over utterance vectors, and a GRU
decoder reconstructs the query and the response conditioned on
(context state, z_c, z_p, z_i) injected into the initial state and at
every input step. The hred mode is the same wiring with every latent
removed. Training maximizes the reconstruction term minus the annealed
sum of the four KL divergences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .autodiff import Tensor, as_tensor, concat, cross_entropy_logits, matmul, reshape, take_rows, tsum
from .corpus import EOS_ID, SOS_ID, Batch, Conversation, pack_batch
from .nn import (
    SIGMA_FLOOR,
    GaussianParams,
    GruParams,
    MlpParams,
    NoiseSource,
    ZeroNoise,
    bigru,
    gaussian_kl,
    gaussian_sample,
    gru_step,
    make_gru_params,
    make_mlp_params,
    masked_gru_step,
    mlp_apply,
)

MODES = ("csrr", "hred")


@dataclass
class ModelConfig:
    vocab_size: int
    hidden_dim: int = 1000
    embed_dim: int = 500
    latent_dim: int = 100
    pad_length: int = 15
    max_conv_length: int = 10
    mode: str = "csrr"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("vocab_size", "hidden_dim", "embed_dim", "latent_dim", "max_conv_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.pad_length < 2:
            raise ValueError("pad_length must be >= 2")
        if self.vocab_size < 5:
            raise ValueError("vocab_size must cover the 4 special tokens plus content")
        if self.hidden_dim % 2 != 0:
            raise ValueError("hidden_dim must be even (split across BiGRU directions)")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "hidden_dim": self.hidden_dim,
            "embed_dim": self.embed_dim,
            "latent_dim": self.latent_dim,
            "pad_length": self.pad_length,
            "max_conv_length": self.max_conv_length,
            "mode": self.mode,
        }


@dataclass
class ContextState:
    """Inter-utterance recurrence state h_c at turn index t."""

    h: Tensor
    t: int


@dataclass
class LatentBundle:
    """Sampled latent values plus how each was obtained."""

    z_c: Tensor | None = None
    z_p: Tensor | None = None
    z_q: Tensor | None = None
    z_r: Tensor | None = None
    sources: dict[str, str] = field(default_factory=dict)


@dataclass
class ElboBreakdown:
    """Per-conversation training objective pieces (all in nats)."""

    recon_nll: float
    kl_c: float
    kl_p: float
    kl_q: float
    kl_r: float
    anneal_weight: float
    token_count: int

    @property
    def kl_total(self) -> float:
        return self.kl_c + self.kl_p + self.kl_q + self.kl_r

    @property
    def loss(self) -> float:
        return self.recon_nll + self.anneal_weight * self.kl_total


def _architecture(config: ModelConfig) -> dict[str, tuple]:
    """Name -> ("gru", in, hidden) | ("mlp", dims) | ("array", shape)."""
    h, e, d, v = config.hidden_dim, config.embed_dim, config.latent_dim, config.vocab_size
    half = h // 2
    csrr = config.mode == "csrr"
    arch: dict[str, tuple] = {
        "embed": ("array", (v, e)),
        "utt_fwd": ("gru", e, half),
        "utt_bwd": ("gru", e, half),
        "ctx": ("gru", h + d if csrr else h, h),
    }
    if csrr:
        arch.update(
            {
                "ctx_init": ("mlp", [d, h, h]),
                "zc_fwd": ("gru", h, half),
                "zc_bwd": ("gru", h, half),
                "zc_post_mu": ("mlp", [h, d, d]),
                "zc_post_sigma": ("mlp", [h, d, d]),
                "zp_prior_mu": ("mlp", [h + d, d, d]),
                "zp_prior_sigma": ("mlp", [h + d, d, d]),
                "zp_post_mu": ("mlp", [3 * h + d, d, d]),
                "zp_post_sigma": ("mlp", [3 * h + d, d, d]),
                "zi_prior_mu": ("mlp", [h + 2 * d, d, d]),
                "zi_prior_sigma": ("mlp", [h + 2 * d, d, d]),
                "zi_post_mu": ("mlp", [2 * h + 2 * d, d, d]),
                "zi_post_sigma": ("mlp", [2 * h + 2 * d, d, d]),
            }
        )
    arch["dec_init"] = ("mlp", [h + 3 * d if csrr else h, h, h])
    arch["dec"] = ("gru", e + 3 * d if csrr else e, h)
    arch["out_w"] = ("array", (h, v))
    arch["out_b"] = ("array", (v,))
    return arch


def count_parameters(config: ModelConfig) -> int:
    """Total scalar parameter count implied by the config."""
    total = 0
    for name, spec in _architecture(config).items():
        if spec[0] == "gru":
            _, d_in, d_hid = spec
            total += 3 * (d_in * d_hid + d_hid * d_hid + d_hid)
        elif spec[0] == "mlp":
            dims = spec[1]
            total += sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
        else:
            total += int(np.prod(spec[1]))
    return total


class DialogueModel:
    """Parameter container plus every forward computation of the model."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self._modules: dict[str, object] = {}
        for name, spec in _architecture(config).items():
            if spec[0] == "gru":
                self._modules[name] = make_gru_params(name, spec[1], spec[2], rng, self.dtype)
            elif spec[0] == "mlp":
                self._modules[name] = make_mlp_params(name, spec[1], rng, self.dtype)
            else:
                shape = spec[1]
                if name == "embed":
                    data = rng.uniform(-0.1, 0.1, size=shape).astype(self.dtype)
                elif len(shape) == 2:
                    data = nn.glorot(rng, shape[0], shape[1], self.dtype)
                else:
                    data = np.zeros(shape, dtype=self.dtype)
                self._modules[name] = nn.Parameter(data, name)

    # -- parameter access ---------------------------------------------------

    def parameters(self) -> list[nn.Parameter]:
        out: list[nn.Parameter] = []
        for mod in self._modules.values():
            if isinstance(mod, (GruParams, MlpParams)):
                out.extend(mod.parameters())
            else:
                out.append(mod)
        return out

    def named_parameters(self) -> dict[str, nn.Parameter]:
        return {p.name: p for p in self.parameters()}

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(arrays)
        extra = set(arrays) - set(params)
        if missing or extra:
            raise ValueError(f"parameter name mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in params.items():
            arr = np.asarray(arrays[name], dtype=self.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(f"{name}: shape {arr.shape} != expected {p.data.shape}")
            p.data = arr.copy()

    def _gru(self, name) -> GruParams:
        return self._modules[name]

    def _mlp(self, name) -> MlpParams:
        return self._modules[name]

    @property
    def _embed(self) -> nn.Parameter:
        return self._modules["embed"]

    @property
    def is_csrr(self) -> bool:
        return self.config.mode == "csrr"

    # -- utterance encoding -------------------------------------------------

    def _encode_rows(self, ids: np.ndarray, mask: np.ndarray) -> Tensor:
        """BiGRU-encode (N, L) token rows into (N, hidden_dim) vectors."""
        xs = [take_rows(self._embed, ids[:, t]) for t in range(ids.shape[1])]
        return bigru(xs, mask, self._gru("utt_fwd"), self._gru("utt_bwd"))

    def encode_utterance(self, ids, mask=None) -> Tensor:
        """Encode one utterance (1-D id sequence) into a (hidden_dim,) vector."""
        ids = np.asarray(ids, dtype=np.int64).reshape(1, -1)
        if ids.size == 0:
            raise ValueError("cannot encode an empty utterance")
        if mask is None:
            mask = np.ones(ids.shape, dtype=self.dtype)
        else:
            mask = np.asarray(mask, dtype=self.dtype).reshape(1, -1)
        out = self._encode_rows(ids, mask)
        return reshape(out, (out.shape[1],))

    # -- context recurrence ---------------------------------------------------

    def context_init(self, z_c: Tensor | None = None, batch_size: int | None = None) -> ContextState:
        """h_c0: MLP(z_c) in csrr mode, zeros in hred mode."""
        if self.is_csrr:
            if z_c is None:
                raise ValueError("csrr mode requires z_c for context_init")
            return ContextState(h=mlp_apply(z_c, self._mlp("ctx_init")), t=0)
        n = batch_size or 1
        shape = (self.config.hidden_dim,) if batch_size is None else (n, self.config.hidden_dim)
        return ContextState(h=as_tensor(np.zeros(shape, dtype=self.dtype)), t=0)

    def context_step(self, prev: ContextState, v_prev: Tensor, z_c: Tensor | None = None) -> ContextState:
        """Advance the context GRU over the previous utterance vector."""
        if self.is_csrr:
            if z_c is None:
                raise ValueError("csrr mode requires z_c for context_step")
            x = concat([v_prev, z_c], axis=-1)
        else:
            x = v_prev
        return ContextState(h=gru_step(x, prev.h, self._gru("ctx")), t=prev.t + 1)

    # -- priors and posteriors ------------------------------------------------

    def prior_z_c(self, batch_size: int | None = None) -> GaussianParams:
        """Fixed standard-normal prior for the discourse latent."""
        d = self.config.latent_dim
        shape = (d,) if batch_size is None else (batch_size, d)
        return GaussianParams(
            mu=as_tensor(np.zeros(shape, dtype=self.dtype)),
            sigma=as_tensor(np.ones(shape, dtype=self.dtype)),
        )

    def _head(self, mu_name: str, sigma_name: str, x: Tensor) -> GaussianParams:
        mu = mlp_apply(x, self._mlp(mu_name))
        sigma = nn.softplus(mlp_apply(x, self._mlp(sigma_name))) + SIGMA_FLOOR
        return GaussianParams(mu=mu, sigma=sigma)

    def posterior_z_c(self, vs: list) -> GaussianParams:
        """Recognition distribution of z_c from a BiGRU over utterance vectors."""
        if not vs:
            raise ValueError("posterior_z_c needs at least one utterance vector")
        xs = [reshape(as_tensor(v), (1, -1)) for v in vs]
        mask = np.ones((1, len(xs)), dtype=self.dtype)
        v_c = bigru(xs, mask, self._gru("zc_fwd"), self._gru("zc_bwd"))
        g = self._head("zc_post_mu", "zc_post_sigma", v_c)
        return GaussianParams(mu=reshape(g.mu, (-1,)), sigma=reshape(g.sigma, (-1,)))

    def _posterior_z_c_batched(self, slot_vs: list, slot_mask: np.ndarray) -> GaussianParams:
        v_c = bigru(slot_vs, slot_mask, self._gru("zc_fwd"), self._gru("zc_bwd"))
        return self._head("zc_post_mu", "zc_post_sigma", v_c)

    def _prior_z_p_h(self, h: Tensor, z_c: Tensor) -> GaussianParams:
        return self._head("zp_prior_mu", "zp_prior_sigma", concat([h, z_c], axis=-1))

    def _posterior_z_p_h(self, v_q: Tensor, v_r: Tensor, h: Tensor, z_c: Tensor) -> GaussianParams:
        return self._head("zp_post_mu", "zp_post_sigma", concat([v_q, v_r, h, z_c], axis=-1))

    def _prior_z_i_h(self, h: Tensor, z_c: Tensor, z_p: Tensor) -> GaussianParams:
        return self._head("zi_prior_mu", "zi_prior_sigma", concat([h, z_c, z_p], axis=-1))

    def _posterior_z_i_h(self, v_i: Tensor, h: Tensor, z_c: Tensor, z_p: Tensor) -> GaussianParams:
        return self._head("zi_post_mu", "zi_post_sigma", concat([v_i, h, z_c, z_p], axis=-1))

    def prior_z_p(self, h_ctx_query: ContextState, z_c: Tensor) -> GaussianParams:
        return self._prior_z_p_h(h_ctx_query.h, z_c)

    def posterior_z_p(self, v_q: Tensor, v_r: Tensor, h_ctx_query: ContextState, z_c: Tensor) -> GaussianParams:
        return self._posterior_z_p_h(v_q, v_r, h_ctx_query.h, z_c)

    def prior_z_i(self, h_ctx_i: ContextState, z_c: Tensor, z_p: Tensor) -> GaussianParams:
        """Shared utterance-level prior head; i is selected by the state passed in."""
        return self._prior_z_i_h(h_ctx_i.h, z_c, z_p)

    def posterior_z_i(self, v_i: Tensor, h_ctx_i: ContextState, z_c: Tensor, z_p: Tensor) -> GaussianParams:
        return self._posterior_z_i_h(v_i, h_ctx_i.h, z_c, z_p)

    # -- decoder ----------------------------------------------------------------

    def _decoder_init(self, h_ctx: Tensor, cond: Tensor | None) -> Tensor:
        x = h_ctx if cond is None else concat([h_ctx, cond], axis=-1)
        return mlp_apply(x, self._mlp("dec_init"))

    def _decoder_step(self, prev_ids: np.ndarray, h: Tensor, cond: Tensor | None) -> tuple[Tensor, Tensor]:
        """One teacher-forced/autoregressive step: returns (new state, logits)."""
        x = take_rows(self._embed, np.asarray(prev_ids))
        if cond is not None:
            x = concat([x, cond], axis=-1)
        h = gru_step(x, h, self._gru("dec"))
        logits = matmul(h, self._modules["out_w"]) + self._modules["out_b"]
        return h, logits

    def _decode_nll_rows(self, ids: np.ndarray, mask: np.ndarray, init: Tensor, cond: Tensor | None) -> Tensor:
        """Teacher-forced NLL per row; PAD positions contribute nothing."""
        n, length = ids.shape
        h = init
        prev = np.full(n, SOS_ID, dtype=np.int64)
        total: Tensor | None = None
        for k in range(length):
            col_mask = mask[:, k]
            if not col_mask.any():
                break  # mask is a per-row prefix: nothing real remains
            h, logits = self._decoder_step(prev, h, cond)
            step_nll = cross_entropy_logits(logits, ids[:, k], col_mask)
            total = step_nll if total is None else total + step_nll
            prev = ids[:, k].astype(np.int64)
        if total is None:
            raise ValueError("decode target has no unmasked tokens")
        return total

    def decode_nll(self, utt, h_ctx_i: ContextState, z_c=None, z_p=None, z_i=None) -> Tensor:
        """Teacher-forced NLL (nats) of one utterance; scalar Tensor."""
        ids = np.asarray(utt.token_ids if hasattr(utt, "token_ids") else utt, dtype=np.int64)
        if ids.size < 1:
            raise ValueError("decode_nll needs at least one target token")
        if self.is_csrr:
            if z_c is None or z_p is None or z_i is None:
                raise ValueError("csrr mode decodes conditioned on z_c, z_p, z_i")
            cond = concat([_row(z_c), _row(z_p), _row(z_i)], axis=-1)
        else:
            cond = None
        init = self._decoder_init(_row(h_ctx_i.h), cond)
        mask = np.ones((1, ids.size), dtype=self.dtype)
        nll = self._decode_nll_rows(ids.reshape(1, -1), mask, init, cond)
        return reshape(nll, ())

    # -- training objective -------------------------------------------------------

    def _forward_core(self, batch: Batch, noise: NoiseSource) -> dict:
        """Shared encode/latent/context pipeline for training-time passes."""
        ids = batch.token_ids.astype(np.int64)
        mask = batch.mask.astype(self.dtype)
        conv_len = batch.conv_lengths.astype(np.int64)
        b, u_max, length = ids.shape
        if np.any(conv_len < 4):
            raise ValueError("every conversation needs more than 3 utterances")

        valid = (np.arange(u_max)[None, :] < conv_len[:, None])
        flat_valid = valid.reshape(-1)
        ids_flat = ids.reshape(b * u_max, length)[flat_valid]
        mask_flat = mask.reshape(b * u_max, length)[flat_valid]
        # row index of each (conversation, slot) in the packed encoder output
        pos = np.cumsum(flat_valid).reshape(b, u_max) - 1
        pos[~valid] = 0

        v_flat = self._encode_rows(ids_flat, mask_flat)
        slot_vs = [take_rows(v_flat, pos[:, t]) for t in range(u_max)]
        slot_mask = valid.astype(self.dtype)

        rows = np.arange(b)
        q_slot = conv_len - 2  # query index n-1
        r_slot = conv_len - 1  # response index n

        z_c = z_p = z_q = z_r = None
        kl_c = kl_p = kl_q = kl_r = None
        if self.is_csrr:
            q_c = self._posterior_z_c_batched(slot_vs, slot_mask)
            z_c = gaussian_sample(q_c, self._draw(noise, "z_c", b))
            kl_c = gaussian_kl(q_c, self.prior_z_c(batch_size=b))

        # context roll: state[t] = h_{c_t}; consumes v_0..v_{t-1}
        state = self.context_init(z_c, batch_size=b)
        states = [state.h]
        for t in range(1, u_max):
            x_in = concat([slot_vs[t - 1], z_c], axis=-1) if self.is_csrr else slot_vs[t - 1]
            step_mask = (t < conv_len).astype(self.dtype)
            h_next = masked_gru_step(x_in, states[-1], step_mask, self._gru("ctx"))
            states.append(h_next)
        all_states = concat(states, axis=0)  # (u_max*B, hidden)
        h_q = take_rows(all_states, q_slot * b + rows)
        h_r = take_rows(all_states, r_slot * b + rows)

        v_q = take_rows(v_flat, pos[rows, q_slot])
        v_r = take_rows(v_flat, pos[rows, r_slot])

        if self.is_csrr:
            q_p = self._posterior_z_p_h(v_q, v_r, h_q, z_c)
            p_p = self._prior_z_p_h(h_q, z_c)
            z_p = gaussian_sample(q_p, self._draw(noise, "z_p", b))
            kl_p = gaussian_kl(q_p, p_p)

            q_q = self._posterior_z_i_h(v_q, h_q, z_c, z_p)
            p_q = self._prior_z_i_h(h_q, z_c, z_p)
            z_q = gaussian_sample(q_q, self._draw(noise, "z_q", b))
            kl_q = gaussian_kl(q_q, p_q)

            q_r = self._posterior_z_i_h(v_r, h_r, z_c, z_p)
            p_r = self._prior_z_i_h(h_r, z_c, z_p)
            z_r = gaussian_sample(q_r, self._draw(noise, "z_r", b))
            kl_r = gaussian_kl(q_r, p_r)

        ids_dec = np.concatenate([ids[rows, q_slot], ids[rows, r_slot]], axis=0)
        mask_dec = np.concatenate([mask[rows, q_slot], mask[rows, r_slot]], axis=0)
        if self.is_csrr:
            cond_q = concat([z_c, z_p, z_q], axis=-1)
            cond_r = concat([z_c, z_p, z_r], axis=-1)
            cond = concat([cond_q, cond_r], axis=0)
            init_in = concat([concat([h_q, cond_q], axis=-1), concat([h_r, cond_r], axis=-1)], axis=0)
        else:
            cond = None
            init_in = concat([h_q, h_r], axis=0)
        init = mlp_apply(init_in, self._mlp("dec_init"))
        return {
            "b": b,
            "ids_dec": ids_dec,
            "mask_dec": mask_dec,
            "init": init,
            "cond": cond,
            "kls": (kl_c, kl_p, kl_q, kl_r),
            "q_slot": q_slot,
            "r_slot": r_slot,
        }

    def elbo_batch(self, batch: Batch, noise: NoiseSource, anneal_weight: float) -> tuple[Tensor, list[ElboBreakdown]]:
        """Mean per-conversation loss tensor plus per-conversation breakdowns."""
        core = self._forward_core(batch, noise)
        b = core["b"]
        kl_c, kl_p, kl_q, kl_r = core["kls"]
        q_slot, r_slot = core["q_slot"], core["r_slot"]
        nll_rows = self._decode_nll_rows(core["ids_dec"], core["mask_dec"], core["init"], core["cond"])

        recon_sum = tsum(nll_rows)
        if self.is_csrr:
            kl_sum = tsum(kl_c) + tsum(kl_p) + tsum(kl_q) + tsum(kl_r)
            loss = (recon_sum + anneal_weight * kl_sum) / float(b)
        else:
            loss = recon_sum / float(b)

        nll_np = nll_rows.data
        breakdowns = []
        for i in range(b):
            breakdowns.append(
                ElboBreakdown(
                    recon_nll=float(nll_np[i] + nll_np[b + i]),
                    kl_c=float(kl_c.data[i]) if kl_c is not None else 0.0,
                    kl_p=float(kl_p.data[i]) if kl_p is not None else 0.0,
                    kl_q=float(kl_q.data[i]) if kl_q is not None else 0.0,
                    kl_r=float(kl_r.data[i]) if kl_r is not None else 0.0,
                    anneal_weight=anneal_weight,
                    token_count=int(batch.lengths[i, q_slot[i]] + batch.lengths[i, r_slot[i]]),
                )
            )
        return loss, breakdowns

    def token_accuracy(self, batch: Batch, noise: NoiseSource | None = None) -> tuple[int, int]:
        """Teacher-forced (correct, total) argmax token counts over query+response."""
        from .autodiff import no_grad

        noise = noise or ZeroNoise()
        with no_grad():
            core = self._forward_core(batch, noise)
            ids, mask = core["ids_dec"], core["mask_dec"]
            n, length = ids.shape
            h = core["init"]
            prev = np.full(n, SOS_ID, dtype=np.int64)
            correct = total = 0
            for k in range(length):
                col = mask[:, k] > 0
                if not col.any():
                    break
                h, logits = self._decoder_step(prev, h, core["cond"])
                pred = np.argmax(logits.data, axis=1)
                correct += int(np.sum((pred == ids[:, k]) & col))
                total += int(np.sum(col))
                prev = ids[:, k].astype(np.int64)
        return correct, total

    def forward_train(self, conversation: Conversation, noise: NoiseSource | None = None, anneal_weight: float = 1.0) -> ElboBreakdown:
        """Single-conversation training objective (single-sample ancestral estimate)."""
        if conversation.n_plus_1 < 4:
            raise ValueError(f"conversation has {conversation.n_plus_1} utterances, need more than 3")
        noise = noise or ZeroNoise()
        batch = pack_batch([conversation])
        _, breakdowns = self.elbo_batch(batch, noise, anneal_weight)
        return breakdowns[0]

    def _draw(self, noise: NoiseSource, name: str, batch_size: int) -> np.ndarray:
        arr = noise.draw(name, (batch_size, self.config.latent_dim))
        return np.asarray(arr, dtype=self.dtype)


def _row(x) -> Tensor:
    t = as_tensor(x)
    if t.data.ndim == 1:
        return reshape(t, (1, -1))
    return t


__all__ = [
    "ModelConfig",
    "ContextState",
    "LatentBundle",
    "ElboBreakdown",
    "DialogueModel",
    "count_parameters",
    "EOS_ID",
    "SOS_ID",
]
