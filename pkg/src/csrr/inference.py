"""Test-time latent handling, response generation, and chat sessions.

At generation time the discourse latent comes from its recognition network
over the observed utterances, while the pair and response latents fall
back to their priors: their posteriors condition on the response, which
does not exist yet. Diversity across draws comes from these latents, not
from the decoder, when greedy decoding is used.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field

import numpy as np

from .autodiff import no_grad
from .corpus import EOS_ID, PAD_ID, SOS_ID, Conversation, Utterance, Vocabulary, tokenize
from .model import ContextState, DialogueModel, LatentBundle
from .nn import NoiseSource, RandomNoise, ZeroNoise, gaussian_sample

STRATEGIES = ("greedy", "sample")
LATENT_MODES = ("sample", "mean")


@dataclass
class GenerationOptions:
    strategy: str = "greedy"
    temperature: float = 1.0
    max_tokens: int | None = None
    latent_mode: str = "mean"
    num_candidates: int = 1
    seed: int | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.latent_mode not in LATENT_MODES:
            raise ValueError(f"latent_mode must be one of {LATENT_MODES}")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.num_candidates < 1:
            raise ValueError("num_candidates must be >= 1")
        if self.max_tokens is not None and self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass
class GeneratedResponse:
    token_ids: list[int]
    tokens: list[str]
    text: str
    token_logprobs: list[float]
    latent_sources: dict[str, str] = field(default_factory=dict)


@dataclass
class SessionTurn:
    speaker: str  # "user" | "model"
    utterance: Utterance


@dataclass
class Session:
    """Multi-turn chat state; history is capped, oldest turns evicted first."""

    vocabulary: Vocabulary
    max_conv_length: int
    id: str = field(default_factory=lambda: uuid.uuid4().hex)
    history: list[SessionTurn] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    updated_at: float = field(default_factory=time.time)

    def append(self, speaker: str, utterance: Utterance) -> None:
        self.history.append(SessionTurn(speaker=speaker, utterance=utterance))
        while len(self.history) > self.max_conv_length:
            self.history.pop(0)
        self.updated_at = time.time()

    def replace_last_model_turn(self, utterance: Utterance) -> None:
        if not self.history or self.history[-1].speaker != "model":
            raise ValueError("no model turn to replace")
        self.history[-1] = SessionTurn(speaker="model", utterance=utterance)
        self.updated_at = time.time()

    def utterances(self) -> list[Utterance]:
        return [turn.utterance for turn in self.history]


def _roll_context(model: DialogueModel, vs: list, z_c) -> tuple[ContextState, ContextState]:
    """Run the context GRU over all history vectors; return (h_{c_{n-1}}, h_{c_n})."""
    state = model.context_init(z_c) if model.is_csrr else model.context_init(batch_size=None)
    prev = state
    for v in vs:
        prev = state
        state = model.context_step(state, v, z_c)
    return prev, state


def infer_latents(
    history: list[Utterance],
    model: DialogueModel,
    latent_mode: str = "mean",
    noise: NoiseSource | None = None,
) -> LatentBundle:
    """Latents for generating the next response from observed history only."""
    bundle, _ = _infer_latents_and_state(history, model, latent_mode, noise)
    return bundle


def _infer_latents_and_state(
    history: list[Utterance],
    model: DialogueModel,
    latent_mode: str,
    noise: NoiseSource | None,
) -> tuple[LatentBundle, ContextState]:
    if not history:
        raise ValueError("history must contain at least the query utterance")
    if latent_mode not in LATENT_MODES:
        raise ValueError(f"latent_mode must be one of {LATENT_MODES}")
    if noise is None:
        noise = ZeroNoise() if latent_mode == "mean" else RandomNoise(np.random.default_rng())
    if latent_mode == "mean":
        noise = ZeroNoise()
    d = model.config.latent_dim
    suffix = "sample" if latent_mode == "sample" else "mean"

    with no_grad():
        vs = [model.encode_utterance(u.token_ids) for u in history]
        if not model.is_csrr:
            _, h_n = _roll_context(model, vs, None)
            return LatentBundle(sources={}), h_n

        q_c = model.posterior_z_c(vs)
        z_c = gaussian_sample(q_c, noise.draw("z_c", (d,)).astype(model.dtype))
        h_query, h_n = _roll_context(model, vs, z_c)
        p_p = model.prior_z_p(h_query, z_c)
        z_p = gaussian_sample(p_p, noise.draw("z_p", (d,)).astype(model.dtype))
        p_r = model.prior_z_i(h_n, z_c, z_p)
        z_r = gaussian_sample(p_r, noise.draw("z_r", (d,)).astype(model.dtype))
        bundle = LatentBundle(
            z_c=z_c,
            z_p=z_p,
            z_r=z_r,
            sources={"z_c": f"posterior_{suffix}", "z_p": f"prior_{suffix}", "z_r": f"prior_{suffix}"},
        )
        return bundle, h_n


def _decode_autoregressive(
    model: DialogueModel,
    h_ctx: ContextState,
    bundle: LatentBundle,
    vocabulary: Vocabulary,
    opts: GenerationOptions,
    rng: np.random.Generator,
) -> GeneratedResponse:
    from .autodiff import concat, reshape

    max_tokens = opts.max_tokens if opts.max_tokens is not None else model.config.pad_length
    if max_tokens > model.config.pad_length:
        raise ValueError(f"max_tokens {max_tokens} exceeds pad_length {model.config.pad_length}")
    with no_grad():
        if model.is_csrr:
            cond = concat([reshape(bundle.z_c, (1, -1)), reshape(bundle.z_p, (1, -1)), reshape(bundle.z_r, (1, -1))], axis=-1)
        else:
            cond = None
        h = model._decoder_init(reshape(h_ctx.h, (1, -1)), cond)
        prev = np.array([SOS_ID], dtype=np.int64)
        ids: list[int] = []
        logprobs: list[float] = []
        for _ in range(max_tokens):
            h, logits = model._decoder_step(prev, h, cond)
            row = logits.data[0].astype(np.float64)
            row[PAD_ID] = -np.inf
            row[SOS_ID] = -np.inf
            if opts.strategy == "greedy":
                scaled = row
            else:
                scaled = row / opts.temperature
            scaled = scaled - scaled.max()
            probs = np.exp(scaled)
            probs /= probs.sum()
            if opts.strategy == "greedy":
                token = int(np.argmax(row))
            else:
                token = int(rng.choice(len(probs), p=probs))
            logprob = float(np.log(probs[token]))
            if token == EOS_ID:
                break
            ids.append(token)
            logprobs.append(logprob)
            prev = np.array([token], dtype=np.int64)
        tokens = [vocabulary.id_to_token[i] for i in ids]
        return GeneratedResponse(
            token_ids=ids,
            tokens=tokens,
            text=" ".join(tokens),
            token_logprobs=logprobs,
            latent_sources=dict(bundle.sources),
        )


def generate_response(
    history: list[Utterance],
    model: DialogueModel,
    vocabulary: Vocabulary,
    opts: GenerationOptions,
) -> list[GeneratedResponse]:
    """Generate num_candidates responses; fresh latents per candidate when sampling."""
    candidates = []
    for c in range(opts.num_candidates):
        if opts.seed is not None:
            rng = np.random.default_rng(np.random.SeedSequence([opts.seed, c]))
        else:
            rng = np.random.default_rng()
        noise = ZeroNoise() if opts.latent_mode == "mean" else RandomNoise(rng)
        bundle, h_n = _infer_latents_and_state(history, model, opts.latent_mode, noise)
        candidates.append(_decode_autoregressive(model, h_n, bundle, vocabulary, opts, rng))
    return candidates


def batch_generate(
    conversations: list[Conversation],
    model: DialogueModel,
    vocabulary: Vocabulary,
    opts: GenerationOptions,
) -> tuple[list[str], list[str]]:
    """One response per conversation: context is everything but the last utterance,
    the last utterance becomes the aligned reference. Returns (responses, references)."""
    responses: list[str] = []
    references: list[str] = []
    for i, conv in enumerate(conversations):
        if conv.n_plus_1 < 2:
            raise ValueError("each conversation needs a context and a reference")
        history = list(conv.utterances[:-1])
        reference = conv.utterances[-1]
        per_conv = GenerationOptions(
            strategy=opts.strategy,
            temperature=opts.temperature,
            max_tokens=opts.max_tokens,
            latent_mode=opts.latent_mode,
            num_candidates=1,
            seed=None if opts.seed is None else opts.seed + i,
        )
        out = generate_response(history, model, vocabulary, per_conv)[0]
        responses.append(out.text)
        references.append(" ".join(tokenize(reference.raw_text)))
    return responses, references
