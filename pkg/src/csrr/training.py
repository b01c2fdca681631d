"""Optimization loop: Adam with gradient clipping, KL annealing, checkpoints.

The anneal weight rises linearly from 0 to 1 over kl_anneal_steps to keep
the KL terms from crushing the latents early (the usual degeneration
guard). Training is deterministic given the seed: batch order and latent
noise are derived statelessly from (seed, step), so resuming from a
checkpoint reproduces the uninterrupted run.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Parameter, no_grad
from .corpus import Conversation, pack_batch
from .model import DialogueModel, ElboBreakdown, ModelConfig
from .nn import RandomNoise, ZeroNoise

CHECKPOINT_FORMAT_VERSION = 1

METRICS_HEADER = ["step", "loss", "recon_nll", "kl_c", "kl_p", "kl_q", "kl_r", "lambda"]


class TrainingError(Exception):
    """Raised when optimization cannot continue (e.g. non-finite loss)."""


class CheckpointError(Exception):
    """Raised for unreadable, truncated, or version-mismatched checkpoints."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 1.0
    batch_size: int = 32
    kl_anneal_steps: int = 15000
    max_steps: int = 1000
    seed: int = 0
    checkpoint_every: int = 100

    def __post_init__(self):
        for name in ("learning_rate", "beta1", "beta2", "epsilon", "clip_norm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("batch_size", "kl_anneal_steps", "max_steps", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def anneal_weight(step: int, kl_anneal_steps: int) -> float:
    """Linear KL annealing schedule, min(1, step / kl_anneal_steps)."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if kl_anneal_steps < 1:
        raise ValueError("kl_anneal_steps must be >= 1")
    return min(1.0, step / kl_anneal_steps)


def clip_gradients(params: list[Parameter], clip_norm: float) -> float:
    """Scale gradients to a global L2 norm of at most clip_norm; returns pre-clip norm."""
    sq = 0.0
    for p in params:
        if p.grad is None:
            continue
        if not np.all(np.isfinite(p.grad)):
            raise TrainingError(f"non-finite gradient in parameter {p.name!r}")
        sq += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = math.sqrt(sq)
    if norm > clip_norm and norm > 0:
        scale = clip_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class Adam:
    """Standard bias-corrected Adam over the tape's Parameters."""

    def __init__(self, params: list[Parameter], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in params}
        self.v = {p.name: np.zeros_like(p.data) for p in params}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for p in self.params:
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[p.name]
            v = self.v[p.name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / bias1
            v_hat = v / bias2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.m:
            out[f"adam_m/{name}"] = self.m[name]
            out[f"adam_v/{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int) -> None:
        self.t = t
        for name in self.m:
            self.m[name] = np.array(arrays[f"adam_m/{name}"])
            self.v[name] = np.array(arrays[f"adam_v/{name}"])


@dataclass
class TrainState:
    global_step: int = 0
    best_validation_loss: float = math.inf


# -- checkpointing ------------------------------------------------------------


def save_checkpoint(model: DialogueModel, path, optimizer: Adam | None = None,
                    state: TrainState | None = None, vocab_hash: str = "") -> None:
    """Versioned container: config, vocab hash, parameters, optimizer moments, step."""
    state = state or TrainState()
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "dtype": model.dtype.name,
        "vocab_hash": vocab_hash,
        "global_step": state.global_step,
        "best_validation_loss": state.best_validation_loss,
        "adam_t": optimizer.t if optimizer is not None else 0,
    }
    arrays = {f"param/{name}": p.data for name, p in model.named_parameters().items()}
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        np.savez(f, __meta__=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)
    os.replace(tmp, path)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return (meta, arrays); refuses version mismatches and truncated files."""
    try:
        with np.load(path) as z:
            arrays = {k: z[k] for k in z.files}
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "__meta__" not in arrays:
        raise CheckpointError(f"checkpoint {path} has no metadata header")
    meta = json.loads(arrays.pop("__meta__").tobytes().decode("utf-8"))
    version = meta.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format version {version}, this build reads {CHECKPOINT_FORMAT_VERSION}"
        )
    return meta, arrays


def load_checkpoint(path) -> tuple[DialogueModel, TrainState, dict]:
    """Rebuild the model (bit-exact parameters) and training state from disk."""
    meta, arrays = read_checkpoint(path)
    config = ModelConfig(**meta["config"])
    model = DialogueModel(config, dtype=np.dtype(meta["dtype"]))
    params = {k.removeprefix("param/"): v for k, v in arrays.items() if k.startswith("param/")}
    model.load_state(params)
    state = TrainState(
        global_step=meta["global_step"],
        best_validation_loss=meta.get("best_validation_loss", math.inf),
    )
    return model, state, {"meta": meta, "arrays": arrays}


def file_sha256(path) -> str:
    import hashlib

    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_model_for_inference(checkpoint_path, vocab_path=None):
    """Load (model, vocabulary, meta) for generation/serving.

    The vocabulary defaults to vocab.txt next to the checkpoint; its hash is
    verified against the one recorded at training time when present.
    """
    from .corpus import Vocabulary

    model, _, raw = load_checkpoint(checkpoint_path)
    if vocab_path is None:
        vocab_path = os.path.join(os.path.dirname(os.path.abspath(checkpoint_path)), "vocab.txt")
    if not os.path.exists(vocab_path):
        raise CheckpointError(f"vocabulary file not found at {vocab_path}")
    recorded = raw["meta"].get("vocab_hash", "")
    if recorded and file_sha256(vocab_path) != recorded:
        raise CheckpointError(
            f"vocabulary {vocab_path} does not match the one this checkpoint was trained with"
        )
    vocabulary = Vocabulary.load(vocab_path)
    if vocabulary.vocab_size != model.config.vocab_size:
        raise CheckpointError(
            f"vocabulary size {vocabulary.vocab_size} != model vocab_size {model.config.vocab_size}"
        )
    return model, vocabulary, raw["meta"]


# -- training loop -------------------------------------------------------------


@dataclass
class TrainResult:
    final_checkpoint: str
    best_checkpoint: str | None
    metrics_path: str
    steps_run: int
    last_loss: float
    state: TrainState = field(repr=False, default_factory=TrainState)


def _epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7919, epoch]))
    return rng.permutation(n)


def _step_noise(seed: int, step: int) -> RandomNoise:
    return RandomNoise(np.random.default_rng(np.random.SeedSequence([seed, 104729, step])))


def _mean_breakdown(breakdowns: list[ElboBreakdown]) -> dict[str, float]:
    n = len(breakdowns)
    return {
        "recon_nll": sum(b.recon_nll for b in breakdowns) / n,
        "kl_c": sum(b.kl_c for b in breakdowns) / n,
        "kl_p": sum(b.kl_p for b in breakdowns) / n,
        "kl_q": sum(b.kl_q for b in breakdowns) / n,
        "kl_r": sum(b.kl_r for b in breakdowns) / n,
    }


def validation_loss(model: DialogueModel, conversations: list[Conversation], batch_size: int = 32) -> float:
    """Teacher-forced loss at lambda=1 with posterior-mean latents; no gradients.

    Aggregates through the same reduction as the training loss so the two
    estimates agree on a shared batch.
    """
    if not conversations:
        raise TrainingError("validation set is empty")
    total = 0.0
    with no_grad():
        for start in range(0, len(conversations), batch_size):
            chunk = conversations[start : start + batch_size]
            batch = pack_batch(chunk)
            loss, _ = model.elbo_batch(batch, ZeroNoise(), anneal_weight=1.0)
            total += float(loss.data) * len(chunk)
    return total / len(conversations)


def train(
    model: DialogueModel,
    train_set: list[Conversation],
    valid_set: list[Conversation],
    config: TrainConfig,
    out_dir,
    resume_from: str | None = None,
    log_every: int = 1,
    vocab_hash: str = "",
) -> TrainResult:
    """Run the optimization loop; writes metrics CSV and checkpoints under out_dir."""
    if not train_set or not valid_set:
        raise TrainingError("train and validation splits must be nonempty")
    os.makedirs(out_dir, exist_ok=True)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    last_path = os.path.join(out_dir, "last.ckpt")
    best_path = os.path.join(out_dir, "best.ckpt")

    params = model.parameters()
    optimizer = Adam(params, lr=config.learning_rate, beta1=config.beta1,
                     beta2=config.beta2, epsilon=config.epsilon)
    state = TrainState()
    if resume_from is not None:
        loaded_model, state, raw = load_checkpoint(resume_from)
        if loaded_model.config.to_dict() != model.config.to_dict():
            raise CheckpointError("resume checkpoint was trained with a different model config")
        model.load_state({k.removeprefix("param/"): v for k, v in raw["arrays"].items() if k.startswith("param/")})
        params = model.parameters()
        optimizer = Adam(params, lr=config.learning_rate, beta1=config.beta1,
                         beta2=config.beta2, epsilon=config.epsilon)
        optimizer.load_state_arrays(raw["arrays"], raw["meta"].get("adam_t", state.global_step))

    write_header = not (resume_from and os.path.exists(metrics_path))
    metrics_file = open(metrics_path, "w" if write_header else "a", newline="")
    writer = csv.writer(metrics_file)
    if write_header:
        writer.writerow(METRICS_HEADER)

    n = len(train_set)
    steps_per_epoch = (n + config.batch_size - 1) // config.batch_size
    last_loss = math.nan
    wrote_best = os.path.exists(best_path) if resume_from else False
    try:
        while state.global_step < config.max_steps:
            step = state.global_step
            epoch, batch_idx = divmod(step, steps_per_epoch)
            order = _epoch_order(n, config.seed, epoch)
            chosen = order[batch_idx * config.batch_size : (batch_idx + 1) * config.batch_size]
            batch = pack_batch([train_set[i] for i in chosen])

            lam = anneal_weight(step, config.kl_anneal_steps)
            optimizer.zero_grad()
            loss, breakdowns = model.elbo_batch(batch, _step_noise(config.seed, step), lam)
            loss_value = float(loss.data)
            if not math.isfinite(loss_value):
                raise TrainingError(
                    f"non-finite loss {loss_value} at step {step}; last good checkpoint: {last_path}"
                )
            loss.backward()
            clip_gradients(params, config.clip_norm)
            optimizer.step()
            state.global_step = step + 1
            last_loss = loss_value

            if state.global_step % log_every == 0 or state.global_step == config.max_steps:
                mean = _mean_breakdown(breakdowns)
                writer.writerow(
                    [state.global_step, f"{loss_value:.6f}", f"{mean['recon_nll']:.6f}",
                     f"{mean['kl_c']:.6f}", f"{mean['kl_p']:.6f}", f"{mean['kl_q']:.6f}",
                     f"{mean['kl_r']:.6f}", f"{lam:.6f}"]
                )
                metrics_file.flush()

            if state.global_step % config.checkpoint_every == 0 or state.global_step == config.max_steps:
                val = validation_loss(model, valid_set, config.batch_size)
                if val < state.best_validation_loss:
                    state.best_validation_loss = val
                    save_checkpoint(model, best_path, optimizer, state, vocab_hash)
                    wrote_best = True
                save_checkpoint(model, last_path, optimizer, state, vocab_hash)
    finally:
        metrics_file.close()

    save_checkpoint(model, last_path, optimizer, state, vocab_hash)
    return TrainResult(
        final_checkpoint=last_path,
        best_checkpoint=best_path if wrote_best else None,
        metrics_path=metrics_path,
        steps_run=state.global_step,
        last_loss=last_loss,
        state=state,
    )
