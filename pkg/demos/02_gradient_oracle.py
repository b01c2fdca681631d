#!/usr/bin/env python3
# The finite-difference oracle vs analytic gradients of the full training objective.
#
# The model is built at float64 on toy dimensions, the latent noise is frozen,
# and every head's parameters are perturbed coordinate-wise (subsampled here;
# the acceptance suite sweeps all coordinates).

import numpy as np

from csrr.corpus import Conversation, Utterance, Vocabulary, build_vocabulary, encode_conversation, pack_batch
from csrr.gradcheck import grad_check
from csrr.model import DialogueModel, ModelConfig
from csrr.nn import FrozenNoise

words = " ".join(f"w{i}" for i in range(8))
seed_conv = Conversation(utterances=tuple(Utterance(raw_text=words) for _ in range(4)))
vocab = build_vocabulary([seed_conv], max_size=12)

rng = np.random.default_rng(1)
def sentence():
    return " ".join(rng.choice([f"w{i}" for i in range(8)], size=int(rng.integers(2, 5))))

conversations = [
    encode_conversation(Conversation(utterances=tuple(Utterance(raw_text=sentence()) for _ in range(4))), vocab, 8)
    for _ in range(2)
]
batch = pack_batch(conversations)

config = ModelConfig(vocab_size=12, hidden_dim=8, embed_dim=6, latent_dim=4, pad_length=8)
model = DialogueModel(config, seed=0, dtype=np.float64)
noise = FrozenNoise.draw_all(np.random.default_rng(5), {k: (2, 4) for k in ("z_c", "z_p", "z_q", "z_r")})

report = grad_check(
    lambda: model.elbo_batch(batch, noise, anneal_weight=0.7)[0],
    model.parameters(),
    eps=1e-5,
    tolerance=1e-3,
    max_coords_per_param=8,  # drop this argument to sweep every coordinate
)
print(report.summary())
print("\nworst five parameter tensors by relative error:")
for check in sorted(report.checks, key=lambda c: -c.max_rel_err)[:5]:
    print(f"  {check.name:20s} rel err {check.max_rel_err:.2e} "
          f"(analytic {check.analytic:+.3e}, numeric {check.numeric:+.3e})")
