#!/usr/bin/env python3
# Train the hierarchical model on a pocket corpus, then generate: greedy with
# mean latents is deterministic, sampled latents give diverse responses for
# one fixed context.

import tempfile

import numpy as np

from csrr.corpus import Conversation, Utterance, build_vocabulary, encode_conversation, pack_batch
from csrr.inference import GenerationOptions, generate_response
from csrr.model import DialogueModel, ModelConfig
from csrr.training import TrainConfig, train

rng = np.random.default_rng(42)
words = [f"w{i}" for i in range(16)]
sentence = lambda k: " ".join(rng.choice(words, size=k))

vocab_seed = Conversation(utterances=tuple(Utterance(raw_text=" ".join(words)) for _ in range(4)))
vocab = build_vocabulary([vocab_seed], max_size=20)

texts = [[sentence(4), sentence(3), sentence(4), sentence(4)] for _ in range(10)]
# give one context two extra alternate responses: the latents must carry the choice
texts += [texts[0][:3] + [sentence(4)], texts[0][:3] + [sentence(3)]]
conversations = [
    encode_conversation(Conversation(utterances=tuple(Utterance(raw_text=t) for t in ts)), vocab, 8)
    for ts in texts
]

config = ModelConfig(vocab_size=vocab.vocab_size, hidden_dim=32, embed_dim=16, latent_dim=8,
                     pad_length=8, max_conv_length=10)
model = DialogueModel(config, seed=0, dtype=np.float32)
train_config = TrainConfig(learning_rate=2e-3, clip_norm=5.0, batch_size=12,
                           kl_anneal_steps=800, max_steps=2000, seed=7, checkpoint_every=500)

print("training 2000 steps on 12 conversations ...")
result = train(model, conversations, conversations, train_config, tempfile.mkdtemp())
print(f"done; final loss {result.last_loss:.4f}")

correct, total = model.token_accuracy(pack_batch(conversations))
print(f"teacher-forced token accuracy: {correct}/{total} = {correct/total:.1%}")

context = list(conversations[0].utterances[:-1])
print("\ncontext:")
for utt in context:
    print("   ", utt.raw_text)

greedy = generate_response(context, model, vocab, GenerationOptions(strategy="greedy", latent_mode="mean"))[0]
print("\ngreedy + mean latents (deterministic):", greedy.text)

print("\nsampled latents, greedy decoding (diversity from the latent hierarchy):")
seen = set()
for i in range(10):
    out = generate_response(context, model, vocab,
                            GenerationOptions(strategy="greedy", latent_mode="sample", seed=100 + i))[0]
    if out.text not in seen:
        seen.add(out.text)
        print(f"    draw {i:2d}: {out.text}   (sources: {out.latent_sources})")
print(f"{len(seen)} distinct responses in 10 draws")
