"""Hierarchical latent-variable recurrent dialogue model, end to end.

Corpus handling, the three-level latent model with its training objective,
generation, embedding-based evaluation metrics, a CLI, and a chat service.
"""

from .corpus import (
    Batch,
    Conversation,
    CorpusError,
    Utterance,
    Vocabulary,
    build_vocabulary,
    encode_conversation,
    load_corpus,
    make_batches,
    split_corpus,
    tokenize,
)
from .gradcheck import grad_check
from .inference import GenerationOptions, Session, batch_generate, generate_response, infer_latents
from .metrics import (
    EmbeddingTable,
    EvalReport,
    distinct_n,
    embedding_average,
    embedding_extrema,
    embedding_greedy,
    evaluate,
    load_embeddings,
)
from .model import (
    ContextState,
    DialogueModel,
    ElboBreakdown,
    LatentBundle,
    ModelConfig,
    count_parameters,
)
from .nn import (
    FrozenNoise,
    GaussianParams,
    RandomNoise,
    ZeroNoise,
    bigru_encode,
    gaussian_kl,
    gaussian_sample,
    gru_step,
    mlp_apply,
)
from .training import (
    Adam,
    TrainConfig,
    TrainingError,
    anneal_weight,
    clip_gradients,
    load_checkpoint,
    save_checkpoint,
    train,
    validation_loss,
)

__version__ = "0.1.0"
