"""Base embeddings, per-source alignment and contrastive training."""

from knobrag.embed.align import MANUAL, QUESTION, AlignmentNetwork, align, load_checkpoint, save_checkpoint, source_of
from knobrag.embed.backends import HashingEmbedder, RemoteEmbedder, embed_base
from knobrag.embed.contrastive import (
    DEFAULT_LR,
    DEFAULT_TAU,
    TrainingTriple,
    info_nce_gradient,
    info_nce_loss,
    mine_training_pairs,
    train_alignment,
)
from knobrag.embed.vectors import DEFAULT_DIM, EmbeddingVector, cosine

__all__ = [
    "AlignmentNetwork", "DEFAULT_DIM", "DEFAULT_LR", "DEFAULT_TAU", "EmbeddingVector", "HashingEmbedder",
    "MANUAL", "QUESTION", "RemoteEmbedder", "TrainingTriple", "align", "cosine", "embed_base",
    "info_nce_gradient", "info_nce_loss", "load_checkpoint", "mine_training_pairs", "save_checkpoint",
    "source_of", "train_alignment",
]
