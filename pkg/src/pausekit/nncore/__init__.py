"""Tensor layers, losses, parameter handling and checkpoints for the pause models."""

from .checkpoint import CheckpointError, load_module, read_records, save_module, write_records
from .layers import (
    BiLSTM, LSTM, LSTMCell, MultiHeadSelfAttention, NonFiniteError, SigmoidHead, SoftmaxHead,
    StaticEmbedding, TransformerBlock, TransformerEncoder, check_finite, lengths_to_mask,
    reverse_padded, splice_window,
)
from .losses import bce_loss, wce_loss
from .params import GraphConsumedError, backward, param_set, set_trainable, trainable_names

__all__ = [
    "BiLSTM", "LSTM", "LSTMCell", "MultiHeadSelfAttention", "NonFiniteError", "SigmoidHead",
    "SoftmaxHead", "StaticEmbedding", "TransformerBlock", "TransformerEncoder", "check_finite",
    "lengths_to_mask", "reverse_padded", "splice_window", "bce_loss", "wce_loss",
    "GraphConsumedError", "backward", "param_set", "set_trainable", "trainable_names",
    "CheckpointError", "load_module", "read_records", "save_module", "write_records",
]
