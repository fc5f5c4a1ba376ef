"""Recurrent, splicing and self-attention layers.

All sequence layers take batch-first tensors ``(B, T, D)`` together with the
true ``lengths`` of each sequence; positions past a sequence's length are
padding and never influence valid positions.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

__all__ = [
    "LSTMCell", "LSTM", "BiLSTM", "splice_window", "MultiHeadSelfAttention", "TransformerBlock",
    "TransformerEncoder", "StaticEmbedding", "SigmoidHead", "SoftmaxHead", "lengths_to_mask",
    "reverse_padded", "check_finite", "sinusoidal_positions",
]


class NonFiniteError(FloatingPointError):
    pass


def check_finite(x: torch.Tensor, where: str) -> torch.Tensor:
    if not torch.isfinite(x).all():
        raise NonFiniteError(f"non-finite values at {where}")
    return x


def lengths_to_mask(lengths: torch.Tensor, max_len: int | None = None) -> torch.Tensor:
    max_len = int(lengths.max()) if max_len is None else max_len
    return torch.arange(max_len, device=lengths.device)[None, :] < lengths[:, None]


def reverse_padded(x: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    """Reverse each sequence within its own length; padding stays at the end."""
    B, T = x.shape[:2]
    t = torch.arange(T)[None, :].expand(B, T)
    idx = torch.where(t < lengths[:, None], lengths[:, None] - 1 - t, t)
    return x.gather(1, idx[:, :, None].expand(-1, -1, x.shape[2]))


class LSTMCell(nn.Module):
    """LSTM cell with optional peepholes and recurrent projection.

    Gate order in the stacked weights is input, forget, cell, output.  With
    ``peephole`` the input and forget gates see the previous cell state and
    the output gate sees the new cell state (diagonal weights).  With
    ``projection_dim`` the recurrent output is ``W_proj @ h``.
    """

    def __init__(self, input_dim: int, hidden_dim: int, peephole: bool = False,
                 projection_dim: int | None = None):
        super().__init__()
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.peephole = peephole
        self.projection_dim = projection_dim
        rec = projection_dim or hidden_dim
        self.weight_ih = nn.Parameter(torch.empty(4 * hidden_dim, input_dim))
        self.weight_hh = nn.Parameter(torch.empty(4 * hidden_dim, rec))
        self.bias = nn.Parameter(torch.empty(4 * hidden_dim))
        if peephole:
            self.peep_i = nn.Parameter(torch.empty(hidden_dim))
            self.peep_f = nn.Parameter(torch.empty(hidden_dim))
            self.peep_o = nn.Parameter(torch.empty(hidden_dim))
        if projection_dim:
            self.weight_proj = nn.Parameter(torch.empty(projection_dim, hidden_dim))
        self.reset_parameters()

    @property
    def output_dim(self) -> int:
        return self.projection_dim or self.hidden_dim

    def reset_parameters(self) -> None:
        bound = 1.0 / math.sqrt(self.hidden_dim)
        for p in self.parameters():
            nn.init.uniform_(p, -bound, bound)

    def initial_state(self, batch: int) -> tuple[torch.Tensor, torch.Tensor]:
        w = self.weight_hh
        return (w.new_zeros(batch, self.output_dim), w.new_zeros(batch, self.hidden_dim))

    def step(self, x_proj: torch.Tensor, state):
        """One step from a precomputed input projection ``W_ih x + b``."""
        r_prev, c_prev = state
        gates = x_proj + r_prev @ self.weight_hh.t()
        i, f, g, o = gates.chunk(4, dim=-1)
        if self.peephole:
            i = i + self.peep_i * c_prev
            f = f + self.peep_f * c_prev
        c = torch.sigmoid(f) * c_prev + torch.sigmoid(i) * torch.tanh(g)
        if self.peephole:
            o = o + self.peep_o * c
        h = torch.sigmoid(o) * torch.tanh(c)
        r = h @ self.weight_proj.t() if self.projection_dim else h
        return r, (r, c)

    def forward(self, x: torch.Tensor, state=None):
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {x.shape[-1]}")
        if state is None:
            state = self.initial_state(x.shape[0])
        return self.step(x @ self.weight_ih.t() + self.bias, state)


class LSTM(nn.Module):
    """Unidirectional LSTM over a padded batch."""

    def __init__(self, input_dim: int, hidden_dim: int, peephole: bool = False,
                 projection_dim: int | None = None, reverse: bool = False):
        super().__init__()
        self.cell = LSTMCell(input_dim, hidden_dim, peephole, projection_dim)
        self.reverse = reverse

    @property
    def output_dim(self) -> int:
        return self.cell.output_dim

    def forward(self, x: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        if x.shape[1] == 0:
            raise ValueError("empty sequence")
        if self.reverse:
            x = reverse_padded(x, lengths)
        proj = x @ self.cell.weight_ih.t() + self.cell.bias
        state = self.cell.initial_state(x.shape[0])
        outs = []
        for t in range(x.shape[1]):
            out, state = self.cell.step(proj[:, t], state)
            outs.append(out)
        y = torch.stack(outs, dim=1)
        return reverse_padded(y, lengths) if self.reverse else y


class BiLSTM(nn.Module):
    """Forward and backward LSTMs, outputs concatenated per position."""

    def __init__(self, input_dim: int, hidden_dim: int, peephole: bool = False,
                 projection_dim: int | None = None):
        super().__init__()
        self.fwd = LSTM(input_dim, hidden_dim, peephole, projection_dim)
        self.bwd = LSTM(input_dim, hidden_dim, peephole, projection_dim, reverse=True)

    @property
    def output_dim(self) -> int:
        return 2 * self.fwd.output_dim

    def forward(self, x: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        if x.shape[1] == 0:
            raise ValueError("empty sequence")
        # both directions advance in one batched step (leading dim 2)
        cf, cb = self.fwd.cell, self.bwd.cell
        xb = reverse_padded(x, lengths)
        proj = torch.stack([x @ cf.weight_ih.t() + cf.bias, xb @ cb.weight_ih.t() + cb.bias])
        w_hh = torch.stack([cf.weight_hh.t(), cb.weight_hh.t()])
        if cf.peephole:
            p_i = torch.stack([cf.peep_i, cb.peep_i])[:, None]
            p_f = torch.stack([cf.peep_f, cb.peep_f])[:, None]
            p_o = torch.stack([cf.peep_o, cb.peep_o])[:, None]
        if cf.projection_dim:
            w_proj = torch.stack([cf.weight_proj.t(), cb.weight_proj.t()])
        B = x.shape[0]
        r = x.new_zeros(2, B, cf.output_dim)
        c = x.new_zeros(2, B, cf.hidden_dim)
        outs = []
        for t in range(x.shape[1]):
            gates = torch.baddbmm(proj[:, :, t], r, w_hh)
            i, f, g, o = gates.chunk(4, dim=-1)
            if cf.peephole:
                i = i + p_i * c
                f = f + p_f * c
            c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
            if cf.peephole:
                o = o + p_o * c
            h = torch.sigmoid(o) * torch.tanh(c)
            r = torch.bmm(h, w_proj) if cf.projection_dim else h
            outs.append(r)
        y = torch.stack(outs, dim=2)
        return torch.cat([y[0], reverse_padded(y[1], lengths)], dim=-1)


def splice_window(x: torch.Tensor, w: int, lengths: torch.Tensor | None = None) -> torch.Tensor:
    """Stack frames ``t-w .. t+w`` at every position, zero outside the sequence.

    Accepts ``(T, d)`` or ``(B, T, d)``; output width is ``(2w + 1) * d``.
    """
    single = x.dim() == 2
    if single:
        x = x[None]
    if lengths is not None:
        x = x * lengths_to_mask(lengths, x.shape[1])[:, :, None].to(x.dtype)
    T = x.shape[1]
    padded = F.pad(x, (0, 0, w, w))
    out = torch.cat([padded[:, j:j + T] for j in range(2 * w + 1)], dim=-1)
    return out[0] if single else out


def sinusoidal_positions(max_len: int, dim: int) -> torch.Tensor:
    pos = torch.arange(max_len, dtype=torch.float64)[:, None]
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    table = torch.zeros(max_len, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(pos * div)
    table[:, 1::2] = torch.cos(pos * div)[:, : dim // 2]
    return table


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, model_dim: int, heads: int):
        super().__init__()
        if model_dim % heads:
            raise ValueError(f"model_dim {model_dim} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = model_dim // heads
        self.q = nn.Linear(model_dim, model_dim)
        self.k = nn.Linear(model_dim, model_dim)
        self.v = nn.Linear(model_dim, model_dim)
        self.out = nn.Linear(model_dim, model_dim)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        B, T, D = x.shape

        def split(t):
            return t.view(B, T, self.heads, self.head_dim).transpose(1, 2)

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if mask is not None:
            scores = scores.masked_fill(~mask[:, None, None, :], -1e9)
        attn = torch.softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(B, T, D)
        return self.out(ctx)


class TransformerBlock(nn.Module):
    """Post-norm self-attention + GELU feed-forward block."""

    def __init__(self, model_dim: int, heads: int, ff_dim: int):
        super().__init__()
        self.attn = MultiHeadSelfAttention(model_dim, heads)
        self.norm1 = nn.LayerNorm(model_dim)
        self.ff1 = nn.Linear(model_dim, ff_dim)
        self.ff2 = nn.Linear(ff_dim, model_dim)
        self.norm2 = nn.LayerNorm(model_dim)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        x = self.norm1(x + self.attn(x, mask))
        return self.norm2(x + self.ff2(F.gelu(self.ff1(x))))


class TransformerEncoder(nn.Module):
    """Token + position embeddings followed by ``layers`` transformer blocks.

    ``positional`` is ``"learned"``, ``"sinusoidal"`` or ``"none"``.
    Index 0 is the padding token.
    """

    def __init__(self, vocab_size: int, model_dim: int = 64, layers: int = 2, heads: int = 4,
                 ff_dim: int = 256, max_len: int = 512, positional: str = "learned"):
        super().__init__()
        if model_dim % heads:
            raise ValueError(f"model_dim {model_dim} not divisible by heads {heads}")
        self.model_dim = model_dim
        self.positional = positional
        self.token_emb = nn.Embedding(vocab_size, model_dim, padding_idx=0)
        nn.init.normal_(self.token_emb.weight, std=0.02)
        with torch.no_grad():
            self.token_emb.weight[0].zero_()
        if positional == "learned":
            self.pos_emb = nn.Parameter(torch.randn(max_len, model_dim) * 0.02)
        elif positional == "sinusoidal":
            self.register_buffer("pos_table", sinusoidal_positions(max_len, model_dim).float(), persistent=False)
        elif positional != "none":
            raise ValueError(f"unknown positional encoding {positional!r}")
        self.emb_norm = nn.LayerNorm(model_dim)
        self.blocks = nn.ModuleList(TransformerBlock(model_dim, heads, ff_dim) for _ in range(layers))

    @property
    def output_dim(self) -> int:
        return self.model_dim

    def embed(self, ids: torch.Tensor) -> torch.Tensor:
        x = self.token_emb(ids)
        T = ids.shape[1]
        if self.positional == "learned":
            x = x + self.pos_emb[:T]
        elif self.positional == "sinusoidal":
            x = x + self.pos_table[:T].to(x.dtype)
        return self.emb_norm(x)

    def forward(self, ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        mask = lengths_to_mask(lengths, ids.shape[1])
        x = self.embed(ids)
        for block in self.blocks:
            x = block(x, mask)
        return x


class StaticEmbedding(nn.Module):
    """Lookup-table encoder (word2vec-style subword vectors)."""

    def __init__(self, vocab_size: int, dim: int = 300):
        super().__init__()
        self.table = nn.Embedding(vocab_size, dim, padding_idx=0)

    @property
    def output_dim(self) -> int:
        return self.table.embedding_dim

    def forward(self, ids: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
        return self.table(ids)


class SigmoidHead(nn.Module):
    """Per-position pause probability."""

    def __init__(self, input_dim: int):
        super().__init__()
        self.linear = nn.Linear(input_dim, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.linear(x)[..., 0])


class SoftmaxHead(nn.Module):
    """Per-position category logits; ``probs`` gives the softmax."""

    def __init__(self, input_dim: int, n_classes: int = 4):
        super().__init__()
        self.linear = nn.Linear(input_dim, n_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.linear(x)

    @staticmethod
    def probs(logits: torch.Tensor) -> torch.Tensor:
        return torch.softmax(logits, dim=-1)
