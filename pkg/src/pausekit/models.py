"""Pause-prediction architectures and the pause decision rule.

* ``Baseline``: static subword embeddings -> (BiLSTMP -> splice) x N -> sigmoid.
* ``BaselineSpk``: as Baseline, with a resized speaker embedding added after
  the first splicing window.
* ``RPI``: encoder, speaker embedding added at every position, two BiLSTM
  decoder layers, sigmoid pause probability.
* ``CPI``: shared encoder + speaker; one BiLSTM decoder branch for RPs and one
  for PIPs, each with a probability head and a 4-way category head.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .nncore import (
    BiLSTM, SigmoidHead, SoftmaxHead, StaticEmbedding, TransformerEncoder, check_finite,
    set_trainable, splice_window,
)
from .nncore.checkpoint import load_module, save_module
from .textnorm import Token, Vocabulary

ARCHS = ("Baseline", "BaselineSpk", "RPI", "CPI")
ENCODERS = ("static", "transformer")
PAD_ID = 0
CONFIG_FORMAT = "pausekit-model"


class UnknownSpeakerError(KeyError):
    def __str__(self):
        return f"unknown speaker {self.args[0]!r}"


class ConfigMismatchError(ValueError):
    pass


@dataclass
class ModelConfig:
    arch: str = "RPI"
    vocab_size: int = 2
    speakers: list[str] = field(default_factory=list)
    encoder: str = "transformer"
    encoder_trainable: bool = True
    speaker_injection: bool = True
    subword_emb_dim: int = 300
    bilstmp_hidden: int = 512
    bilstmp_projection: int = 128
    baseline_layers: int = 2
    decoder_bilstm_hidden: int = 512
    decoder_layers: int = 2
    hidden_dim: int = 768
    splice_w: int = 7
    transformer_layers: int = 2
    transformer_heads: int = 4
    transformer_ff_dim: int = 256
    positional: str = "learned"
    max_len: int = 512

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        for f in ("vocab_size", "subword_emb_dim", "bilstmp_hidden", "bilstmp_projection", "baseline_layers",
                  "decoder_bilstm_hidden", "decoder_layers", "hidden_dim", "transformer_layers",
                  "transformer_heads", "transformer_ff_dim", "max_len"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")
        if self.splice_w < 0:
            raise ValueError("splice_w must be non-negative")
        if len(set(self.speakers)) != len(self.speakers):
            raise ValueError("duplicate speaker ids")
        if self.uses_speakers and not self.speakers:
            raise ValueError(f"{self.arch} with speaker injection needs a speaker roster")
        if self.arch in ("RPI", "CPI"):
            enc_dim = self.hidden_dim if self.encoder == "transformer" else self.subword_emb_dim
            if enc_dim != self.hidden_dim:
                raise ValueError(f"encoder dim {enc_dim} != speaker/hidden dim {self.hidden_dim}")
            if self.encoder == "transformer" and self.hidden_dim % self.transformer_heads:
                raise ValueError("hidden_dim must be divisible by transformer_heads")

    @property
    def uses_speakers(self) -> bool:
        return self.arch == "BaselineSpk" or (self.arch in ("RPI", "CPI") and self.speaker_injection)

    @property
    def categorized(self) -> bool:
        return self.arch == "CPI"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigMismatchError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class PredictionOutput:
    """Per-token outputs; tensors are (B, T) or (B, T, 4)."""

    rp_prob: torch.Tensor
    rp_logits: torch.Tensor | None = None
    pip_prob: torch.Tensor | None = None
    pip_logits: torch.Tensor | None = None

    @property
    def rp_cat(self):
        return None if self.rp_logits is None else torch.softmax(self.rp_logits, dim=-1)

    @property
    def pip_cat(self):
        return None if self.pip_logits is None else torch.softmax(self.pip_logits, dim=-1)


class SpeakerTable(nn.Module):
    """One randomly initialized, trainable vector per known speaker."""

    def __init__(self, speakers: Sequence[str], dim: int):
        super().__init__()
        self.speakers = list(speakers)
        self._index = {s: i for i, s in enumerate(self.speakers)}
        self.embedding = nn.Embedding(len(self.speakers), dim)
        nn.init.normal_(self.embedding.weight, std=0.1)

    def index(self, speaker: str) -> int:
        try:
            return self._index[speaker]
        except KeyError:
            raise UnknownSpeakerError(speaker) from None

    def forward(self, speaker_ids: torch.Tensor) -> torch.Tensor:
        return self.embedding(speaker_ids)


class Decoder(nn.Module):
    def __init__(self, input_dim: int, hidden: int, layers: int):
        super().__init__()
        dims = [input_dim] + [2 * hidden] * layers
        self.layers = nn.ModuleList(BiLSTM(dims[i], hidden) for i in range(layers))

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    def forward(self, x, lengths):
        for layer in self.layers:
            x = layer(x, lengths)
        return x


class Branch(nn.Module):
    """Decoder plus probability head (and category head when categorized)."""

    def __init__(self, input_dim: int, hidden: int, layers: int, categorized: bool):
        super().__init__()
        self.decoder = Decoder(input_dim, hidden, layers)
        self.prob = SigmoidHead(self.decoder.output_dim)
        self.category = SoftmaxHead(self.decoder.output_dim) if categorized else None

    def forward(self, x, lengths):
        h = self.decoder(x, lengths)
        return self.prob(h), (self.category(h) if self.category is not None else None)


class PauseModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config
        self.speaker_table = None
        if c.arch in ("Baseline", "BaselineSpk"):
            self.encoder = StaticEmbedding(c.vocab_size, c.subword_emb_dim)
            self.bilstmp = nn.ModuleList()
            dim = c.subword_emb_dim
            for _ in range(c.baseline_layers):
                layer = BiLSTM(dim, c.bilstmp_hidden, peephole=True, projection_dim=c.bilstmp_projection)
                self.bilstmp.append(layer)
                dim = layer.output_dim * (2 * c.splice_w + 1)
            self.spliced_dim = 2 * c.bilstmp_projection * (2 * c.splice_w + 1)
            if c.arch == "BaselineSpk":
                self.speaker_table = SpeakerTable(c.speakers, c.hidden_dim)
                self.speaker_proj = nn.Linear(c.hidden_dim, self.spliced_dim)
            self.head = SigmoidHead(dim)
        else:
            if c.encoder == "transformer":
                self.encoder = TransformerEncoder(c.vocab_size, c.hidden_dim, c.transformer_layers,
                                                  c.transformer_heads, c.transformer_ff_dim, c.max_len, c.positional)
            else:
                self.encoder = StaticEmbedding(c.vocab_size, c.subword_emb_dim)
            if c.speaker_injection:
                self.speaker_table = SpeakerTable(c.speakers, c.hidden_dim)
            self.rp = Branch(c.hidden_dim, c.decoder_bilstm_hidden, c.decoder_layers, c.categorized)
            self.pip = Branch(c.hidden_dim, c.decoder_bilstm_hidden, c.decoder_layers, True) if c.categorized else None
        if not c.encoder_trainable:
            set_trainable(self.encoder, False)

    def speaker_ids(self, speakers: Sequence[str]) -> torch.Tensor:
        if self.speaker_table is None:
            raise ValueError(f"{self.config.arch} model has no speaker table")
        return torch.tensor([self.speaker_table.index(s) for s in speakers], dtype=torch.long)

    def encode(self, ids: torch.Tensor, lengths: torch.Tensor, speaker_ids: torch.Tensor | None = None):
        """Encoder hidden sequence, with the speaker vector added when given."""
        h = self.encoder(ids, lengths)
        if speaker_ids is not None and self.speaker_table is not None and self.config.arch in ("RPI", "CPI"):
            spk = self.speaker_table(speaker_ids)
            if spk.shape[-1] != h.shape[-1]:
                raise ValueError(f"encoder dim {h.shape[-1]} != speaker dim {spk.shape[-1]}")
            h = h + spk[:, None, :]
        return h

    def forward(self, ids: torch.Tensor, lengths: torch.Tensor,
                speaker_ids: torch.Tensor | None = None) -> PredictionOutput:
        if ids.shape[1] == 0 or int(lengths.min()) <= 0:
            raise ValueError("empty sentence")
        if self.config.uses_speakers and self.config.arch != "BaselineSpk" and speaker_ids is None:
            raise ValueError(f"{self.config.arch} model needs speaker ids")
        if self.config.arch in ("Baseline", "BaselineSpk"):
            return PredictionOutput(self._baseline(ids, lengths, speaker_ids))
        h = check_finite(self.encode(ids, lengths, speaker_ids), "encoder output")
        rp_prob, rp_logits = self.rp(h, lengths)
        if self.pip is None:
            return PredictionOutput(rp_prob, rp_logits)
        pip_prob, pip_logits = self.pip(h, lengths)
        return PredictionOutput(rp_prob, rp_logits, pip_prob, pip_logits)

    def _baseline(self, ids, lengths, speaker_ids):
        c = self.config
        x = self.encoder(ids)
        for n, layer in enumerate(self.bilstmp):
            x = splice_window(layer(x, lengths), c.splice_w, lengths)
            if n == 0 and speaker_ids is not None and self.speaker_table is not None:
                x = x + self.speaker_proj(self.speaker_table(speaker_ids))[:, None, :]
        return self.head(x)

    @property
    def encoder_parameters(self) -> list[str]:
        return [f"encoder.{n}" for n, _ in self.encoder.named_parameters()]


def token_ids(tokens: Sequence[Token], vocab: Vocabulary) -> list[int]:
    """Model input ids; 0 is padding so vocabulary entry k maps to k + 1."""
    return [vocab.index(t.canonical) + 1 for t in tokens]


def model_vocab_size(vocab: Vocabulary) -> int:
    # padding + entries + mask token for pre-training
    return len(vocab) + 2


def mask_id(vocab: Vocabulary) -> int:
    return len(vocab) + 1


def encode_batch(token_lists: Sequence[Sequence[Token]], vocab: Vocabulary):
    """Padded id tensor and lengths for a batch of token sequences."""
    lengths = [len(t) for t in token_lists]
    if not lengths or min(lengths) == 0:
        raise ValueError("empty sentence in batch")
    ids = torch.full((len(token_lists), max(lengths)), PAD_ID, dtype=torch.long)
    for b, toks in enumerate(token_lists):
        ids[b, :len(toks)] = torch.tensor(token_ids(toks, vocab), dtype=torch.long)
    return ids, torch.tensor(lengths, dtype=torch.long)


@dataclass(frozen=True)
class SentencePrediction:
    """Numpy outputs for one sentence; category rows are distributions over 0..3."""

    rp_prob: np.ndarray
    rp_cat: np.ndarray | None = None
    pip_prob: np.ndarray | None = None
    pip_cat: np.ndarray | None = None


def split_predictions(out: PredictionOutput, lengths: torch.Tensor) -> list[SentencePrediction]:
    def rows(t, b, n):
        return None if t is None else t[b, :n].detach().cpu().double().numpy()

    rp_cat, pip_cat = out.rp_cat, out.pip_cat
    return [SentencePrediction(rows(out.rp_prob, b, n), rows(rp_cat, b, n), rows(out.pip_prob, b, n), rows(pip_cat, b, n))
            for b, n in enumerate(lengths.tolist())]


@torch.no_grad()
def predict(model: PauseModel, sentences: Sequence[Sequence[Token]], speakers: Sequence[str] | None,
            vocab: Vocabulary, batch_size: int = 64) -> list[SentencePrediction]:
    was_training = model.training
    model.eval()
    out = []
    try:
        for i in range(0, len(sentences), batch_size):
            chunk = sentences[i:i + batch_size]
            ids, lengths = encode_batch(chunk, vocab)
            spk = None
            if model.speaker_table is not None and speakers is not None:
                spk = model.speaker_ids(speakers[i:i + batch_size])
            out.extend(split_predictions(model(ids, lengths, spk), lengths))
    finally:
        model.train(was_training)
    return out


@dataclass(frozen=True)
class Decision:
    kind: str
    category: int | None = None


def decide(pred: SentencePrediction, tokens: Sequence[Token], rp_thresh: float = 0.5,
           pip_thresh: float = 0.5) -> list[Decision | None]:
    """Per-token pause decisions.

    A pause is emitted when its probability reaches the threshold; its
    category is the most probable of categories 1-3 (category 0 never wins,
    ties go to the lower category).  RPs are decided on last subwords of
    words, PIPs on punctuation tokens.
    """
    if len(pred.rp_prob) != len(tokens):
        raise ValueError("prediction length differs from token count")
    out: list[Decision | None] = []
    for i, tok in enumerate(tokens):
        dec = None
        if tok.is_punct:
            if pred.pip_prob is not None and pred.pip_prob[i] >= pip_thresh:
                dec = Decision("pip", _category(pred.pip_cat, i))
        elif tok.is_word_final and pred.rp_prob[i] >= rp_thresh:
            dec = Decision("rp", _category(pred.rp_cat, i))
        out.append(dec)
    return out


def _category(dist, i):
    if dist is None:
        return None
    return int(np.argmax(dist[i][1:4])) + 1


def save_model(directory: str | Path, model: PauseModel, vocab: Vocabulary,
               categorizer_thresholds: Sequence[int] | None = None, extra: dict | None = None) -> Path:
    """Write ``model.ckpt``, ``vocab.txt`` and the ``model.json`` sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_module(directory / "model.ckpt", model)
    vocab.save(directory / "vocab.txt")
    sidecar = {"format": CONFIG_FORMAT, "version": 1, "config": model.config.to_dict(),
               "checkpoint": "model.ckpt", "vocab": "vocab.txt", "unk_token": vocab.unk_token,
               "max_word_chars": vocab.max_word_chars,
               "categorizer_thresholds": list(categorizer_thresholds) if categorizer_thresholds else None}
    if extra:
        sidecar.update(extra)
    (directory / "model.json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return directory


def load_model(path: str | Path) -> tuple[PauseModel, Vocabulary, dict]:
    """Load from a model directory or its ``model.json`` sidecar."""
    path = Path(path)
    sidecar_path = path / "model.json" if path.is_dir() else path
    try:
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigMismatchError(f"{sidecar_path}: unreadable model config: {exc}") from None
    if sidecar.get("format") != CONFIG_FORMAT or sidecar.get("version") != 1:
        raise ConfigMismatchError(f"{sidecar_path}: not a version-1 model config")
    base = sidecar_path.parent
    vocab = Vocabulary.load(base / sidecar["vocab"], unk_token=sidecar.get("unk_token", "[UNK]"),
                            max_word_chars=sidecar.get("max_word_chars", 100))
    config = ModelConfig.from_dict(sidecar["config"])
    if config.vocab_size != model_vocab_size(vocab):
        raise ConfigMismatchError(f"config vocab_size {config.vocab_size} does not fit a {len(vocab)}-entry vocabulary")
    model = PauseModel(config)
    try:
        load_module(base / sidecar["checkpoint"], model)
    except ValueError as exc:
        raise ConfigMismatchError(str(exc)) from None
    if not config.encoder_trainable:
        set_trainable(model.encoder, False)
    return model, vocab, sidecar


def load_static_vectors(path: str | Path, vocab: Vocabulary, embedding: StaticEmbedding) -> int:
    """Fill rows of a static embedding from a ``token v1 v2 ...`` text file; returns rows set."""
    n = 0
    dim = embedding.output_dim
    with open(path, encoding="utf-8") as fh, torch.no_grad():
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected token and {dim} values")
            if parts[0] in vocab:
                embedding.table.weight[vocab.index(parts[0]) + 1] = torch.tensor([float(v) for v in parts[1:]])
                n += 1
    return n
