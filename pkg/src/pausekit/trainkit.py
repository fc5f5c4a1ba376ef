"""Training: loss assembly, class weights, Adam and the plateau schedule."""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from .corpus import CorpusStats, LabeledSentence
from .evalkit import sweep_threshold
from .models import PauseModel, PredictionOutput, encode_batch, mask_id, model_vocab_size, predict
from .nncore import NonFiniteError, TransformerEncoder, backward, bce_loss, lengths_to_mask, wce_loss
from .nncore.checkpoint import load_module, save_module
from .textnorm import Token, Vocabulary

log = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr0: float = 5e-5
    plateau_iters: int = 5000
    lr_decay: float = 0.2
    max_iters: int = 200_000
    eval_every: int = 500
    seed: int = 0
    beta_rp: float = 0.5
    beta_pip: float = 2.0

    def __post_init__(self):
        for f in ("batch_size", "lr0", "plateau_iters", "eval_every", "beta_rp", "beta_pip"):
            if not getattr(self, f) > 0:
                raise ValueError(f"{f} must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if not 0 < self.lr_decay < 1:
            raise ValueError("lr_decay must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class ClassWeights:
    rp_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    pip_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)


def compute_class_weights(stats: CorpusStats) -> ClassWeights:
    """Weight of category k = (# category-0 tokens) / (# category-k tokens).

    Category 0 keeps weight 1 and RP category 3 is pinned to 1.
    """
    def weights(counts, total, pin_last):
        zero = stats.tokens - total
        w = [1.0]
        for k, n in enumerate(counts, start=1):
            if k == 3 and pin_last:
                w.append(1.0)
            elif n == 0:
                if k == 3:
                    w.append(1.0)
                    continue
                raise ValueError(f"no category-{k} pauses in the training set")
            else:
                w.append(zero / n)
        return tuple(w)

    return ClassWeights(weights(stats.rp_counts, stats.rp_total, True),
                        weights(stats.pip_counts, stats.pip_total, False))


@dataclass
class Batch:
    ids: torch.Tensor
    lengths: torch.Tensor
    mask: torch.Tensor
    speaker_ids: torch.Tensor | None
    p_rp: torch.Tensor
    c_rp: torch.Tensor
    p_pip: torch.Tensor
    c_pip: torch.Tensor


def make_batch(sentences: Sequence[LabeledSentence], vocab: Vocabulary, model: PauseModel, dtype=torch.float32) -> Batch:
    ids, lengths = encode_batch([s.tokens for s in sentences], vocab)
    T = ids.shape[1]

    def pad(name, as_float):
        out = torch.zeros(len(sentences), T, dtype=dtype if as_float else torch.long)
        for b, s in enumerate(sentences):
            v = getattr(s, name)
            out[b, :len(v)] = torch.tensor(v, dtype=out.dtype)
        return out

    spk = model.speaker_ids([s.speaker for s in sentences]) if model.speaker_table is not None else None
    return Batch(ids, lengths, lengths_to_mask(lengths, T), spk,
                 pad("p_rp", True), pad("c_rp", False), pad("p_pip", True), pad("c_pip", False))


def total_loss(out: PredictionOutput, batch: Batch, weights: ClassWeights, arch: str):
    """Scalar training loss and its named parts.

    Position-only models use BCE on RP positions; CPI sums BCE and WCE terms
    for both pause kinds with equal weight.
    """
    if out.rp_prob.shape != batch.p_rp.shape:
        raise ValueError(f"output shape {tuple(out.rp_prob.shape)} != label shape {tuple(batch.p_rp.shape)}")
    parts = {"bce_rp": bce_loss(out.rp_prob, batch.p_rp.to(out.rp_prob.dtype), batch.mask)}
    if arch == "CPI":
        parts["wce_rp"] = wce_loss(out.rp_logits, batch.c_rp, weights.rp_weights, batch.mask)
        parts["bce_pip"] = bce_loss(out.pip_prob, batch.p_pip.to(out.pip_prob.dtype), batch.mask)
        parts["wce_pip"] = wce_loss(out.pip_logits, batch.c_pip, weights.pip_weights, batch.mask)
    return sum(parts.values()), parts


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@torch.no_grad()
def adam_step(params: dict[str, torch.Tensor], grads: dict[str, torch.Tensor], state: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update, in place, for every parameter in ``grads``."""
    names = list(grads)
    for name in names:
        p, g = params[name], grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)} for {name}")
        if name not in state.m:
            state.m[name] = torch.zeros_like(p)
            state.v[name] = torch.zeros_like(p)
    if not names:
        return state
    state.step += 1
    t = state.step
    c1 = 1 - state.beta1 ** t
    c2 = 1 - state.beta2 ** t
    ps = [params[n] for n in names]
    gs = [grads[n] for n in names]
    ms = [state.m[n] for n in names]
    vs = [state.v[n] for n in names]
    # multi-tensor kernels: m, v moments, then p -= lr * m_hat / (sqrt(v_hat) + eps)
    torch._foreach_mul_(ms, state.beta1)
    torch._foreach_add_(ms, gs, alpha=1 - state.beta1)
    torch._foreach_mul_(vs, state.beta2)
    torch._foreach_addcmul_(vs, gs, gs, value=1 - state.beta2)
    denom = torch._foreach_sqrt(vs)
    torch._foreach_div_(denom, math.sqrt(c2))
    torch._foreach_add_(denom, state.eps)
    torch._foreach_addcdiv_(ps, ms, denom, value=-lr / c1)
    return state


def validation_metric(model: PauseModel, val_set: Sequence[LabeledSentence], vocab: Vocabulary,
                      config: TrainConfig) -> dict:
    """Best-threshold F on RP positions; CPI averages in the PIP F."""
    preds = predict(model, [s.tokens for s in val_set], [s.speaker for s in val_set], vocab)
    tokens = [t for s in val_set for t in s.tokens]
    rp = sweep_threshold(np.concatenate([p.rp_prob for p in preds]), [y for s in val_set for y in s.p_rp],
                         tokens, config.beta_rp, "rp")
    result = {"rp_f": rp.f, "rp_threshold": rp.threshold}
    if model.config.categorized:
        pip = sweep_threshold(np.concatenate([p.pip_prob for p in preds]), [y for s in val_set for y in s.p_pip],
                              tokens, config.beta_pip, "pip")
        result.update(pip_f=pip.f, pip_threshold=pip.threshold)
        result["metric"] = (rp.f + pip.f) / 2
    else:
        result["metric"] = rp.f
    return result


@dataclass
class TrainResult:
    best_state: dict
    best_metric: float
    best_iteration: int
    log: list[dict]
    final_lr: float


def _clone_state(model: nn.Module) -> dict:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def train(model: PauseModel, train_set: Sequence[LabeledSentence], val_set: Sequence[LabeledSentence],
          vocab: Vocabulary, config: TrainConfig, weights: ClassWeights | None = None,
          metric_fn: Callable[[PauseModel, int], dict] | None = None,
          log_fn: Callable[[dict], None] | None = None) -> TrainResult:
    """Mini-batch training with plateau learning-rate decay and best-model selection.

    The model is evaluated at iteration 0 and every ``eval_every`` iterations.
    When ``plateau_iters`` iterations pass without a strictly better
    validation metric the learning rate is multiplied by ``lr_decay`` and the
    count restarts.  The model is left holding the best parameters.
    ``metric_fn(model, iteration)`` replaces the validation pass when given.
    """
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be non-empty")
    if model.speaker_table is not None:
        known = set(model.speaker_table.speakers)
        missing = {s.speaker for s in list(train_set) + list(val_set)} - known
        if missing:
            raise ValueError(f"speakers missing from the model's table: {sorted(missing)[:5]}")
    weights = weights or ClassWeights()
    dtype = next(model.parameters()).dtype
    rng = np.random.default_rng(config.seed)
    params = dict(model.named_parameters())
    adam = AdamState()
    lr = config.lr0

    def evaluate(it):
        return metric_fn(model, it) if metric_fn else validation_metric(model, val_set, vocab, config)

    records: list[dict] = []
    running: dict[str, list[float]] = {}
    started = time.monotonic()

    def record(it, metrics, improved):
        rec = {"iteration": it, "lr": lr, "losses": {k: float(np.mean(v)) for k, v in running.items()},
               "metrics": metrics, "improved": improved, "elapsed_s": round(time.monotonic() - started, 3)}
        records.append(rec)
        running.clear()
        if log_fn:
            log_fn(rec)
        log.info("iter %d lr %.3g metric %.4f%s", it, lr, metrics["metric"], " *" if improved else "")

    metrics = evaluate(0)
    best_metric, best_iter, best_state = metrics["metric"], 0, _clone_state(model)
    last_improve = 0
    record(0, metrics, True)

    order = rng.permutation(len(train_set))
    cursor = 0
    model.train()
    for it in range(1, config.max_iters + 1):
        if cursor + config.batch_size > len(order):
            order = rng.permutation(len(train_set))
            cursor = 0
        idx = order[cursor:cursor + config.batch_size]
        cursor += config.batch_size
        batch = make_batch([train_set[i] for i in idx], vocab, model, dtype)
        try:
            out = model(batch.ids, batch.lengths, batch.speaker_ids)
        except NonFiniteError as e:
            raise TrainingDivergedError(f"iteration {it}: {e}") from e
        loss, parts = total_loss(out, batch, weights, model.config.arch)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at iteration {it}: "
                                        + ", ".join(f"{k}={v.item():.4g}" for k, v in parts.items()))
        adam_step(params, backward(loss, model), adam, lr)
        for k, v in parts.items():
            running.setdefault(k, []).append(v.item())
        running.setdefault("total", []).append(loss.item())

        if it % config.eval_every == 0 or it == config.max_iters:
            metrics = evaluate(it)
            improved = metrics["metric"] > best_metric
            if improved:
                best_metric, best_iter, best_state = metrics["metric"], it, _clone_state(model)
                last_improve = it
            elif it - last_improve >= config.plateau_iters:
                lr *= config.lr_decay
                last_improve = it
            record(it, metrics, improved)

    model.load_state_dict(best_state)
    return TrainResult(best_state, best_metric, best_iter, records, lr)


def write_log(path: str | Path, records: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


# masked-token pre-training of the transformer encoder

@dataclass
class MlmResult:
    encoder: TransformerEncoder
    head: nn.Linear
    losses: list[float]


def _mask_batch(ids: torch.Tensor, lengths: torch.Tensor, rate: float, mask_token: int, rng: np.random.Generator):
    valid = lengths_to_mask(lengths, ids.shape[1]).numpy()
    chosen = (rng.random(ids.shape) < rate) & valid
    for b in range(ids.shape[0]):
        if not chosen[b].any():
            chosen[b, rng.integers(int(lengths[b]))] = True
    chosen = torch.from_numpy(chosen)
    masked = ids.clone()
    masked[chosen] = mask_token
    return masked, chosen


def mlm_pretrain(sentences: Sequence[Sequence[Token]], vocab: Vocabulary, encoder: TransformerEncoder,
                 config: TrainConfig, mask_rate: float = 0.15) -> MlmResult:
    """Train ``encoder`` to recover masked tokens (all chosen positions get the mask id)."""
    if not mask_rate > 0:
        raise ValueError("mask_rate must be positive: an empty mask set gives no loss")
    if encoder.token_emb.num_embeddings != model_vocab_size(vocab):
        raise ValueError(f"encoder has {encoder.token_emb.num_embeddings} token rows, "
                         f"tokenizer vocabulary needs {model_vocab_size(vocab)}")
    rng = np.random.default_rng(config.seed)
    head = nn.Linear(encoder.output_dim, model_vocab_size(vocab)).to(next(encoder.parameters()).dtype)
    holder = nn.ModuleDict({"encoder": encoder, "head": head})
    params = dict(holder.named_parameters())
    adam = AdamState()
    losses = []
    m_id = mask_id(vocab)
    for it in range(config.max_iters):
        idx = rng.choice(len(sentences), size=min(config.batch_size, len(sentences)), replace=False)
        ids, lengths = encode_batch([sentences[i] for i in idx], vocab)
        masked, chosen = _mask_batch(ids, lengths, mask_rate, m_id, rng)
        logits = head(encoder(masked, lengths))
        loss = nn.functional.cross_entropy(logits[chosen], ids[chosen])
        adam_step(params, backward(loss, holder), adam, config.lr0)
        losses.append(loss.item())
    return MlmResult(encoder, head, losses)


@torch.no_grad()
def mlm_accuracy(encoder: TransformerEncoder, head: nn.Linear, sentences: Sequence[Sequence[Token]],
                 vocab: Vocabulary, mask_rate: float = 0.15, seed: int = 1) -> float:
    rng = np.random.default_rng(seed)
    ids, lengths = encode_batch(sentences, vocab)
    masked, chosen = _mask_batch(ids, lengths, mask_rate, mask_id(vocab), rng)
    pred = head(encoder(masked, lengths)).argmax(-1)
    return float((pred[chosen] == ids[chosen]).double().mean())


def save_encoder(path: str | Path, encoder: TransformerEncoder) -> None:
    save_module(path, encoder)


def load_encoder(path: str | Path, model: PauseModel) -> PauseModel:
    """Load pre-trained encoder weights into ``model``, keeping its trainable setting."""
    if not isinstance(model.encoder, TransformerEncoder):
        raise ValueError("model has no transformer encoder")
    trainable = model.config.encoder_trainable
    load_module(path, model.encoder)
    for p in model.encoder.parameters():
        p.requires_grad_(trainable)
    return model


def config_to_dict(config) -> dict:
    return asdict(config)


def copy_model(model: PauseModel) -> PauseModel:
    return copy.deepcopy(model)
