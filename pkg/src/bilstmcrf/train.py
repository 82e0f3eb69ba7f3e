"""Model construction, persistence, and the mini-batch training loop."""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import Config
from .data import Corpus, Inventories, TagInventoryError, batch_iter
from .evaluation import MetricsReport, f1_report
from .features import EmbeddingTable, Vocab, extend_table, load_embeddings, random_table
from .model import NerModel
from .optim import NadamState, lr_schedule, nadam_step
from .tensor import Tape, Tensor

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


def _rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init_seq, drop_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(drop_seq)


def build_model(config: Config, train: Corpus, word_table: EmbeddingTable | None = None,
                rng: np.random.Generator | None = None) -> NerModel:
    """Fresh model whose inventories come from ``train``.

    Without ``word_table`` (or an ``embeddings`` path in the config) word
    vectors are initialised from the UNK range and trained with the model.
    """
    if rng is None:
        rng = _rngs(config.seed)[0]
    dtype = np.dtype(config.dtype).type
    inv = train.inventories
    words = [t.surface for s in train for t in s]
    if word_table is None and config.embeddings:
        word_table = load_embeddings(config.embeddings, rng, dtype=dtype)
    if word_table is None:
        word_table = random_table(Vocab(inv.words.to_list()), config.word_dim, rng,
                                  trainable=True, dtype=dtype)
    else:
        word_table = extend_table(word_table, words, rng)
        word_table = EmbeddingTable(word_table.vocab, word_table.dim,
                                    Tensor(word_table.rows.data, dtype=dtype),
                                    trainable=not config.freeze_embeddings)
    return NerModel(config, inv, word_table, rng)


def model_checkpoint(model: NerModel, opt: NadamState | None = None,
                     best_validation_loss: float | None = None, epoch: int | None = None) -> Checkpoint:
    named = model.named_parameters()
    tensors = OrderedDict((k, v.data.copy()) for k, v in named.items())
    opt_meta, opt_tensors = None, OrderedDict()
    if opt is not None:
        opt_meta = {"t": opt.t, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps}
        trainable = [k for k, v in named.items() if v.requires_grad]
        for k, m, v in zip(trainable, opt.m, opt.v):
            opt_tensors[f"m.{k}"] = m.copy()
            opt_tensors[f"v.{k}"] = v.copy()
    return Checkpoint(config=model.config.to_dict(), inventories=model.inventories.to_dict(),
                      tensors=tensors, optimizer=opt_meta, optimizer_tensors=opt_tensors,
                      best_validation_loss=best_validation_loss, epoch=epoch)


def save_model(model: NerModel, path, **kw) -> None:
    save_checkpoint(model_checkpoint(model, **kw), path, wide=model.config.dtype == "float64")


def model_from_checkpoint(ckpt: Checkpoint) -> NerModel:
    config = Config.from_dict(ckpt.config)
    inv = Inventories.from_dict(ckpt.inventories)
    dtype = np.dtype(config.dtype).type
    rows = ckpt.tensors["word_embeddings"]
    table = EmbeddingTable(inv.words, config.word_dim, Tensor(rows, dtype=dtype),
                           trainable=False)
    model = NerModel(config, inv, table, np.random.default_rng(0))
    named = model.named_parameters()
    if set(named) != set(ckpt.tensors):
        missing = sorted(set(named) ^ set(ckpt.tensors))
        raise ValueError(f"checkpoint tensors do not match the model: {missing}")
    for name, param in named.items():
        arr = ckpt.tensors[name]
        if arr.shape != param.shape:
            raise ValueError(f"{name}: checkpoint shape {arr.shape}, model expects {param.shape}")
        param.data = arr.astype(dtype)
    return model


def load_model(path) -> NerModel:
    return model_from_checkpoint(load_checkpoint(path))


def mean_loss(model: NerModel, corpus: Corpus, batch_size: int | None = None) -> float:
    """Mean per-token NLL in inference mode."""
    total, tokens = 0.0, 0
    for batch in batch_iter(corpus, batch_size or model.config.batch_size,
                            inventories=model.inventories):
        total += float(model.loss(batch).data)
        tokens += int(batch.mask.sum())
    return total / max(tokens, 1)


def predict(model: NerModel, corpus: Corpus, batch_size: int | None = None) -> list[list[str]]:
    out = []
    for batch in batch_iter(corpus, batch_size or model.config.batch_size,
                            inventories=model.inventories, strict_tags=False):
        out.extend(model.predict(batch))
    return out


def evaluate(model: NerModel, corpus: Corpus) -> MetricsReport:
    unknown = sorted({t.ner for s in corpus for t in s} - set(model.tags))
    if unknown:
        raise TagInventoryError(f"corpus tags {unknown} are not in the checkpoint's inventory {model.tags}")
    return f1_report(corpus.tags(), predict(model, corpus))


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    validation_loss: float
    lr: float

    def line(self) -> str:
        return f"{self.epoch}\t{self.train_loss!r}\t{self.validation_loss!r}\t{self.lr!r}"


@dataclass
class TrainResult:
    model: NerModel
    best_model: NerModel
    log: list[EpochLog] = field(default_factory=list)
    best_epoch: int = -1
    best_validation_loss: float = math.inf


def train(config: Config, train_corpus: Corpus, validation: Corpus,
          word_table: EmbeddingTable | None = None, checkpoint_path=None,
          on_epoch: Callable[[EpochLog], None] | None = None,
          stop_when: Callable[[NerModel, int], bool] | None = None) -> TrainResult:
    """Nadam mini-batch training with per-epoch validation-loss model selection.

    The best checkpoint goes to ``checkpoint_path`` (when given) and the
    last epoch to ``<stem>.final<suffix>`` beside it.
    """
    if len(train_corpus) == 0:
        raise TrainingError("training corpus is empty")
    if len(validation) == 0:
        raise TrainingError("validation corpus is empty")
    init_rng, drop_rng = _rngs(config.seed)
    model = build_model(config, train_corpus, word_table, init_rng)
    params = model.trainable_parameters()
    opt = NadamState.for_params(params)
    clip = config.clip_norm or None

    result = TrainResult(model=model, best_model=model)
    best_ckpt = None
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config.phase1_epochs, config.lr_phase1, config.lr_phase2)
        total, tokens = 0.0, 0
        for batch in batch_iter(train_corpus, config.batch_size, shuffle_seed=config.seed + epoch,
                                inventories=model.inventories):
            model.zero_grad()
            n = int(batch.mask.sum())
            with Tape() as tape:
                loss = model.loss(batch, training=True, rng=drop_rng)
                objective = loss * (1.0 / n)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"epoch {epoch}: non-finite training loss {value}")
            tape.backward(objective)
            nadam_step(params, [p.grad for p in params], opt, lr, clip)
            total += value
            tokens += n
        val = mean_loss(model, validation)
        if not math.isfinite(val):
            raise TrainingError(f"epoch {epoch}: non-finite validation loss {val}")
        entry = EpochLog(epoch, total / tokens, val, lr)
        result.log.append(entry)
        logger.info("epoch %d  train %.6f  validation %.6f  lr %g", epoch, entry.train_loss, val, lr)
        if on_epoch:
            on_epoch(entry)
        if val < result.best_validation_loss:
            result.best_validation_loss = val
            result.best_epoch = epoch
            best_ckpt = model_checkpoint(model, opt, val, epoch)
            if checkpoint_path:
                save_checkpoint(best_ckpt, checkpoint_path, wide=config.dtype == "float64")
        if stop_when and stop_when(model, epoch):
            break

    if checkpoint_path:
        p = Path(checkpoint_path)
        save_model(model, p.with_name(p.stem + ".final" + p.suffix), opt=opt,
                   best_validation_loss=result.best_validation_loss, epoch=result.log[-1].epoch)
    result.best_model = model_from_checkpoint(best_ckpt)
    return result
