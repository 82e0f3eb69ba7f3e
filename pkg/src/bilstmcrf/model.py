"""The full tagger: features -> char Bi-LSTM -> 2 x Bi-LSTM -> CRF."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from . import tensor as T
from .config import Config
from .crf import CrfParams, batch_nll, emissions, viterbi_batch
from .data import Batch, Inventories
from .features import EmbeddingTable, one_hot_matrix, random_table
from .recurrent import BiLstmLayer, char_features, encode_batch
from .tensor import Tensor


class NerModel:
    def __init__(self, config: Config, inventories: Inventories, word_table: EmbeddingTable,
                 rng: np.random.Generator):
        dtype = np.dtype(config.dtype).type
        if word_table.dim != config.word_dim:
            raise ValueError(f"word table has dim {word_table.dim}, config says {config.word_dim}")
        self.config = config
        # word ids index the embedding table, so its vocab replaces the corpus one
        self.inventories = Inventories(word_table.vocab, inventories.chars, inventories.pos,
                                       inventories.chunk, inventories.ner)
        self.word_table = word_table
        self.char_table = random_table(inventories.chars, config.char_dim, rng, trainable=True,
                                       dtype=dtype)
        self.char_layer = BiLstmLayer.init(config.char_dim, config.hidden_char, rng, dtype)
        self.pos_onehot = one_hot_matrix(inventories.pos, dtype)
        self.chunk_onehot = one_hot_matrix(inventories.chunk, dtype)

        self.char_feature_dim = self.char_layer.output_size
        self.input_dim = (config.word_dim + len(inventories.pos) + len(inventories.chunk)
                          + self.char_feature_dim)
        self.layers = [BiLstmLayer.init(self.input_dim, config.hidden_word, rng, dtype),
                       BiLstmLayer.init(2 * config.hidden_word, config.hidden_word, rng, dtype)]
        self.output_dim = self.layers[-1].output_size
        self.crf = CrfParams.init(len(inventories.ner), self.output_dim, rng, dtype)

        assert self.char_feature_dim == 2 * config.hidden_char
        assert self.output_dim == 2 * config.hidden_word

    @property
    def tags(self) -> list[str]:
        return list(self.inventories.ner)

    def named_parameters(self) -> "OrderedDict[str, Tensor]":
        out = OrderedDict()
        out["word_embeddings"] = self.word_table.rows
        out["char_embeddings"] = self.char_table.rows
        for k, v in self.char_layer.named().items():
            out[f"char_lstm.{k}"] = v
        for i, layer in enumerate(self.layers, start=1):
            for k, v in layer.named().items():
                out[f"word_lstm{i}.{k}"] = v
        for k, v in self.crf.named().items():
            out[f"crf.{k}"] = v
        for k, v in out.items():
            v.name = k
        return out

    def trainable_parameters(self) -> list[Tensor]:
        return [p for p in self.named_parameters().values() if p.requires_grad]

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.zero_grad()

    def features(self, batch: Batch, training: bool = False, rng=None) -> Tensor:
        cfg = self.config
        mask = batch.mask
        words = self.word_table.rows[batch.word_ids]
        dtype = words.dtype
        pos = Tensor(self.pos_onehot[batch.pos_ids], dtype=dtype)
        chunk = Tensor(self.chunk_onehot[batch.chunk_ids], dtype=dtype)

        n_valid = int(mask.sum())
        chars = char_features(self.char_table, self.char_layer, batch.char_ids[mask],
                              batch.char_lengths[mask], cfg.dropout_char, training, rng)
        # scatter per-word vectors back to [B, T]; padding reads a zero row
        padded = T.concat([chars, Tensor(np.zeros((1, self.char_feature_dim)), dtype=dtype)],
                          axis=0)
        slot = np.full(mask.shape, n_valid, dtype=np.int64)
        slot[mask] = np.arange(n_valid)
        return T.concat([words, pos, chunk, padded[slot]], axis=-1)

    def emissions(self, batch: Batch, training: bool = False, rng=None) -> Tensor:
        x = self.features(batch, training, rng)
        h = encode_batch(self.layers, x, batch.lengths, self.config.dropout_bilstm, training, rng)
        return emissions(self.crf, h)

    def loss(self, batch: Batch, training: bool = False, rng=None) -> Tensor:
        """Summed sentence NLL over the batch (divide by token count for the mean)."""
        e = self.emissions(batch, training, rng)
        return batch_nll(e, batch.tag_ids, batch.mask, self.crf).sum()

    def predict(self, batch: Batch) -> list[list[str]]:
        e = self.emissions(batch, training=False)
        paths = viterbi_batch(e.data, batch.lengths, self.crf.transition.data)
        tags = self.tags
        return [[tags[k] for k in path] for path in paths]
