"""LSTM cell, bidirectional encoder, and the character-level word encoder.

Gate order everywhere is forget, input, output, candidate.  The per-gate
matrices are kept as separate parameters (``W_f`` ... ``b_c``) and stacked
on the fly, so one matrix product per step serves all four gates.

Batched entry points take ``[batch, time, features]`` inputs with a boolean
``mask``; sequences are right-padded and padded steps leave the recurrent
state untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .features import EmbeddingTable
from .tensor import Tensor

GATES = ("f", "i", "o", "c")


@dataclass
class LstmParams:
    W_f: Tensor
    W_i: Tensor
    W_o: Tensor
    W_c: Tensor
    U_f: Tensor
    U_i: Tensor
    U_o: Tensor
    U_c: Tensor
    b_f: Tensor
    b_i: Tensor
    b_o: Tensor
    b_c: Tensor

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.U_f.shape[1]

    def named(self) -> dict[str, Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def num_scalars(self) -> int:
        return sum(t.data.size for t in self.named().values())

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator,
             dtype=None, forget_bias: float = 1.0) -> "LstmParams":
        dtype = dtype or T.get_default_dtype()

        def glorot(rows, cols):
            bound = np.sqrt(6.0 / (rows + cols))
            return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True, dtype=dtype)

        kw = {}
        for g in GATES:
            kw[f"W_{g}"] = glorot(hidden_size, hidden_size)
            kw[f"U_{g}"] = glorot(hidden_size, input_size)
            b = np.full(hidden_size, forget_bias if g == "f" else 0.0)
            kw[f"b_{g}"] = Tensor(b, requires_grad=True, dtype=dtype)
        return cls(**kw)

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int, dtype=None) -> "LstmParams":
        dtype = dtype or T.get_default_dtype()
        kw = {}
        for g in GATES:
            kw[f"W_{g}"] = Tensor(np.zeros((hidden_size, hidden_size)), requires_grad=True, dtype=dtype)
            kw[f"U_{g}"] = Tensor(np.zeros((hidden_size, input_size)), requires_grad=True, dtype=dtype)
            kw[f"b_{g}"] = Tensor(np.zeros(hidden_size), requires_grad=True, dtype=dtype)
        return cls(**kw)

    def _stacked(self):
        W = T.concat([self.W_f, self.W_i, self.W_o, self.W_c], axis=0)
        U = T.concat([self.U_f, self.U_i, self.U_o, self.U_c], axis=0)
        b = T.concat([self.b_f, self.b_i, self.b_o, self.b_c], axis=0)
        return W.T, U.T, b


@dataclass
class LstmState:
    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, hidden_size: int, batch: tuple = (), dtype=None) -> "LstmState":
        dtype = dtype or T.get_default_dtype()
        shape = tuple(batch) + (hidden_size,)
        return cls(Tensor(np.zeros(shape), dtype=dtype), Tensor(np.zeros(shape), dtype=dtype))


@dataclass
class BiLstmLayer:
    forward_params: LstmParams
    backward_params: LstmParams

    @property
    def output_size(self) -> int:
        return 2 * self.forward_params.hidden_size

    def named(self) -> dict[str, Tensor]:
        out = {f"fwd.{k}": v for k, v in self.forward_params.named().items()}
        out.update({f"bwd.{k}": v for k, v in self.backward_params.named().items()})
        return out

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator, dtype=None):
        return cls(LstmParams.init(input_size, hidden_size, rng, dtype),
                   LstmParams.init(input_size, hidden_size, rng, dtype))


def _cell(W_t: Tensor, xu: Tensor, prev: LstmState, H: int, mask=None) -> LstmState:
    z = xu + prev.h @ W_t
    ifo = T.sigmoid(z[..., : 3 * H])
    f, i, o = ifo[..., :H], ifo[..., H: 2 * H], ifo[..., 2 * H:]
    c_tilde = T.tanh(z[..., 3 * H:])
    c = f * prev.c + i * c_tilde
    h = o * T.tanh(c)
    if mask is not None:
        # padded rows keep their previous state
        h = T.where(mask[:, None], h, prev.h)
        c = T.where(mask[:, None], c, prev.c)
    return LstmState(h, c)


def lstm_step(p: LstmParams, x_t, prev: LstmState) -> LstmState:
    """One application of the LSTM cell to input ``x_t`` (any leading batch shape)."""
    x_t = T.as_tensor(x_t)
    if x_t.shape[-1] != p.input_size:
        raise T.ShapeError(
            f"lstm_step: input has {x_t.shape[-1]} features, U matrices expect {p.input_size}")
    W_t, U_t, b = p._stacked()
    return _cell(W_t, x_t @ U_t + b, prev, p.hidden_size)


def run_lstm(p: LstmParams, x: Tensor, mask: np.ndarray | None = None):
    """Run over ``x[batch, time, in]``; returns (per-step hidden list, final state)."""
    B, steps, n_in = x.shape
    if steps == 0:
        raise ValueError("cannot encode an empty sequence")
    if n_in != p.input_size:
        raise T.ShapeError(f"LSTM input has {n_in} features, expected {p.input_size}")
    H = p.hidden_size
    W_t, U_t, b = p._stacked()
    xu = ((x.reshape(B * steps, n_in) @ U_t) + b).reshape(B, steps, 4 * H)
    state = LstmState.zeros(H, (B,), x.dtype)
    hs = []
    for t in range(steps):
        m = None if mask is None or mask[:, t].all() else mask[:, t]
        state = _cell(W_t, xu[:, t], state, H, m)
        hs.append(state.h)
    return hs, state


def lstm_encode(p: LstmParams, seq) -> list[Tensor]:
    """Hidden states h_1..h_n of an unbatched sequence from the zero state."""
    if len(seq) == 0:
        raise ValueError("cannot encode an empty sequence")
    x = T.stack([T.as_tensor(v) for v in seq], axis=0)
    hs, _ = run_lstm(p, x.reshape(1, *x.shape))
    return [h[0] for h in hs]


def _reverse_index(lengths: np.ndarray, steps: int) -> np.ndarray:
    """Per-row index that reverses each valid prefix and leaves padding in place."""
    t = np.arange(steps)[None, :]
    L = lengths[:, None]
    return np.where(t < L, L - 1 - t, t)


def bilstm_batch(layer: BiLstmLayer, x: Tensor, lengths: np.ndarray):
    """Bidirectional pass over right-padded ``x``.

    Returns ``(outputs[batch, time, 2H], final_forward_h, final_backward_h)``.
    """
    B, steps, _ = x.shape
    lengths = np.asarray(lengths)
    if lengths.min() < 1:
        raise ValueError("cannot encode an empty sequence")
    mask = np.arange(steps)[None, :] < lengths[:, None]
    rows = np.arange(B)[:, None]
    rev = _reverse_index(lengths, steps)

    hs_f, fin_f = run_lstm(layer.forward_params, x, mask)
    hs_b, fin_b = run_lstm(layer.backward_params, x[rows, rev], mask)
    out_f = T.stack(hs_f, axis=1)
    out_b = T.stack(hs_b, axis=1)[rows, rev]
    return T.concat([out_f, out_b], axis=-1), fin_f.h, fin_b.h


def bilstm_encode(layer: BiLstmLayer, seq) -> list[Tensor]:
    if len(seq) == 0:
        raise ValueError("cannot encode an empty sequence")
    x = T.stack([T.as_tensor(v) for v in seq], axis=0)
    out, _, _ = bilstm_batch(layer, x.reshape(1, *x.shape), np.array([len(seq)]))
    return [out[0, t] for t in range(len(seq))]


def char_features(char_table: EmbeddingTable, char_layer: BiLstmLayer, char_ids: np.ndarray,
                  char_lengths: np.ndarray, dropout_rate: float, training: bool, rng=None) -> Tensor:
    """Character-derived vectors for a flat batch of words.

    ``char_ids`` is ``[words, max_chars]`` (padded), the result is
    ``[words, 2 * hidden_char]``: final forward state then final backward state.
    """
    emb = T.dropout(char_table.rows[char_ids], dropout_rate, training, rng)
    _, h_f, h_b = bilstm_batch(char_layer, emb, char_lengths)
    return T.concat([h_f, h_b], axis=-1)


def char_word_vector(word: str, char_table: EmbeddingTable, char_layer: BiLstmLayer,
                     dropout_rate: float = 0.0, training: bool = False, rng=None) -> Tensor:
    if not word:
        raise ValueError("cannot build a character vector for an empty word")
    ids = np.array([[char_table.vocab.lookup(ch) for ch in word]])
    return char_features(char_table, char_layer, ids, np.array([len(word)]),
                         dropout_rate, training, rng)[0]


def encode_batch(layers, x: Tensor, lengths: np.ndarray, dropout_rate: float,
                 training: bool, rng=None) -> Tensor:
    """Dropout then Bi-LSTM, once per layer; ``[batch, time, 2 * hidden_word]`` out."""
    h = x
    for layer in layers:
        h = T.dropout(h, dropout_rate, training, rng)
        h, _, _ = bilstm_batch(layer, h, lengths)
    return h


def encode_sentence(layers, sentence, dropout_rate: float = 0.5, training: bool = False,
                    rng=None) -> list[Tensor]:
    """Per-token encoder outputs for one sentence of word representations."""
    if len(sentence) == 0:
        raise ValueError("cannot encode an empty sentence")
    x = T.stack([T.as_tensor(v) for v in sentence], axis=0)
    out = encode_batch(layers, x.reshape(1, *x.shape), np.array([len(sentence)]),
                       dropout_rate, training, rng)
    return [out[0, t] for t in range(len(sentence))]
