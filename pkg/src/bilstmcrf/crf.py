"""Linear-chain CRF: path scores, forward-algorithm normalizer, Viterbi.

The transition table is ``(K + 2) x (K + 2)``; row ``K`` is the virtual
begin tag and column ``K + 1`` the virtual end tag.  Moves into BOS and out
of EOS are ``-inf`` and never read.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class CrfParams:
    emission_weight: Tensor
    emission_bias: Tensor
    transition: Tensor

    @property
    def num_tags(self) -> int:
        return self.emission_bias.shape[0]

    @property
    def bos(self) -> int:
        return self.num_tags

    @property
    def eos(self) -> int:
        return self.num_tags + 1

    def named(self) -> dict[str, Tensor]:
        return {"emission_weight": self.emission_weight, "emission_bias": self.emission_bias,
                "transition": self.transition}

    @classmethod
    def init(cls, num_tags: int, input_size: int, rng: np.random.Generator | None = None,
             dtype=None) -> "CrfParams":
        dtype = dtype or T.get_default_dtype()
        if rng is None:
            w = np.zeros((num_tags, input_size))
        else:
            bound = np.sqrt(6.0 / (num_tags + input_size))
            w = rng.uniform(-bound, bound, size=(num_tags, input_size))
        return cls(Tensor(w, requires_grad=True, dtype=dtype),
                   Tensor(np.zeros(num_tags), requires_grad=True, dtype=dtype),
                   Tensor(transition_table(np.zeros((num_tags, num_tags))), requires_grad=True,
                          dtype=dtype))


def transition_table(inner: np.ndarray, start=None, end=None) -> np.ndarray:
    """Embed a K x K tag-to-tag matrix (plus optional BOS/EOS scores) in the full table."""
    K = inner.shape[0]
    full = np.zeros((K + 2, K + 2))
    full[:K, :K] = inner
    if start is not None:
        full[K, :K] = start
    if end is not None:
        full[:K, K + 1] = end
    full[:, K] = -np.inf
    full[K + 1, :] = -np.inf
    return full


def emissions(p: CrfParams, features: Tensor) -> Tensor:
    """Project encoder outputs ``[..., D]`` to per-tag scores ``[..., K]``."""
    lead = features.shape[:-1]
    flat = features.reshape(-1, features.shape[-1])
    out = flat @ p.emission_weight.T + p.emission_bias
    return out.reshape(*lead, p.num_tags)


def _check_tags(tags: np.ndarray, K: int) -> None:
    if tags.size and (tags.min() < 0 or tags.max() >= K):
        raise IndexError(f"tag index out of range for {K} tags: {tags.tolist()}")


def batch_score(e: Tensor, tags: np.ndarray, mask: np.ndarray, p: CrfParams) -> Tensor:
    """Score of ``tags`` under emissions ``e[batch, time, K]``; returns ``[batch]``."""
    B, steps, K = e.shape
    tags = np.where(mask, tags, 0)
    _check_tags(tags, K)
    lengths = mask.sum(axis=1)
    rows = np.arange(B)
    m = mask.astype(e.dtype)

    emit = (e[rows[:, None], np.arange(steps)[None, :], tags] * m).sum(axis=1)
    trans = p.transition
    score = emit + trans[p.bos, tags[:, 0]]
    if steps > 1:
        pair = trans[tags[:, :-1], tags[:, 1:]] * m[:, 1:]
        score = score + pair.sum(axis=1)
    last = tags[rows, lengths - 1]
    return score + trans[last, p.eos]


def batch_log_partition(e: Tensor, mask: np.ndarray, p: CrfParams) -> Tensor:
    """Forward algorithm in log space; returns ``[batch]``."""
    B, steps, K = e.shape
    if steps == 0:
        raise ValueError("log_partition of empty emissions")
    trans = p.transition
    inner = trans[:K, :K]
    alpha = trans[p.bos, :K] + e[:, 0]
    for t in range(1, steps):
        nxt = T.logsumexp(alpha.reshape(B, K, 1) + inner, axis=1) + e[:, t]
        alpha = nxt if mask[:, t].all() else T.where(mask[:, t, None], nxt, alpha)
    return T.logsumexp(alpha + trans[:K, p.eos], axis=1)


def batch_nll(e: Tensor, tags: np.ndarray, mask: np.ndarray, p: CrfParams) -> Tensor:
    """Per-sentence negative log-likelihood ``[batch]``."""
    return batch_log_partition(e, mask, p) - batch_score(e, tags, mask, p)


def _single(e) -> tuple[Tensor, np.ndarray]:
    e = T.as_tensor(e)
    if e.ndim != 2 or e.shape[0] == 0:
        raise ValueError(f"emissions must be a non-empty [n, K] matrix, got {e.shape}")
    n = e.shape[0]
    return e.reshape(1, n, e.shape[1]), np.ones((1, n), dtype=bool)


def score_sequence(e, tags, p: CrfParams) -> Tensor:
    e3, mask = _single(e)
    tags = np.asarray(tags, dtype=np.int64)
    if tags.shape != (e3.shape[1],):
        raise ValueError(f"{len(tags)} tags for {e3.shape[1]} positions")
    return batch_score(e3, tags[None, :], mask, p)[0]


def log_partition(e, p: CrfParams) -> Tensor:
    e3, mask = _single(e)
    return batch_log_partition(e3, mask, p)[0]


def nll_loss(e, gold, p: CrfParams) -> Tensor:
    return log_partition(e, p) - score_sequence(e, gold, p)


def viterbi_batch(e: np.ndarray, lengths, transition: np.ndarray) -> list[list[int]]:
    """Best path per sentence; ties go to the lowest tag index."""
    e = np.asarray(e, dtype=np.float64)
    trans = np.asarray(transition, dtype=np.float64)
    K = e.shape[-1]
    inner = trans[:K, :K]
    paths = []
    for b, n in enumerate(lengths):
        delta = trans[K, :K] + e[b, 0]
        back = np.zeros((n, K), dtype=np.int64)
        for t in range(1, n):
            cand = delta[:, None] + inner
            back[t] = np.argmax(cand, axis=0)
            delta = cand[back[t], np.arange(K)] + e[b, t]
        best = int(np.argmax(delta + trans[:K, K + 1]))
        path = [best]
        for t in range(n - 1, 0, -1):
            best = int(back[t, best])
            path.append(best)
        paths.append(path[::-1])
    return paths


def viterbi_decode(e, p: CrfParams) -> tuple[list[int], float]:
    """Highest-scoring tag sequence and its score."""
    e = T.as_tensor(e)
    if e.ndim != 2 or e.shape[0] == 0:
        raise ValueError(f"emissions must be a non-empty [n, K] matrix, got {e.shape}")
    path = viterbi_batch(e.data[None], [e.shape[0]], p.transition.data)[0]
    return path, score_sequence(e, path, p).item()


def marginals(e, p: CrfParams) -> np.ndarray:
    """Posterior tag marginals ``[n, K]`` by forward-backward (numpy, float64)."""
    e = np.asarray(T.as_tensor(e).data, dtype=np.float64)
    trans = np.asarray(p.transition.data, dtype=np.float64)
    n, K = e.shape
    inner = trans[:K, :K]

    def lse(x, axis):
        m = x.max(axis=axis, keepdims=True)
        return (np.log(np.exp(x - m).sum(axis=axis, keepdims=True)) + m).squeeze(axis)

    alpha = np.zeros((n, K))
    beta = np.zeros((n, K))
    alpha[0] = trans[K, :K] + e[0]
    for t in range(1, n):
        alpha[t] = lse(alpha[t - 1][:, None] + inner, 0) + e[t]
    beta[n - 1] = trans[:K, K + 1]
    for t in range(n - 2, -1, -1):
        beta[t] = lse(inner + (e[t + 1] + beta[t + 1])[None, :], 1)
    logz = lse(alpha[n - 1] + beta[n - 1], 0)
    return np.exp(alpha + beta - logz)
