import itertools
import math

import numpy as np
import pytest

from bilstmcrf import tensor as T
from bilstmcrf.crf import (
    CrfParams, batch_log_partition, batch_nll, batch_score, log_partition, marginals, nll_loss,
    score_sequence, transition_table, viterbi_decode,
)
from bilstmcrf.tensor import Tape, Tensor


def make_params(K, rng=None, scale=1.0):
    inner = np.zeros((K, K)) if rng is None else rng.normal(scale=scale, size=(K, K))
    start = None if rng is None else rng.normal(scale=scale, size=K)
    end = None if rng is None else rng.normal(scale=scale, size=K)
    return CrfParams(Tensor(np.zeros((K, 1)), dtype=np.float64), Tensor(np.zeros(K), dtype=np.float64),
                     Tensor(transition_table(inner, start, end), requires_grad=True, dtype=np.float64))


def direct_score(e, tags, trans):
    """Term-by-term sum, written independently of the library."""
    K = e.shape[1]
    s = trans[K, tags[0]]
    for i, y in enumerate(tags):
        s += e[i, y]
        if i:
            s += trans[tags[i - 1], y]
    return s + trans[tags[-1], K + 1]


def brute_force(e, trans):
    n, K = e.shape
    seqs = list(itertools.product(range(K), repeat=n))
    scores = np.array([direct_score(e, s, trans) for s in seqs])
    m = scores.max()
    return seqs, scores, m + math.log(np.exp(scores - m).sum())


def library_scores(e, p):
    """score_sequence for every tag sequence at once (same per-row arithmetic)."""
    n, K = e.shape
    seqs = np.array(list(itertools.product(range(K), repeat=n)))
    tiled = Tensor(np.broadcast_to(e, (len(seqs), n, K)).copy())
    return seqs, batch_score(tiled, seqs, np.ones(seqs.shape, dtype=bool), p).data


def random_instances(count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(1, 7))
        K = int(rng.integers(1, 6))
        yield rng.normal(scale=2.0, size=(n, K)), make_params(K, rng, 2.0)


class TestScoreSequence:
    def test_single_position(self):
        assert score_sequence(Tensor([[2.0, 5.0]]), [1], make_params(2)).item() == 5.0

    def test_all_zero(self):
        p = make_params(3)
        e = Tensor(np.zeros((4, 3)))
        for tags in itertools.product(range(3), repeat=4):
            assert score_sequence(e, tags, p).item() == 0.0

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(1)
        p = make_params(3, rng)
        e = rng.normal(size=(4, 3))
        for tags in itertools.product(range(3), repeat=4):
            got = score_sequence(Tensor(e), tags, p).item()
            assert got == pytest.approx(direct_score(e, tags, p.transition.data), abs=1e-12)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            score_sequence(Tensor(np.zeros((2, 3))), [0, 3], make_params(3))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            score_sequence(Tensor(np.zeros((2, 3))), [0], make_params(3))


class TestLogPartition:
    def test_two_tags_one_position(self):
        assert log_partition(Tensor([[0.0, 0.0]]), make_params(2)).item() == pytest.approx(math.log(2))

    def test_uniform(self):
        got = log_partition(Tensor(np.zeros((3, 4))), make_params(4)).item()
        assert got == pytest.approx(3 * math.log(4), abs=1e-12)
        assert got == pytest.approx(4.158883, abs=1e-6)

    def test_brute_force(self):
        for e, p in random_instances(100):
            _, _, logz = brute_force(e, p.transition.data)
            assert abs(log_partition(Tensor(e), p).item() - logz) < 1e-8

    def test_large_scores_stable(self):
        rng = np.random.default_rng(3)
        e = rng.uniform(-1e4, 1e4, size=(5, 4))
        p = make_params(4)
        _, scores, logz = brute_force(e, p.transition.data)
        assert log_partition(Tensor(e, dtype=np.float64), p).item() == pytest.approx(logz, rel=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            log_partition(Tensor(np.zeros((0, 3))), make_params(3))

    def test_normalization(self):
        for e, p in random_instances(20, seed=4):
            _, scores = library_scores(e, p)
            logz = log_partition(Tensor(e), p).item()
            total = np.exp(scores - logz).sum()
            assert abs(total - 1) < 1e-10

    def test_bounds_every_sequence(self):
        for e, p in random_instances(30, seed=7):
            seqs, scores, _ = brute_force(e, p.transition.data)
            logz = log_partition(Tensor(e), p).item()
            if e.shape[1] == 1:
                assert logz == pytest.approx(scores[0], abs=1e-12)
            else:
                assert np.all(logz > scores)

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        e = rng.normal(size=(4, 3))
        p = make_params(3, rng)
        shifted = e.copy()
        shifted[2] += 1.75
        assert log_partition(Tensor(shifted), p).item() == pytest.approx(
            log_partition(Tensor(e), p).item() + 1.75, abs=1e-12)
        tags = [0, 2, 1, 1]
        assert score_sequence(Tensor(shifted), tags, p).item() == pytest.approx(
            score_sequence(Tensor(e), tags, p).item() + 1.75, abs=1e-12)
        assert viterbi_decode(Tensor(shifted), p)[0] == viterbi_decode(Tensor(e), p)[0]

    def test_masked_batch_matches_single(self):
        rng = np.random.default_rng(6)
        p = make_params(3, rng)
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(4, 3))
        e = np.zeros((2, 4, 3))
        e[0, :2], e[1] = a, b
        mask = np.array([[1, 1, 0, 0], [1, 1, 1, 1]], dtype=bool)
        got = batch_log_partition(Tensor(e), mask, p).data
        assert got[0] == pytest.approx(log_partition(Tensor(a), p).item(), abs=1e-12)
        assert got[1] == pytest.approx(log_partition(Tensor(b), p).item(), abs=1e-12)


class TestNll:
    def test_uniform(self):
        got = nll_loss(Tensor(np.zeros((2, 3))), [0, 1], make_params(3)).item()
        assert got == pytest.approx(2 * math.log(3), abs=1e-12)

    def test_dominant_gold(self):
        e = np.zeros((3, 4))
        gold = [2, 0, 3]
        e[range(3), gold] = 1e3
        assert nll_loss(Tensor(e, dtype=np.float64), gold, make_params(4)).item() < 1e-3

    def test_non_negative(self):
        rng = np.random.default_rng(2)
        for e, p in random_instances(30, seed=2):
            gold = rng.integers(0, e.shape[1], size=e.shape[0])
            assert nll_loss(Tensor(e), gold, p).item() >= -1e-12

    def test_emission_gradient_is_marginals_minus_gold(self, f64):
        rng = np.random.default_rng(8)
        p = make_params(4, rng)
        e = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
        gold = [1, 1, 3, 0, 2]
        with Tape() as tape:
            loss = nll_loss(e, gold, p)
        tape.backward(loss)
        expected = marginals(e, p)
        expected[range(5), gold] -= 1
        assert np.allclose(e.grad, expected, atol=1e-10)
        numeric = T.numerical_grad(lambda: nll_loss(e, gold, p), e)
        assert np.max(np.abs(e.grad - numeric)) < 1e-5

    @pytest.mark.parametrize("seed", range(10))
    def test_gradients_match_finite_differences(self, f64, seed):
        rng = np.random.default_rng(seed)
        n, K = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        p = make_params(K, rng)
        e = Tensor(rng.normal(size=(n, K)), requires_grad=True)
        gold = rng.integers(0, K, size=n)
        # the -inf BOS column / EOS row never receive gradient, so check a finite view
        assert T.grad_check(lambda: nll_loss(e, gold, p), [e]) < 1e-4
        p.transition.zero_grad()
        with Tape() as tape:
            loss = nll_loss(e, gold, p)
        tape.backward(loss)
        g = p.transition.grad
        assert np.all(g[:, K] == 0) and np.all(g[K + 1] == 0)
        flat = p.transition.data
        numeric = np.zeros_like(flat)
        for i in range(K + 1):
            for j in list(range(K)) + [K + 1]:
                if i == K and j == K + 1:
                    continue
                orig = flat[i, j]
                flat[i, j] = orig + 1e-5
                hi = nll_loss(e, gold, p).item()
                flat[i, j] = orig - 1e-5
                lo = nll_loss(e, gold, p).item()
                flat[i, j] = orig
                numeric[i, j] = (hi - lo) / 2e-5
        finite = np.isfinite(flat)
        rel = np.abs(g - numeric)[finite] / np.maximum(np.abs(g) + np.abs(numeric), 1e-8)[finite]
        assert rel.max() < 1e-4

    def test_batch_nll_sums_sentences(self):
        rng = np.random.default_rng(1)
        p = make_params(3, rng)
        e = rng.normal(size=(2, 3, 3))
        tags = np.array([[0, 1, 2], [2, 2, 0]])
        mask = np.array([[1, 1, 1], [1, 1, 0]], dtype=bool)
        got = batch_nll(Tensor(e), tags, mask, p).data
        assert got[0] == pytest.approx(nll_loss(Tensor(e[0]), tags[0], p).item(), abs=1e-12)
        assert got[1] == pytest.approx(nll_loss(Tensor(e[1, :2]), tags[1, :2], p).item(), abs=1e-12)


class TestViterbi:
    def test_zero_transitions_is_argmax(self):
        rng = np.random.default_rng(0)
        e = rng.normal(size=(6, 4))
        assert viterbi_decode(Tensor(e), make_params(4))[0] == list(np.argmax(e, axis=1))

    def test_tie_break(self):
        path, score = viterbi_decode(Tensor(np.zeros((2, 3))), make_params(3))
        assert path == [0, 0] and score == 0.0

    def test_brute_force(self):
        for e, p in random_instances(100, seed=1):
            seqs, lib_scores = library_scores(e, p)
            path, score = viterbi_decode(Tensor(e), p)
            assert score == lib_scores.max()
            assert score_sequence(Tensor(e), path, p).item() == score
            best_direct = max(direct_score(e, s, p.transition.data) for s in seqs)
            assert score == pytest.approx(best_direct, abs=1e-12)

    def test_dominates_gold(self):
        rng = np.random.default_rng(3)
        for e, p in random_instances(30, seed=3):
            gold = rng.integers(0, e.shape[1], size=e.shape[0])
            assert viterbi_decode(Tensor(e), p)[1] >= score_sequence(Tensor(e), gold, p).item()

    def test_empty(self):
        with pytest.raises(ValueError):
            viterbi_decode(Tensor(np.zeros((0, 2))), make_params(2))


def test_init_marks_virtual_tags():
    p = CrfParams.init(3, 5, np.random.default_rng(0))
    t = p.transition.data
    assert np.all(np.isneginf(t[:, 3])) and np.all(np.isneginf(t[4, :]))
    assert np.all(np.isfinite(t[:3, :3]))
