"""Constraint scorers: LM likelihoods, ranker losses, reward composition."""
import numpy as np
import pytest

import driftlab.autodiff as ad
from driftlab.constraints import (GROUNDING_SOFTMAX_SCALE, LMParams,
                                  RankerParams, RewardConfig, compose_reward,
                                  grounding_embedding, grounding_score,
                                  lm_corpus_nll, lm_loglikelihood,
                                  ranker_hinge_loss, ranker_recall,
                                  sentence_embedding, train_lm, train_ranker)
from driftlab.corpus import GROUNDING_DIM
from driftlab.errors import ConfigError, EncodingError, UsageError

from conftest import fd_check, word_vocab


def _np_gru(cell, x, h):
    z = 1 / (1 + np.exp(-(cell.wz.data @ x + cell.uz.data @ h + cell.bz.data)))
    r = 1 / (1 + np.exp(-(cell.wr.data @ x + cell.ur.data @ h + cell.br.data)))
    n = np.tanh(cell.wn.data @ x + cell.un.data @ (r * h) + cell.bn.data)
    return (1 - z) * h + z * n


# ---------------------------------------------------------------------------
# reward composition
# ---------------------------------------------------------------------------


def test_compose_reward_arithmetic():
    cfg = RewardConfig(beta_lm=0.1, beta_g=0.1)
    assert compose_reward(-2.0, -5.0, 0.0, cfg) == pytest.approx(-2.5)
    assert compose_reward(-2.0, -5.0, -5.0, cfg) == pytest.approx(-3.0)
    assert compose_reward(-2.0, None, None, cfg) == pytest.approx(-2.0)
    assert compose_reward(-2.0, -5.0, None, cfg) == pytest.approx(-2.5)
    big = RewardConfig(beta_lm=0.5, beta_g=2.0)
    assert compose_reward(1.0, 2.0, -1.0, big) == pytest.approx(0.0)


def test_reward_config_rejects_negative_weights():
    with pytest.raises(ConfigError):
        RewardConfig(beta_lm=-0.1)
    with pytest.raises(ConfigError):
        RewardConfig(alpha_b=-1.0)


# ---------------------------------------------------------------------------
# language model
# ---------------------------------------------------------------------------


def test_uniform_lm_closed_form():
    # All-zero parameters make every next-token distribution uniform, so a
    # sentence of n tokens scores exactly -(n + 1) * log|V| with the EOS step.
    vocab = word_vocab(6)
    lm = LMParams.zeroed(vocab, emb=3, hidden=4)
    v = len(vocab)
    for n in (1, 3, 5):
        got = float(lm_loglikelihood(lm, [4] * n).data)
        assert got == pytest.approx(-(n + 1) * np.log(v), abs=1e-12)
    assert lm_corpus_nll(lm, [[4, 5], [5]]) == pytest.approx(np.log(v), abs=1e-12)


def test_lm_loglikelihood_matches_manual_unroll():
    vocab = word_vocab(5)
    lm = LMParams.init(vocab, 3, 4, np.random.default_rng(2))
    tokens = [4, 6, 5]
    h = np.zeros(4)
    prev, total = 1, 0.0  # BOS
    for tok in tokens + [2]:  # EOS
        h = _np_gru(lm.cell, lm.emb.data[prev], h)
        logits = lm.w_out.data @ h + lm.b_out.data
        ls = logits - logits.max()
        ls -= np.log(np.exp(ls).sum())
        total += ls[tok]
        prev = tok
    got = float(lm_loglikelihood(lm, tokens).data)
    assert got == pytest.approx(total, abs=1e-12)


def test_lm_loglikelihood_validates_input():
    lm = LMParams.zeroed(word_vocab(4), 3, 4)
    with pytest.raises(UsageError):
        lm_loglikelihood(lm, [])
    with pytest.raises(EncodingError):
        lm_loglikelihood(lm, [99])


def test_lm_gradients_match_finite_differences():
    vocab = word_vocab(4)
    lm = LMParams.init(vocab, 3, 4, np.random.default_rng(3))
    fd_check(lambda: lm_loglikelihood(lm, [4, 5, 6]), lm.tensors())


def test_trained_lm_beats_uniform():
    vocab = word_vocab(6)
    rng = np.random.default_rng(4)
    # Markov-ish corpus: w_i followed by w_{i+1 mod 6}, so it is predictable.
    sentences = []
    for _ in range(60):
        start = int(rng.integers(0, 6))
        sentences.append([4 + (start + j) % 6 for j in range(4)])
    lm, dev_nll = train_lm(sentences, vocab, emb=8, hidden=16, epochs=12,
                           lr=0.01, batch_size=8, seed=5)
    assert dev_nll < np.log(len(vocab)) * 0.6


# ---------------------------------------------------------------------------
# grounding ranker
# ---------------------------------------------------------------------------


def _pairs(n, vocab, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        toks = [4 + (i + j) % (len(vocab) - 4) for j in range(3)]
        out.append((toks, rng.normal(size=GROUNDING_DIM)))
    return out


def test_embeddings_are_unit_norm():
    vocab = word_vocab(5)
    ranker = RankerParams.init(vocab, 3, 4, np.random.default_rng(6))
    t = sentence_embedding(ranker, [4, 5])
    v = grounding_embedding(ranker, np.ones(GROUNDING_DIM))
    assert np.linalg.norm(t.data) == pytest.approx(1.0, abs=1e-9)
    assert np.linalg.norm(v.data) == pytest.approx(1.0, abs=1e-9)


def test_hinge_loss_matches_brute_force():
    vocab = word_vocab(6)
    ranker = RankerParams.init(vocab, 3, 4, np.random.default_rng(7),
                               margin=0.2)
    batch = _pairs(4, vocab, seed=8)
    with ad.no_grad():
        got = float(ranker_hinge_loss(ranker, batch).data)
        txt = np.stack([sentence_embedding(ranker, t).data for t, _ in batch])
        img = np.stack([grounding_embedding(ranker, v).data for _, v in batch])
    s = txt @ img.T
    want = 0.0
    for i in range(4):
        neg_img = max(s[i, j] for j in range(4) if j != i)
        neg_txt = max(s[j, i] for j in range(4) if j != i)
        want += max(0.0, 0.2 + neg_img - s[i, i])
        want += max(0.0, 0.2 + neg_txt - s[i, i])
    assert got == pytest.approx(want, abs=1e-12)


def test_hinge_loss_needs_two_pairs():
    vocab = word_vocab(5)
    ranker = RankerParams.init(vocab, 3, 4, np.random.default_rng(9))
    with pytest.raises(UsageError):
        ranker_hinge_loss(ranker, _pairs(1, vocab))


def test_hinge_loss_gradients_match_finite_differences():
    # The hardest-negative choice is held fixed during differentiation; with
    # a clear margin between negatives the FD perturbation never flips it.
    vocab = word_vocab(5)
    ranker = RankerParams.init(vocab, 3, 4, np.random.default_rng(10))
    batch = _pairs(3, vocab, seed=11)
    fd_check(lambda: ranker_hinge_loss(ranker, batch), ranker.tensors(),
             rtol=5e-4, atol=1e-6)


def test_grounding_score_matches_softmax_by_hand():
    vocab = word_vocab(5)
    ranker = RankerParams.init(vocab, 3, 4, np.random.default_rng(12))
    cands = [np.random.default_rng(s).normal(size=GROUNDING_DIM)
             for s in range(4)]
    toks = [4, 5, 6]
    with ad.no_grad():
        t = sentence_embedding(ranker, toks).data
        sims = np.array([float(t @ grounding_embedding(ranker, c).data)
                         for c in cands])
        scores = [float(grounding_score(ranker, toks, c, cands).data)
                  for c in cands]
    scaled = GROUNDING_SOFTMAX_SCALE * sims
    logp = scaled - scaled.max()
    logp = logp - np.log(np.exp(logp).sum())
    np.testing.assert_allclose(scores, logp, atol=1e-10)
    assert np.exp(scores).sum() == pytest.approx(1.0, abs=1e-9)


def test_grounding_score_validates_candidates():
    vocab = word_vocab(5)
    ranker = RankerParams.init(vocab, 3, 4, np.random.default_rng(13))
    vec = np.ones(GROUNDING_DIM)
    with pytest.raises(UsageError):
        grounding_score(ranker, [4], vec, [vec])
    with pytest.raises(UsageError):
        grounding_score(ranker, [4], vec,
                        [np.zeros(GROUNDING_DIM), np.full(GROUNDING_DIM, 2.0)])


def test_grounding_score_gradients_match_finite_differences():
    vocab = word_vocab(5)
    ranker = RankerParams.init(vocab, 3, 4, np.random.default_rng(14))
    cands = [np.random.default_rng(s).normal(size=GROUNDING_DIM)
             for s in range(3)]
    fd_check(lambda: grounding_score(ranker, [4, 6], cands[1], cands),
             ranker.tensors())


def test_trained_ranker_retrieves_its_pairs():
    # Distinct token patterns paired with distinct vectors must become
    # retrievable: recall@1 over the training pool of 24 at least 0.9.
    vocab = word_vocab(24)
    rng = np.random.default_rng(15)
    pairs = []
    for i in range(24):
        toks = [4 + i, 4 + (i + 1) % 24, 4 + (i * 7) % 24]
        pairs.append((toks, rng.normal(size=GROUNDING_DIM)))
    ranker = train_ranker(pairs, vocab, emb=12, hidden=24, epochs=30, lr=0.01,
                          batch_size=8, seed=16)
    recall = ranker_recall(ranker, pairs)
    assert recall[1] >= 0.9
    assert recall[5] >= recall[1]
