"""Frozen scorers that constrain the pivot channel, and the reward mixer.

Two models: a recurrent language model over pivot sentences (syntactic
constraint) and a retrieval ranker pairing pivot sentences with grounding
vectors (semantic constraint).  Both are pretrained on broad pivot-language
data, then held fixed while the agents fine-tune; their scores enter the
reward as R = logp_B + beta_lm * lm_score + beta_g * grounding_score.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import GRUCell, Tensor
from .corpus import GROUNDING_DIM, Vocab
from .errors import ConfigError, EncodingError, UsageError
from .optim import AdamState, adam_step, clip_global_norm


@dataclass
class RewardConfig:
    """Reward mixing betas and the objective term weights for Agent A."""

    beta_lm: float = 0.1
    beta_g: float = 0.1
    alpha_pg: float = 1.0
    alpha_entr: float = 0.01
    alpha_b: float = 0.1

    def __post_init__(self):
        for name in ("beta_lm", "beta_g", "alpha_pg", "alpha_entr", "alpha_b"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")


def compose_reward(logp_b: float, lm_score: float | None,
                   g_score: float | None, cfg: RewardConfig) -> float:
    r = logp_b
    if lm_score is not None:
        r += cfg.beta_lm * lm_score
    if g_score is not None:
        r += cfg.beta_g * g_score
    return r


# ---------------------------------------------------------------------------
# language model
# ---------------------------------------------------------------------------


@dataclass
class LMParams:
    emb: Tensor
    cell: GRUCell
    w_out: Tensor
    b_out: Tensor
    vocab: Vocab

    @classmethod
    def init(cls, vocab: Vocab, emb: int, hidden: int,
             rng: np.random.Generator) -> "LMParams":
        return cls(
            emb=ad.param((len(vocab), emb), rng),
            cell=GRUCell.init(emb, hidden, rng),
            w_out=ad.param((len(vocab), hidden), rng),
            b_out=ad.param((len(vocab),), rng),
            vocab=vocab,
        )

    @classmethod
    def zeroed(cls, vocab: Vocab, emb: int, hidden: int) -> "LMParams":
        """All-zero parameters: a uniform next-token distribution, for tests."""
        rng = np.random.default_rng(0)
        lm = cls.init(vocab, emb, hidden, rng)
        for t in lm.tensors().values():
            t.data[...] = 0.0
        return lm

    @property
    def hidden(self) -> int:
        return self.cell.hidden

    def tensors(self) -> dict[str, Tensor]:
        out = {"emb": self.emb, "w_out": self.w_out, "b_out": self.b_out}
        out.update(self.cell.tensors("cell"))
        return out


def _lm_step_logprobs(lm: LMParams, prev: int, h):
    x = ad.row(lm.emb, prev)
    h = ad.gru_cell(x, h, lm.cell)
    logits = ad.add(ad.matvec(lm.w_out, h), lm.b_out)
    return ad.log_softmax(logits), h


def lm_loglikelihood(lm: LMParams, tokens: list[int]) -> Tensor:
    """Teacher-forced log-likelihood of the sentence, terminal EOS included."""
    if len(tokens) == 0:
        raise UsageError("cannot score an empty sentence")
    for i in tokens:
        if not 0 <= i < len(lm.vocab):
            raise EncodingError(f"lm_loglikelihood: token id {i} outside vocabulary")
    h = ad.zeros((lm.cell.hidden,))
    prev = Vocab.BOS
    pieces = []
    for tok in list(tokens) + [Vocab.EOS]:
        ls, h = _lm_step_logprobs(lm, prev, h)
        pieces.append(ad.pick(ls, tok))
        prev = tok
    return ad.weighted_sum_scalars(pieces, [1.0] * len(pieces))


def train_lm(sentences: list[list[int]], vocab: Vocab, emb: int, hidden: int,
             epochs: int, lr: float, batch_size: int, seed: int,
             dev_sentences: list[list[int]] | None = None,
             clip: float = 5.0) -> tuple[LMParams, float]:
    """Fit the language model by cross-entropy; returns (model, dev NLL/token)."""
    if not sentences:
        raise ConfigError("language model needs a nonempty corpus")
    rng = np.random.default_rng(seed)
    lm = LMParams.init(vocab, emb, hidden, rng)
    params = lm.tensors()
    opt = AdamState(params, lr=lr)
    order = np.arange(len(sentences))
    for _ in range(epochs):
        rng.shuffle(order)
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            with ad.record() as tape:
                terms = [lm_loglikelihood(lm, sentences[i]) for i in idx]
                loss = ad.neg(ad.weighted_sum_scalars(terms, [1.0] * len(terms)))
                ad.backward(loss, tape)
            clip_global_norm(params, clip)
            adam_step(opt)
    dev = dev_sentences if dev_sentences is not None else sentences
    return lm, lm_corpus_nll(lm, dev)


def lm_corpus_nll(lm: LMParams, sentences: list[list[int]]) -> float:
    """Mean per-token negative log-likelihood (EOS counted) over sentences."""
    if not sentences:
        raise UsageError("empty corpus")
    total, count = 0.0, 0
    with ad.no_grad():
        for s in sentences:
            total -= float(lm_loglikelihood(lm, s).data)
            count += len(s) + 1
    return total / count


# ---------------------------------------------------------------------------
# grounding ranker
# ---------------------------------------------------------------------------

GROUNDING_SOFTMAX_SCALE = 10.0


@dataclass
class RankerParams:
    """Joint-embedding retrieval model over (pivot sentence, grounding vector)."""

    emb: Tensor
    cell: GRUCell
    w_img: Tensor
    b_img: Tensor
    vocab: Vocab
    margin: float = 0.2

    @classmethod
    def init(cls, vocab: Vocab, emb: int, hidden: int,
             rng: np.random.Generator, margin: float = 0.2) -> "RankerParams":
        return cls(
            emb=ad.param((len(vocab), emb), rng),
            cell=GRUCell.init(emb, hidden, rng),
            w_img=ad.param((hidden, GROUNDING_DIM), rng),
            b_img=ad.param((hidden,), rng),
            vocab=vocab,
            margin=margin,
        )

    def tensors(self) -> dict[str, Tensor]:
        out = {"emb": self.emb, "w_img": self.w_img, "b_img": self.b_img}
        out.update(self.cell.tensors("cell"))
        return out


def _l2_normalize(v: Tensor) -> Tensor:
    norm = ad.sqrt(ad.add_const(ad.dot(v, v), 1e-12))
    return ad.scale(v, ad.recip(norm))


def sentence_embedding(ranker: RankerParams, tokens: list[int]) -> Tensor:
    """Final recurrent state over tokens + EOS, L2-normalized."""
    if len(tokens) == 0:
        raise UsageError("cannot embed an empty sentence")
    h = ad.zeros((ranker.cell.hidden,))
    for tok in list(tokens) + [Vocab.EOS]:
        h = ad.gru_cell(ad.row(ranker.emb, tok), h, ranker.cell)
    return _l2_normalize(h)


def grounding_embedding(ranker: RankerParams, vec: np.ndarray) -> Tensor:
    mapped = ad.add(ad.matvec(ranker.w_img, ad.constant(vec)), ranker.b_img)
    return _l2_normalize(mapped)


def ranker_hinge_loss(ranker: RankerParams,
                      batch: list[tuple[list[int], np.ndarray]]) -> Tensor:
    """Max-margin loss against the hardest in-batch negatives, both directions."""
    n = len(batch)
    if n < 2:
        raise UsageError("ranking loss needs at least 2 pairs for negatives")
    txt = [sentence_embedding(ranker, toks) for toks, _ in batch]
    img = [grounding_embedding(ranker, vec) for _, vec in batch]
    scores = [[ad.dot(txt[i], img[j]) for j in range(n)] for i in range(n)]
    terms = []
    for i in range(n):
        hard_img = max((j for j in range(n) if j != i),
                       key=lambda j: float(scores[i][j].data))
        hard_txt = max((j for j in range(n) if j != i),
                       key=lambda j: float(scores[j][i].data))
        terms.append(ad.relu(ad.add_const(
            ad.sub(scores[i][hard_img], scores[i][i]), ranker.margin)))
        terms.append(ad.relu(ad.add_const(
            ad.sub(scores[hard_txt][i], scores[i][i]), ranker.margin)))
    return ad.weighted_sum_scalars(terms, [1.0] * len(terms))


def grounding_score(ranker: RankerParams, tokens: list[int],
                    true_vec: np.ndarray,
                    candidate_vecs: list[np.ndarray]) -> Tensor:
    """Log-probability of the true vector under a softmax over candidates."""
    if len(candidate_vecs) < 2:
        raise UsageError("grounding score needs at least 2 candidates")
    true_idx = None
    for i, c in enumerate(candidate_vecs):
        if c is true_vec or np.array_equal(c, true_vec):
            true_idx = i
            break
    if true_idx is None:
        raise UsageError("true grounding vector missing from candidate set")
    t = sentence_embedding(ranker, tokens)
    sims = [ad.dot(t, grounding_embedding(ranker, c)) for c in candidate_vecs]
    scaled = ad.mul_const(_stack_scalars(sims), GROUNDING_SOFTMAX_SCALE)
    return ad.pick(ad.log_softmax(scaled), true_idx)


def _stack_scalars(scalars: list[Tensor]) -> Tensor:
    """Scalar nodes -> 1-d vector node (for softmax over a candidate set)."""
    vals = np.array([float(s.data) for s in scalars])
    out = Tensor(vals)
    tape = ad.active_tape()
    if tape is not None and any(s.requires_grad for s in scalars):
        out.requires_grad = True

        def bw(g):
            for i, s in enumerate(scalars):
                if s.requires_grad:
                    if s.grad is None:
                        s.grad = np.zeros((), dtype=np.float64)
                    s.grad += g[i]

        tape.append(out, bw)
    return out


def ranker_recall(ranker: RankerParams,
                  pairs: list[tuple[list[int], np.ndarray]],
                  ks: tuple[int, ...] = (1, 5)) -> dict[int, float]:
    """Fraction of sentences whose true vector ranks in the top k of the pool."""
    if not pairs:
        raise UsageError("empty evaluation set")
    with ad.no_grad():
        txt = np.stack([sentence_embedding(ranker, toks).data for toks, _ in pairs])
        img = np.stack([grounding_embedding(ranker, vec).data for _, vec in pairs])
    sims = txt @ img.T
    hits = {k: 0 for k in ks}
    for i in range(len(pairs)):
        rank = int((sims[i] > sims[i, i]).sum())
        for k in ks:
            if rank < k:
                hits[k] += 1
    return {k: hits[k] / len(pairs) for k in ks}


def train_ranker(pairs: list[tuple[list[int], np.ndarray]], vocab: Vocab,
                 emb: int, hidden: int, epochs: int, lr: float,
                 batch_size: int, seed: int, margin: float = 0.2,
                 clip: float = 5.0) -> RankerParams:
    """Fit the ranker with the hinge loss over shuffled minibatches."""
    if len(pairs) < 2:
        raise ConfigError("ranker needs at least 2 training pairs")
    rng = np.random.default_rng(seed)
    ranker = RankerParams.init(vocab, emb, hidden, rng, margin=margin)
    params = ranker.tensors()
    opt = AdamState(params, lr=lr)
    order = np.arange(len(pairs))
    for _ in range(epochs):
        rng.shuffle(order)
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            if len(idx) < 2:
                continue
            with ad.record() as tape:
                loss = ranker_hinge_loss(ranker, [pairs[i] for i in idx])
                ad.backward(loss, tape)
            clip_global_norm(params, clip)
            adam_step(opt)
    return ranker
