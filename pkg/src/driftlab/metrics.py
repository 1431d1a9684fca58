"""Drift measurement: BLEU, LM negative log-likelihood, token statistics.

corpus_bleu is the standard corpus-level score: geometric mean of clipped
modified n-gram precisions (n = 1..4) times the brevity penalty.  When any
precision is zero, counts for n >= 2 get add-1 smoothing (the unigram
precision is never smoothed, and an identity corpus scores exactly 100).
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import agents as ag
from . import autodiff as ad
from .agents import AgentParams
from .constraints import LMParams, lm_corpus_nll
from .corpus import PIVOT_TOKEN_MEANING, Triple, Vocab
from .errors import EncodingError, UsageError

GEN_SLACK = 4

BLEU_SMOOTHING_NOTE = "add-1 counts for n>=2 when any precision is zero"


def _ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses, references, max_n: int = 4) -> float:
    """Corpus-level BLEU in [0, 100], one reference per hypothesis."""
    if len(hypotheses) == 0:
        raise UsageError("empty corpus")
    if len(hypotheses) != len(references):
        raise UsageError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp, ref = list(hyp), list(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            hc = _ngram_counts(hyp, n)
            rc = _ngram_counts(ref, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    if hyp_len == 0 or totals[0] == 0 or matches[0] == 0:
        return 0.0
    smooth = any(m == 0 for m, t in zip(matches, totals))
    log_p = 0.0
    for n in range(1, max_n + 1):
        m, t = matches[n - 1], totals[n - 1]
        if smooth and n >= 2:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_p += math.log(m / t) / max_n
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_p)


def sentence_bleu(hypothesis, reference, max_n: int = 4) -> float:
    return corpus_bleu([hypothesis], [reference], max_n=max_n)


def pivot_lm_nll(lm: LMParams, hypotheses_ids: list[list[int]]) -> float:
    """Mean per-token negative log-likelihood of the hypotheses under the LM."""
    if not hypotheses_ids:
        raise UsageError("empty corpus")
    return lm_corpus_nll(lm, hypotheses_ids)


# ---------------------------------------------------------------------------
# token statistics
# ---------------------------------------------------------------------------


@dataclass
class FreqReport:
    unique_tokens: int
    unique_per_sentence: float
    unique_all_ratio: float
    diff_curve: np.ndarray

    def conservation_gap(self, hyp_total: int, ref_total: int) -> float:
        return float(self.diff_curve.sum() - (hyp_total - ref_total))


def token_frequency_report(hypotheses, references, vocab: Vocab) -> FreqReport:
    """Vocabulary usage statistics and the sorted frequency-difference curve."""
    if not hypotheses:
        raise UsageError("empty corpus")
    hyp_freq = np.zeros(len(vocab))
    ref_freq = np.zeros(len(vocab))
    unique_sum = 0
    total = 0
    distinct = set()
    for hyp in hypotheses:
        unique_sum += len(set(hyp))
        total += len(hyp)
        distinct.update(hyp)
        for w in hyp:
            hyp_freq[vocab.stoi.get(w, Vocab.UNK)] += 1
    for ref in references:
        for w in ref:
            ref_freq[vocab.stoi.get(w, Vocab.UNK)] += 1
    curve = np.sort(hyp_freq)[::-1] - np.sort(ref_freq)[::-1]
    return FreqReport(
        unique_tokens=len(distinct),
        unique_per_sentence=unique_sum / len(hypotheses),
        unique_all_ratio=len(distinct) / total if total else 0.0,
        diff_curve=curve,
    )


@dataclass
class CategoryRecall:
    hits: int
    total: int

    @property
    def recall(self) -> float:
        return self.hits / self.total if self.total else 0.0


def category_recall(hypotheses, references,
                    lexicon: dict[str, str]) -> dict[str, CategoryRecall]:
    """Exact-match recall of reference tokens, grouped by lexicon category."""
    out: dict[str, CategoryRecall] = {}
    for hyp, ref in zip(hypotheses, references):
        present = set(hyp)
        for w in ref:
            cat = lexicon.get(w)
            if cat is None:
                raise EncodingError(f"reference token {w!r} not in category lexicon")
            rec = out.setdefault(cat, CategoryRecall(0, 0))
            rec.total += 1
            if w in present:
                rec.hits += 1
    return out


def pivot_category_lexicon() -> dict[str, str]:
    lex = {w: slot for w, (slot, _v) in PIVOT_TOKEN_MEANING.items()}
    lex.update({"and": "conjunction", "at": "adposition", ".": "punctuation"})
    return lex


@dataclass
class FlipCandidate:
    ref_token: str
    hyp_token: str
    cooccurrences: int
    support: int

    @property
    def rate(self) -> float:
        return self.cooccurrences / self.support


def token_flip_report(hypotheses, references, threshold: float = 0.3,
                      min_support: int = 5) -> list[FlipCandidate]:
    """Systematic substitutions: hypothesis token h standing in for reference
    token r of a different lexicon meaning.

    For each content token r, over the sentences whose reference contains r,
    count hypothesis content tokens h (absent from that reference) appearing
    in the paired hypothesis; report (r, h) pairs whose co-occurrence rate
    meets the threshold with enough supporting sentences.  Synonym pairs share
    a lexicon meaning and are never flagged.
    """
    support: Counter = Counter()
    cooc: Counter = Counter()
    for hyp, ref in zip(hypotheses, references):
        ref_set = set(ref)
        ref_content = [w for w in ref_set if w in PIVOT_TOKEN_MEANING]
        hyp_content = {w for w in set(hyp)
                       if w in PIVOT_TOKEN_MEANING and w not in ref_set}
        for r in ref_content:
            support[r] += 1
            for h in hyp_content:
                if PIVOT_TOKEN_MEANING[h] != PIVOT_TOKEN_MEANING[r]:
                    cooc[(r, h)] += 1
    flips = []
    for (r, h), c in cooc.items():
        s = support[r]
        if s >= min_support and c / s >= threshold:
            flips.append(FlipCandidate(r, h, c, s))
    flips.sort(key=lambda f: (-f.rate, f.ref_token, f.hyp_token))
    return flips


# ---------------------------------------------------------------------------
# pipeline evaluation and the combined report
# ---------------------------------------------------------------------------


def pipeline_decode(agent_a: AgentParams, agent_b: AgentParams,
                    triples: list[Triple]):
    """Greedy src -> capped pivot -> target decoding for a whole corpus."""
    pivot_hyps, tgt_hyps = [], []
    with ad.no_grad():
        for t in triples:
            src_ids = agent_a.vocab_in.encode(t.src)
            ann = ag.encode(agent_a, src_ids)
            msg = ag.decode_capped(agent_a, ann, len(src_ids), greedy=True)
            content = msg.content_tokens()
            b_in = content if content else [Vocab.EOS]
            tgt_ids = ag.translate_greedy(agent_b, b_in, len(b_in) + GEN_SLACK)
            pivot_hyps.append(agent_a.vocab_out.decode(msg.tokens))
            tgt_hyps.append(agent_b.vocab_out.decode(tgt_ids, stop_at_eos=False))
    return pivot_hyps, tgt_hyps


@dataclass
class DriftReport:
    task_bleu: float
    pivot_bleu: float
    pivot_lm_nll: float
    freq: FreqReport
    recall: dict[str, CategoryRecall]
    flips: list[FlipCandidate]
    sentence_scores: list[float] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"# bleu_smoothing\t{BLEU_SMOOTHING_NOTE}"]
        lines.append(f"task_bleu\t{self.task_bleu:.6f}")
        lines.append(f"pivot_bleu\t{self.pivot_bleu:.6f}")
        lines.append(f"pivot_lm_nll\t{self.pivot_lm_nll:.6f}")
        lines.append(f"freq_unique\t{self.freq.unique_tokens}")
        lines.append(f"freq_unique_per_sentence\t{self.freq.unique_per_sentence:.6f}")
        lines.append(f"freq_unique_all_ratio\t{self.freq.unique_all_ratio:.6f}")
        for cat in sorted(self.recall):
            r = self.recall[cat]
            lines.append(f"recall.{cat}\t{r.recall:.6f}")
            lines.append(f"recall.{cat}.counts\t{r.hits}/{r.total}")
        for i, f in enumerate(self.flips):
            lines.append(f"flip.{i}\t{f.ref_token}->{f.hyp_token}"
                         f"\t{f.cooccurrences}/{f.support}")
        return "\n".join(lines) + "\n"

    def curve_csv(self) -> str:
        lines = ["rank,freq_diff"]
        lines += [f"{i},{v:g}" for i, v in enumerate(self.freq.diff_curve)]
        return "\n".join(lines) + "\n"


def drift_report(agent_a: AgentParams, agent_b: AgentParams, lm: LMParams,
                 triples: list[Triple],
                 per_sentence: bool = False) -> DriftReport:
    """Full drift measurement of a checkpoint pair on an evaluation corpus."""
    pivot_hyps, tgt_hyps = pipeline_decode(agent_a, agent_b, triples)
    pivot_refs = [list(t.pivot) for t in triples]
    tgt_refs = [list(t.tgt) for t in triples]
    ids = [lm.vocab.encode(h) if h else [Vocab.EOS] for h in pivot_hyps]
    report = DriftReport(
        task_bleu=corpus_bleu(tgt_hyps, tgt_refs),
        pivot_bleu=corpus_bleu(pivot_hyps, pivot_refs),
        pivot_lm_nll=pivot_lm_nll(lm, ids),
        freq=token_frequency_report(pivot_hyps, pivot_refs, agent_a.vocab_out),
        recall=category_recall(pivot_hyps, pivot_refs, pivot_category_lexicon()),
        flips=token_flip_report(pivot_hyps, pivot_refs),
    )
    if per_sentence:
        report.sentence_scores = [
            sentence_bleu(h, r) for h, r in zip(pivot_hyps, pivot_refs)]
    return report
