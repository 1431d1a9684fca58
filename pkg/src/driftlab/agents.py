"""Encoder-decoder translation agents with additive attention.

Agent A speaks the pivot language given a source sentence; Agent B reads a
pivot sentence and produces the target.  Both share this architecture:

    encoder:  unidirectional single-layer GRU over input embeddings (the
              input sequence gets one terminal EOS appended)
    decoder:  GRU whose step input is [previous output embedding ; context],
              with additive attention over the encoder states
    logits:   linear map of [decoder state ; context]

Decoding variants: greedy, ancestral sampling (with the recorded per-step
log-probabilities and entropies REINFORCE needs), the length-capped variant
used for pivot messages, beam search, and multi-source ensemble decoding.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import GRUCell, Tensor
from .corpus import Vocab
from .errors import EncodingError, UsageError


@dataclass
class AgentParams:
    emb_in: Tensor
    enc: GRUCell
    dec: GRUCell
    att_w: Tensor      # state projection inside the attention score
    att_u: Tensor      # annotation projection, applied once per sentence
    att_v: Tensor      # score vector
    w_init: Tensor     # last encoder state -> initial decoder state
    b_init: Tensor
    emb_out: Tensor
    w_out: Tensor      # [state ; context] -> logits
    b_out: Tensor
    vocab_in: Vocab
    vocab_out: Vocab

    @classmethod
    def init(cls, vocab_in: Vocab, vocab_out: Vocab, emb: int, hidden: int,
             rng: np.random.Generator) -> "AgentParams":
        return cls(
            emb_in=ad.param((len(vocab_in), emb), rng),
            enc=GRUCell.init(emb, hidden, rng),
            dec=GRUCell.init(emb + hidden, hidden, rng),
            att_w=ad.param((hidden, hidden), rng),
            att_u=ad.param((hidden, hidden), rng),
            att_v=ad.param((hidden,), rng),
            w_init=ad.param((hidden, hidden), rng),
            b_init=ad.param((hidden,), rng),
            emb_out=ad.param((len(vocab_out), emb), rng),
            w_out=ad.param((len(vocab_out), 2 * hidden), rng),
            b_out=ad.param((len(vocab_out),), rng),
            vocab_in=vocab_in,
            vocab_out=vocab_out,
        )

    @property
    def hidden(self) -> int:
        return self.att_v.data.shape[0]

    def tensors(self) -> dict[str, Tensor]:
        out = {"emb_in": self.emb_in, "att_w": self.att_w, "att_u": self.att_u,
               "att_v": self.att_v, "w_init": self.w_init, "b_init": self.b_init,
               "emb_out": self.emb_out, "w_out": self.w_out, "b_out": self.b_out}
        out.update(self.enc.tensors("enc"))
        out.update(self.dec.tensors("dec"))
        return out


@dataclass
class Message:
    """A decoded pivot sentence plus the policy quantities REINFORCE needs.

    tokens includes the terminal EOS when the decoder emitted one; logps and
    entropies have one entry per emitted token (EOS included).  The node
    lists are present only when decoding ran under an active tape; states
    holds the detached decoder hidden state at each step for the baseline.
    """

    tokens: list[int]
    logps: np.ndarray
    entropies: np.ndarray
    terminated: bool
    logp_nodes: list[Tensor] | None = None
    entropy_nodes: list[Tensor] | None = None
    states: list[np.ndarray] | None = None

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise UsageError("message must contain at least one token")
        if self.terminated and self.tokens[-1] != Vocab.EOS:
            raise UsageError("terminated message must end with EOS")

    def content_tokens(self) -> list[int]:
        if self.terminated:
            return self.tokens[:-1]
        return list(self.tokens)

    def words(self, vocab: Vocab) -> list[str]:
        return vocab.decode(self.tokens)


@dataclass
class Annotations:
    """Encoder output bundle: states, their attention projection, last state."""

    states: Tensor          # (T, hidden)
    proj: Tensor            # (T, hidden) = states @ att_u.T
    s0: Tensor              # initial decoder state

    @property
    def length(self) -> int:
        return self.states.data.shape[0]


def _check_ids(ids, vocab: Vocab, what: str) -> None:
    for i in ids:
        if not 0 <= i < len(vocab):
            raise EncodingError(f"{what}: token id {i} outside vocabulary")


def encode(agent: AgentParams, tokens: list[int],
           dropout: float = 0.0, rng: np.random.Generator | None = None) -> Annotations:
    """Run the encoder over tokens + EOS and precompute attention projections."""
    _check_ids(tokens, agent.vocab_in, "encode")
    ids = list(tokens) + [Vocab.EOS]
    h = ad.zeros((agent.hidden,))
    states = []
    for i in ids:
        x = ad.row(agent.emb_in, i)
        if dropout > 0.0:
            x = _dropout(x, dropout, rng)
        h = ad.gru_cell(x, h, agent.enc)
        states.append(h)
    annotations = ad.stack_rows(states)
    proj = ad.matmul_nt(annotations, agent.att_u)
    s0 = ad.tanh(ad.add(ad.matvec(agent.w_init, h), agent.b_init))
    return Annotations(annotations, proj, s0)


def _dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    if rng is None:
        raise UsageError("dropout requires a random generator")
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    return ad.mul_const(x, mask)


def attend(agent: AgentParams, state: Tensor, ann: Annotations):
    """Context vector and attention weights for one decoder state."""
    return ad.additive_attention(state, ann.states, ann.proj,
                                 agent.att_w, agent.att_v)


def _step(agent: AgentParams, prev_token: int, state: Tensor, ann: Annotations,
          dropout: float = 0.0, rng: np.random.Generator | None = None):
    """One decoder step: returns (log-prob node over vocab, new state)."""
    ctx, _ = attend(agent, state, ann)
    emb = ad.row(agent.emb_out, prev_token)
    if dropout > 0.0:
        emb = _dropout(emb, dropout, rng)
    new_state = ad.gru_cell(ad.concat((emb, ctx)), state, agent.dec)
    feats = ad.concat((new_state, ctx))
    if dropout > 0.0:
        feats = _dropout(feats, dropout, rng)
    logits = ad.add(ad.matvec(agent.w_out, feats), agent.b_out)
    return ad.log_softmax(logits), new_state


def _entropy_from(ls: Tensor) -> Tensor:
    return ad.neg(ad.dot(ad.exp(ls), ls))


def _decode(agent: AgentParams, ann: Annotations, max_len: int,
            mode: str, rng: np.random.Generator | None = None,
            temperature: float = 1.0, forced: list[int] | None = None) -> Message:
    if max_len < 1:
        raise UsageError("max_len must be at least 1")
    if temperature <= 0.0:
        raise UsageError("temperature must be positive")
    keep_nodes = ad.active_tape() is not None
    state = ann.s0
    prev = Vocab.BOS
    tokens: list[int] = []
    logps, ents = [], []
    logp_nodes, ent_nodes, states = [], [], []
    terminated = False
    for t in range(max_len):
        ls, state = _step(agent, prev, state, ann)
        if mode == "greedy":
            tok = int(np.argmax(ls.data))
        elif mode == "sample":
            if temperature != 1.0:
                p = ad.softmax_values(ls.data / temperature)
            else:
                p = np.exp(ls.data)
                p /= p.sum()
            tok = int(rng.choice(p.shape[0], p=p))
        elif mode == "forced":
            tok = forced[t]
        else:
            raise UsageError(f"unknown decode mode {mode!r}")
        tokens.append(tok)
        logps.append(float(ls.data[tok]))
        ent = _entropy_from(ls) if keep_nodes else None
        if keep_nodes:
            logp_nodes.append(ad.pick(ls, tok))
            ent_nodes.append(ent)
            ents.append(float(ent.data))
            states.append(state.data.copy())
        else:
            p = np.exp(ls.data)
            ents.append(float(-(p * ls.data).sum()))
        prev = tok
        if tok == Vocab.EOS:
            terminated = True
            break
    return Message(
        tokens=tokens, logps=np.array(logps), entropies=np.array(ents),
        terminated=terminated,
        logp_nodes=logp_nodes if keep_nodes else None,
        entropy_nodes=ent_nodes if keep_nodes else None,
        states=states if keep_nodes else None,
    )


def decode_greedy(agent: AgentParams, ann: Annotations, max_len: int) -> Message:
    return _decode(agent, ann, max_len, "greedy")


def decode_sample(agent: AgentParams, ann: Annotations, max_len: int,
                  rng: np.random.Generator, temperature: float = 1.0) -> Message:
    return _decode(agent, ann, max_len, "sample", rng=rng, temperature=temperature)


def decode_capped(agent: AgentParams, ann: Annotations, src_len: int,
                  rng: np.random.Generator | None = None,
                  greedy: bool = False) -> Message:
    """Length-capped decode: at most src_len tokens, EOS may end it earlier."""
    if src_len < 1:
        raise UsageError("source length must be at least 1")
    if greedy:
        return decode_greedy(agent, ann, src_len)
    return decode_sample(agent, ann, src_len, rng)


def replay(agent: AgentParams, ann: Annotations, tokens: list[int]) -> Message:
    """Re-run a decode emitting exactly the given tokens.

    Rebuilds the same graph nodes a sampled decode would have created, so a
    perturb-and-replay pass sees the sampling noise held fixed.
    """
    msg = _decode(agent, ann, len(tokens), "forced", forced=tokens)
    if msg.tokens != list(tokens):
        raise UsageError("replay ended before consuming all tokens")
    return msg


def sequence_logprob(agent: AgentParams, src_tokens: list[int],
                     out_tokens: list[int]) -> Tensor:
    """Teacher-forced log-probability of out_tokens followed by EOS."""
    _check_ids(out_tokens, agent.vocab_out, "sequence_logprob")
    ann = encode(agent, src_tokens)
    return teacher_forced_logprob(agent, ann, out_tokens)


def teacher_forced_logprob(agent: AgentParams, ann: Annotations,
                           out_tokens: list[int],
                           dropout: float = 0.0,
                           rng: np.random.Generator | None = None) -> Tensor:
    pieces = []
    state = ann.s0
    prev = Vocab.BOS
    for tok in list(out_tokens) + [Vocab.EOS]:
        ls, state = _step(agent, prev, state, ann, dropout=dropout, rng=rng)
        pieces.append(ad.pick(ls, tok))
        prev = tok
    return ad.weighted_sum_scalars(pieces, [1.0] * len(pieces))


def beam_search(agent: AgentParams, ann: Annotations, k: int, max_len: int):
    """Top-k completed hypotheses ranked by length-normalized log-probability.

    Returns (list of (tokens, normalized score), shortfall flag).  Hypotheses
    ending at the length cap without EOS count as completed, mirroring the
    capped decode.  The greedy hypothesis is always included in the candidate
    pool so the top-1 score never falls below greedy's.
    """
    if k < 1:
        raise UsageError("k must be at least 1")
    if max_len < 1:
        raise UsageError("max_len must be at least 1")
    frontier = [((), 0.0, ann.s0, Vocab.BOS)]
    completed: dict[tuple, float] = {}
    for _ in range(max_len):
        expansions = []
        for tokens, lp, state, prev in frontier:
            ls, new_state = _step(agent, prev, state, ann)
            for tok in range(ls.data.shape[0]):
                expansions.append((tokens + (tok,), lp + float(ls.data[tok]),
                                   new_state, tok))
        expansions.sort(key=lambda e: -e[1])
        frontier = []
        for tokens, lp, state, tok in expansions:
            if tok == Vocab.EOS:
                completed[tokens] = lp
            elif len(frontier) < k:
                frontier.append((tokens, lp, state, tok))
    for tokens, lp, _state, _prev in frontier:
        if tokens not in completed:
            completed[tokens] = lp
    greedy = decode_greedy(agent, ann, max_len)
    gt = tuple(greedy.tokens)
    if gt not in completed:
        completed[gt] = float(greedy.logps.sum())
    ranked = sorted(((lp / len(tokens), tokens) for tokens, lp in completed.items()),
                    key=lambda e: (-e[0], e[1]))
    hyps = [(list(tokens), score) for score, tokens in ranked[:k]]
    return hyps, len(hyps) < k


def ensemble_decode(agent: AgentParams, hypotheses: list[list[int]],
                    max_len: int) -> list[int]:
    """Greedy decode with next-token distributions averaged over k encodings."""
    if not hypotheses:
        raise UsageError("ensemble_decode needs at least one hypothesis")
    anns = [encode(agent, _strip_eos(h)) for h in hypotheses]
    states = [a.s0 for a in anns]
    prev = Vocab.BOS
    out: list[int] = []
    for _ in range(max_len):
        mean_p = None
        new_states = []
        for ann, state in zip(anns, states):
            ls, ns = _step(agent, prev, state, ann)
            p = np.exp(ls.data)
            mean_p = p if mean_p is None else mean_p + p
            new_states.append(ns)
        states = new_states
        mean_p /= len(anns)
        tok = int(np.argmax(mean_p))
        out.append(tok)
        prev = tok
        if tok == Vocab.EOS:
            break
    return out


def _strip_eos(tokens: list[int]) -> list[int]:
    if tokens and tokens[-1] == Vocab.EOS:
        return list(tokens[:-1])
    return list(tokens)


def translate_greedy(agent: AgentParams, tokens: list[int], max_len: int) -> list[int]:
    """Convenience evaluation path: encode, greedy-decode, return content ids."""
    with ad.no_grad():
        ann = encode(agent, tokens)
        msg = decode_greedy(agent, ann, max_len)
    return msg.content_tokens()
