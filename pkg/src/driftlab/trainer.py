"""Training loops: supervised pretraining and joint policy-gradient fine-tuning.

Fine-tuning maximizes L = L_A + L_B per minibatch:

    L_A = sum_k sum_t [ alpha_entr * H_kt
                        - alpha_b * (R_k - Rbar_kt)^2
                        + alpha_pg * (R_k - Rbar_kt) * log p(token_kt) ]
    L_B = sum_k log p_B(target_k | message_k)       (teacher-forced)

R_k mixes Agent B's likelihood of the gold target with the frozen constraint
scores.  The policy-gradient coefficient (R_k - Rbar_kt) is a constant during
backprop; the baseline's MSE term sees the decoder states as constants; only
the entropy term and the log-prob factors carry policy gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import agents as ag
from . import autodiff as ad
from . import metrics
from .agents import AgentParams, Message
from .autodiff import Tensor
from .constraints import (LMParams, RankerParams, RewardConfig, compose_reward,
                          grounding_score, lm_loglikelihood)
from .corpus import Triple, Vocab
from .errors import ConfigError, NumericError
from .optim import AdamState, adam_step, clip_global_norm

GEN_SLACK = 4  # decode-length margin over the input length at evaluation time


@dataclass
class BaselineNet:
    """2-layer ReLU perceptron: decoder state -> expected-reward scalar."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def init(cls, state_dim: int, hidden: int, rng: np.random.Generator) -> "BaselineNet":
        return cls(
            w1=ad.param((hidden, state_dim), rng), b1=ad.param((hidden,), rng),
            w2=ad.param((hidden,), rng), b2=ad.param((), rng),
        )

    def predict(self, state: np.ndarray) -> Tensor:
        return ad.mlp2_scalar(state, self.w1, self.b1, self.w2, self.b2)

    def tensors(self) -> dict[str, Tensor]:
        return {"bl.w1": self.w1, "bl.b1": self.b1,
                "bl.w2": self.w2, "bl.b2": self.b2}


@dataclass
class EvalRecord:
    step: int
    task_bleu: float
    pivot_bleu: float
    lm_nll: float
    mean_reward: float
    mean_entropy: float
    lr: float

    FIELDS = ("step", "task_bleu", "pivot_bleu", "lm_nll",
              "mean_reward", "mean_entropy", "lr")

    def to_line(self) -> str:
        return "\t".join(str(getattr(self, f)) for f in self.FIELDS)


@dataclass
class TrainLog:
    records: list[EvalRecord] = field(default_factory=list)
    diverged: bool = False
    notes: list[str] = field(default_factory=list)

    def append(self, rec: EvalRecord) -> None:
        if self.records and rec.step < self.records[-1].step:
            raise ConfigError("evaluation steps must be nondecreasing")
        self.records.append(rec)

    def to_text(self) -> str:
        lines = ["\t".join(EvalRecord.FIELDS)]
        lines += [r.to_line() for r in self.records]
        for n in self.notes:
            lines.append(f"# {n}")
        return "\n".join(lines) + "\n"

    def final_task_bleu(self) -> float:
        if not self.records:
            raise ConfigError("empty training log")
        return self.records[-1].task_bleu


@dataclass
class RolloutItem:
    message: Message
    reward: float
    baseline_nodes: list[Tensor]
    baseline_values: np.ndarray
    logp_b: float
    logp_b_node: Tensor
    lm_score: float | None
    g_score: float | None


@dataclass
class RolloutBatch:
    items: list[RolloutItem]

    @property
    def mean_reward(self) -> float:
        return float(np.mean([it.reward for it in self.items]))

    @property
    def mean_entropy(self) -> float:
        return float(np.mean(np.concatenate(
            [it.message.entropies for it in self.items])))


def rollout(agent_a: AgentParams, agent_b: AgentParams,
            lm: LMParams | None, ranker: RankerParams | None,
            triples: list[Triple], cfg: RewardConfig,
            rng: np.random.Generator, baseline: BaselineNet | None = None,
            greedy_message: bool = False,
            forced: list[list[int]] | None = None) -> RolloutBatch:
    """Sample messages, score them, and assemble everything the losses need.

    With `forced`, re-emits exactly those token sequences instead of sampling;
    combined with a fixed reward this lets perturbation tests replay the same
    trajectory through a perturbed model.
    """
    candidates = [t.grounding for t in triples]
    items = []
    for k, triple in enumerate(triples):
        src_ids = agent_a.vocab_in.encode(triple.src)
        ann = ag.encode(agent_a, src_ids)
        if forced is not None:
            msg = ag.replay(agent_a, ann, forced[k])
        else:
            msg = ag.decode_capped(agent_a, ann, len(src_ids), rng=rng,
                                   greedy=greedy_message)
        assert len(msg.tokens) <= len(src_ids), "length cap violated"
        content = msg.content_tokens()
        b_in = content if content else [Vocab.EOS]
        tgt_ids = agent_b.vocab_out.encode(triple.tgt)
        logp_b_node = ag.sequence_logprob(agent_b, b_in, tgt_ids)
        logp_b = float(logp_b_node.data)
        lm_score = g_score = None
        with ad.no_grad():
            if lm is not None:
                lm_score = float(lm_loglikelihood(lm, msg.tokens).data)
            if ranker is not None:
                g_score = float(grounding_score(
                    ranker, b_in, triple.grounding, candidates).data)
        reward = compose_reward(logp_b, lm_score, g_score, cfg)
        baseline_nodes, baseline_values = [], []
        if baseline is not None:
            for state in msg.states:
                node = baseline.predict(state)
                baseline_nodes.append(node)
                baseline_values.append(float(node.data))
        items.append(RolloutItem(
            message=msg, reward=reward, baseline_nodes=baseline_nodes,
            baseline_values=np.array(baseline_values), logp_b=logp_b,
            logp_b_node=logp_b_node, lm_score=lm_score, g_score=g_score))
    return RolloutBatch(items)


def agent_a_objective(batch: RolloutBatch, cfg: RewardConfig,
                      standardize: bool = False) -> Tensor:
    """The three-term policy objective L_A (to be maximized)."""
    nodes, coeffs = [], []
    advantages = []
    for it in batch.items:
        steps = len(it.message.tokens)
        if it.baseline_values.size:
            adv = it.reward - it.baseline_values
        else:
            adv = np.full(steps, it.reward)
        advantages.append(adv)
    if standardize:
        flat = np.concatenate(advantages)
        std = flat.std()
        mean = flat.mean()
        if std > 1e-12:
            advantages = [(a - mean) / std for a in advantages]
    for it, adv in zip(batch.items, advantages):
        if cfg.alpha_entr > 0:
            nodes.extend(it.message.entropy_nodes)
            coeffs.extend([cfg.alpha_entr] * len(it.message.entropy_nodes))
        nodes.extend(it.message.logp_nodes)
        coeffs.extend((cfg.alpha_pg * adv).tolist())
        if it.baseline_nodes:
            mse = ad.squared_error_to_consts(
                it.baseline_nodes, [it.reward] * len(it.baseline_nodes))
            nodes.append(mse)
            coeffs.append(-cfg.alpha_b)
    return ad.weighted_sum_scalars(nodes, coeffs)


def agent_b_objective(batch: RolloutBatch) -> Tensor:
    """L_B: summed teacher-forced log-likelihood of the gold targets."""
    nodes = [it.logp_b_node for it in batch.items]
    return ad.weighted_sum_scalars(nodes, [1.0] * len(nodes))


# ---------------------------------------------------------------------------
# evaluation helpers
# ---------------------------------------------------------------------------


def evaluate_pair(agent_a: AgentParams, agent_b: AgentParams,
                  triples: list[Triple],
                  lm: LMParams | None = None):
    """(task BLEU, pivot BLEU, pivot LM NLL) of the greedy pipeline."""
    pivot_hyps, tgt_hyps = metrics.pipeline_decode(agent_a, agent_b, triples)
    task = metrics.corpus_bleu(tgt_hyps, [list(t.tgt) for t in triples])
    pivot = metrics.corpus_bleu(pivot_hyps, [list(t.pivot) for t in triples])
    nll = 0.0
    if lm is not None:
        ids = [lm.vocab.encode(h) if h else [Vocab.EOS] for h in pivot_hyps]
        nll = metrics.pivot_lm_nll(lm, ids)
    return task, pivot, nll


def _snapshot(groups: list[dict[str, Tensor]]) -> list[dict[str, np.ndarray]]:
    return [{k: t.data.copy() for k, t in g.items()} for g in groups]


def _restore(groups: list[dict[str, Tensor]],
             snap: list[dict[str, np.ndarray]]) -> None:
    for g, s in zip(groups, snap):
        for k, t in g.items():
            t.data = s[k].copy()


# ---------------------------------------------------------------------------
# supervised pretraining
# ---------------------------------------------------------------------------


def pretrain(agent: AgentParams, pairs: list[tuple[list[str], list[str]]],
             dev_pairs: list[tuple[list[str], list[str]]],
             epochs: int, batch_size: int, lr: float, seed: int,
             dropout: float = 0.1, patience: int = 3,
             clip: float = 5.0) -> TrainLog:
    """Cross-entropy training with per-epoch dev BLEU and best-checkpoint return.

    The agent is mutated in place and ends at its best-dev-BLEU parameters.
    """
    if not pairs or not dev_pairs:
        raise ConfigError("pretraining needs nonempty train and dev corpora")
    rng = np.random.default_rng(seed)
    params = agent.tensors()
    opt = AdamState(params, lr=lr)
    log = TrainLog()
    best_bleu = _supervised_dev_bleu(agent, dev_pairs)
    best = _snapshot([params])
    log.append(EvalRecord(0, best_bleu, 0.0, 0.0, 0.0, 0.0, lr))
    since_improve = 0
    order = np.arange(len(pairs))
    encoded = [(agent.vocab_in.encode(a), agent.vocab_out.encode(b))
               for a, b in pairs]
    for epoch in range(1, epochs + 1):
        rng.shuffle(order)
        total_lp, total_tok = 0.0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            with ad.record() as tape:
                terms = []
                for i in idx:
                    in_ids, out_ids = encoded[i]
                    ann = ag.encode(agent, in_ids, dropout=dropout, rng=rng)
                    lp = ag.teacher_forced_logprob(agent, ann, out_ids,
                                                   dropout=dropout, rng=rng)
                    terms.append(lp)
                    total_lp += float(lp.data)
                    total_tok += len(out_ids) + 1
                loss = ad.neg(ad.weighted_sum_scalars(terms, [1.0] * len(terms)))
                if not np.isfinite(loss.data):
                    log.diverged = True
                    log.notes.append(f"diverged in epoch {epoch}")
                    raise NumericError(f"pretraining loss diverged in epoch {epoch}")
                ad.backward(loss, tape)
            clip_global_norm(params, clip)
            adam_step(opt)
        dev_bleu = _supervised_dev_bleu(agent, dev_pairs)
        log.append(EvalRecord(epoch, dev_bleu, 0.0, 0.0,
                              total_lp / max(total_tok, 1), 0.0, opt.lr))
        if dev_bleu > best_bleu:
            best_bleu = dev_bleu
            best = _snapshot([params])
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= patience:
                break
    _restore([params], best)
    return log


def _supervised_dev_bleu(agent: AgentParams, dev_pairs) -> float:
    hyps, refs = [], []
    with ad.no_grad():
        for in_words, out_words in dev_pairs:
            ids = agent.vocab_in.encode(in_words)
            out = ag.translate_greedy(agent, ids, len(ids) + GEN_SLACK)
            hyps.append(agent.vocab_out.decode(out, stop_at_eos=False))
            refs.append(list(out_words))
    return metrics.corpus_bleu(hyps, refs)


# ---------------------------------------------------------------------------
# joint fine-tuning
# ---------------------------------------------------------------------------


@dataclass
class FinetuneResult:
    log: TrainLog
    best_step: int
    best_task_bleu: float


def finetune(agent_a: AgentParams, agent_b: AgentParams, baseline: BaselineNet,
             lm: LMParams | None, ranker: RankerParams | None,
             train_triples: list[Triple], dev_triples: list[Triple],
             cfg: RewardConfig, steps: int, batch_size: int, lr: float,
             eval_interval: int, patience: int, stop_after: int, seed: int,
             eval_lm: LMParams | None = None, clip: float = 5.0,
             standardize: bool = False, greedy_message: bool = False) -> FinetuneResult:
    """REINFORCE fine-tuning of A jointly with cross-entropy updates of B.

    Learning rate halves after `patience` evaluations without a new best dev
    task BLEU; training stops after `stop_after` of them.  Agents end at the
    best-task-BLEU checkpoint.  Non-finite losses abort with a diagnostic note.
    """
    if not train_triples or not dev_triples:
        raise ConfigError("fine-tuning needs nonempty train and dev corpora")
    rng = np.random.default_rng(seed)
    pa = {f"a.{k}": t for k, t in agent_a.tensors().items()}
    pa.update(baseline.tensors())
    pb = agent_b.tensors()
    opt_a = AdamState(pa, lr=lr)
    opt_b = AdamState(pb, lr=lr)
    log = TrainLog()
    if standardize:
        log.notes.append("advantage standardization: on")
    task0, pivot0, nll0 = evaluate_pair(agent_a, agent_b, dev_triples, eval_lm)
    log.append(EvalRecord(0, task0, pivot0, nll0, 0.0, 0.0, lr))
    best_bleu, best_step = task0, 0
    best = _snapshot([pa, pb])
    since_improve = 0
    reward_acc, entropy_acc = [], []
    for step in range(1, steps + 1):
        idx = rng.choice(len(train_triples), size=batch_size,
                         replace=len(train_triples) < batch_size)
        batch_triples = [train_triples[i] for i in idx]
        with ad.record() as tape:
            batch = rollout(agent_a, agent_b, lm, ranker, batch_triples, cfg,
                            rng, baseline, greedy_message=greedy_message)
            objective = ad.add(agent_a_objective(batch, cfg, standardize),
                               agent_b_objective(batch))
            loss = ad.neg(objective)
            if not np.isfinite(loss.data):
                log.diverged = True
                log.notes.append(f"diverged at step {step}")
                err = NumericError(f"fine-tuning loss diverged at step {step}")
                err.train_log = log
                raise err
            ad.backward(loss, tape)
        clip_global_norm(pa, clip)
        clip_global_norm(pb, clip)
        adam_step(opt_a)
        adam_step(opt_b)
        reward_acc.append(batch.mean_reward)
        entropy_acc.append(batch.mean_entropy)
        if step % eval_interval == 0:
            task, pivot, nll = evaluate_pair(agent_a, agent_b, dev_triples, eval_lm)
            log.append(EvalRecord(step, task, pivot, nll,
                                  float(np.mean(reward_acc)),
                                  float(np.mean(entropy_acc)), opt_a.lr))
            reward_acc, entropy_acc = [], []
            if task > best_bleu:
                best_bleu, best_step = task, step
                best = _snapshot([pa, pb])
                since_improve = 0
            else:
                since_improve += 1
                if since_improve % patience == 0:
                    opt_a.lr /= 2.0
                    opt_b.lr /= 2.0
                if since_improve >= stop_after:
                    break
    _restore([pa, pb], best)
    return FinetuneResult(log, best_step, best_bleu)


def finetune_b_only(agent_a: AgentParams, agent_b: AgentParams,
                    train_triples: list[Triple], dev_triples: list[Triple],
                    steps: int, batch_size: int, lr: float, eval_interval: int,
                    patience: int, stop_after: int, seed: int,
                    eval_lm: LMParams | None = None,
                    clip: float = 5.0) -> FinetuneResult:
    """Adapt Agent B to frozen Agent A's greedy messages by cross-entropy."""
    if not train_triples or not dev_triples:
        raise ConfigError("fine-tuning needs nonempty train and dev corpora")
    rng = np.random.default_rng(seed)
    pb = agent_b.tensors()
    opt_b = AdamState(pb, lr=lr)
    log = TrainLog()
    task0, pivot0, nll0 = evaluate_pair(agent_a, agent_b, dev_triples, eval_lm)
    log.append(EvalRecord(0, task0, pivot0, nll0, 0.0, 0.0, lr))
    best_bleu, best_step = task0, 0
    best = _snapshot([pb])
    since_improve = 0
    messages: dict[int, list[int]] = {}
    with ad.no_grad():
        for i, t in enumerate(train_triples):
            src_ids = agent_a.vocab_in.encode(t.src)
            ann = ag.encode(agent_a, src_ids)
            msg = ag.decode_capped(agent_a, ann, len(src_ids), greedy=True)
            content = msg.content_tokens()
            messages[i] = content if content else [Vocab.EOS]
    for step in range(1, steps + 1):
        idx = rng.choice(len(train_triples), size=batch_size,
                         replace=len(train_triples) < batch_size)
        with ad.record() as tape:
            terms = []
            for i in idx:
                tgt_ids = agent_b.vocab_out.encode(train_triples[i].tgt)
                terms.append(ag.sequence_logprob(agent_b, messages[i], tgt_ids))
            loss = ad.neg(ad.weighted_sum_scalars(terms, [1.0] * len(terms)))
            if not np.isfinite(loss.data):
                log.diverged = True
                log.notes.append(f"diverged at step {step}")
                err = NumericError(f"fine-tuning loss diverged at step {step}")
                err.train_log = log
                raise err
            ad.backward(loss, tape)
        clip_global_norm(pb, clip)
        adam_step(opt_b)
        if step % eval_interval == 0:
            task, pivot, nll = evaluate_pair(agent_a, agent_b, dev_triples, eval_lm)
            log.append(EvalRecord(step, task, pivot, nll, 0.0, 0.0, opt_b.lr))
            if task > best_bleu:
                best_bleu, best_step = task, step
                best = _snapshot([pb])
                since_improve = 0
            else:
                since_improve += 1
                if since_improve % patience == 0:
                    opt_b.lr /= 2.0
                if since_improve >= stop_after:
                    break
    _restore([pb], best)
    return FinetuneResult(log, best_step, best_bleu)
