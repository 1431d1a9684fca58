"""Training objectives: gradients vs finite differences, estimator soundness."""
import numpy as np
import pytest

import driftlab.agents as ag
import driftlab.autodiff as ad
import driftlab.trainer as tr
from driftlab.agents import AgentParams
from driftlab.autodiff import Tensor
from driftlab.constraints import LMParams, RankerParams, RewardConfig
from driftlab.corpus import GROUNDING_DIM, Triple, Vocab
from driftlab.errors import ConfigError
from driftlab.optim import AdamState, adam_step

from conftest import assert_grads_close, numeric_grad, word_vocab


def _toy_world(seed=0, n=2):
    """Two-example toy batch with tiny vocabularies and all reward models."""
    rng = np.random.default_rng(seed)
    va, vp, vt = word_vocab(6, "s"), word_vocab(6, "p"), word_vocab(6, "t")
    agent_a = AgentParams.init(va, vp, emb=4, hidden=6, rng=rng)
    agent_b = AgentParams.init(vp, vt, emb=4, hidden=6, rng=rng)
    lm = LMParams.init(vp, 3, 5, rng)
    ranker = RankerParams.init(vp, 3, 5, rng)
    baseline = tr.BaselineNet.init(6, 5, rng)
    srcs = [["s0", "s1", "s2", "s3"], ["s4", "s2", "s0"]]
    tgts = [["t1", "t2", "t0"], ["t3", "t0", "t4", "t1"]]
    triples = [Triple(tuple(srcs[k]), (), tuple(tgts[k]), None,
                      rng.normal(size=GROUNDING_DIM)) for k in range(n)]
    return agent_a, agent_b, lm, ranker, baseline, triples


def _all_params(agent_a, agent_b, baseline):
    out = {f"a.{k}": t for k, t in agent_a.tensors().items()}
    out.update({f"b.{k}": t for k, t in agent_b.tensors().items()})
    out.update(baseline.tensors())
    return out


# ---------------------------------------------------------------------------
# objective gradients: analytic vs central differences of a pinned replica
# ---------------------------------------------------------------------------


def test_joint_objective_gradients_match_finite_differences():
    # Route 1: the production objective on a sampled batch, all three policy
    # terms active plus both constraint rewards, backward through the tape.
    # Route 2: a pinned replica that holds the sampled tokens, the rewards,
    # and the advantage coefficients fixed at their base-point values (the
    # stop-gradient semantics) while re-running the differentiable parts from
    # the current parameters.  Central differences of the replica must match
    # the tape gradients for every parameter of A, B, and the baseline.
    agent_a, agent_b, lm, ranker, baseline, triples = _toy_world()
    cfg = RewardConfig(beta_lm=0.4, beta_g=0.3, alpha_pg=1.0,
                       alpha_entr=0.05, alpha_b=0.2)
    params = _all_params(agent_a, agent_b, baseline)
    with ad.record() as tape:
        batch = tr.rollout(agent_a, agent_b, lm, ranker, triples, cfg,
                           np.random.default_rng(3), baseline)
        objective = ad.add(tr.agent_a_objective(batch, cfg),
                           tr.agent_b_objective(batch))
        ad.backward(objective, tape)
    analytic = {k: ad.grad_of(t).copy() for k, t in params.items()}
    for t in params.values():
        t.grad = None

    tokens = [it.message.tokens for it in batch.items]
    rewards = [it.reward for it in batch.items]
    advantages = [it.reward - it.baseline_values for it in batch.items]
    # Decoder states feed the baseline as constants, so the replica pins them.
    states = [[s.copy() for s in it.message.states] for it in batch.items]

    def pinned():
        total = 0.0
        for k, t in enumerate(triples):
            src_ids = agent_a.vocab_in.encode(t.src)
            ann = ag.encode(agent_a, src_ids)
            msg = ag.replay(agent_a, ann, tokens[k])
            total += cfg.alpha_entr * msg.entropies.sum()
            total += float((cfg.alpha_pg * advantages[k] * msg.logps).sum())
            preds = np.array([float(baseline.predict(s).data)
                              for s in states[k]])
            total -= cfg.alpha_b * float(((preds - rewards[k]) ** 2).sum())
            b_in = msg.content_tokens() or [Vocab.EOS]
            tgt_ids = agent_b.vocab_out.encode(t.tgt)
            total += float(ag.sequence_logprob(agent_b, b_in, tgt_ids).data)
        return Tensor(total)

    with ad.no_grad():
        assert float(pinned().data) == pytest.approx(float(objective.data),
                                                     abs=1e-10)
    for name, tensor in params.items():
        assert_grads_close(analytic[name], numeric_grad(pinned, tensor), name)


def test_objective_backward_respects_stop_gradients():
    agent_a, agent_b, lm, ranker, baseline, triples = _toy_world(seed=1)
    cfg = RewardConfig(beta_lm=0.2, beta_g=0.2, alpha_entr=0.02, alpha_b=0.1)
    # The policy objective alone reaches A and the baseline, never B or the
    # frozen constraint models.
    with ad.record() as tape:
        batch = tr.rollout(agent_a, agent_b, lm, ranker, triples, cfg,
                           np.random.default_rng(5), baseline)
        ad.backward(tr.agent_a_objective(batch, cfg), tape)
    assert any(t.grad is not None for t in agent_a.tensors().values())
    assert any(t.grad is not None for t in baseline.tensors().values())
    assert all(t.grad is None for t in agent_b.tensors().values())
    assert all(t.grad is None for t in lm.tensors().values())
    assert all(t.grad is None for t in ranker.tensors().values())
    for t in (*agent_a.tensors().values(), *baseline.tensors().values()):
        t.grad = None
    # The listener objective alone reaches only B.
    with ad.record() as tape:
        batch = tr.rollout(agent_a, agent_b, lm, ranker, triples, cfg,
                           np.random.default_rng(5), baseline)
        ad.backward(tr.agent_b_objective(batch), tape)
    assert all(t.grad is None for t in agent_a.tensors().values())
    assert all(t.grad is None for t in baseline.tensors().values())
    assert any(t.grad is not None for t in agent_b.tensors().values())


def test_baseline_gradient_comes_only_from_mse_term():
    # Replaying the identical trajectory under doubled alpha_b must exactly
    # double every baseline gradient: the baseline receives nothing from the
    # policy terms, whose advantage coefficients are detached values.
    agent_a, agent_b, lm, ranker, baseline, triples = _toy_world(seed=2)

    def grads(alpha_b):
        cfg = RewardConfig(beta_lm=0.3, beta_g=0.3, alpha_entr=0.03,
                           alpha_b=alpha_b)
        with ad.record() as tape:
            batch = tr.rollout(agent_a, agent_b, lm, ranker, triples, cfg,
                               np.random.default_rng(7), baseline)
            ad.backward(tr.agent_a_objective(batch, cfg), tape)
        out = {k: ad.grad_of(t).copy() for k, t in baseline.tensors().items()}
        for t in baseline.tensors().values():
            t.grad = None
        for t in agent_a.tensors().values():
            t.grad = None
        return out

    g1, g2 = grads(0.1), grads(0.2)
    for k in g1:
        np.testing.assert_array_equal(2.0 * g1[k], g2[k])


def test_objective_values_decompose():
    agent_a, agent_b, lm, ranker, _, triples = _toy_world(seed=3)
    # No baseline: advantages equal the raw reward at every step.
    cfg = RewardConfig(beta_lm=0.5, beta_g=0.25, alpha_pg=1.0,
                       alpha_entr=0.1, alpha_b=0.1)
    with ad.record():
        batch = tr.rollout(agent_a, agent_b, lm, ranker, triples, cfg,
                           np.random.default_rng(11))
        la = float(tr.agent_a_objective(batch, cfg).data)
        lb = float(tr.agent_b_objective(batch).data)
    want_la = sum(cfg.alpha_entr * it.message.entropies.sum()
                  + cfg.alpha_pg * it.reward * it.message.logps.sum()
                  for it in batch.items)
    assert la == pytest.approx(want_la, abs=1e-10)
    assert lb == pytest.approx(sum(it.logp_b for it in batch.items), abs=1e-10)
    for it in batch.items:
        assert it.reward == pytest.approx(
            it.logp_b + cfg.beta_lm * it.lm_score + cfg.beta_g * it.g_score,
            abs=1e-12)


def test_advantage_standardization_rescales_coefficients():
    agent_a, agent_b, _, _, _, triples = _toy_world(seed=4)
    cfg = RewardConfig(alpha_entr=0.0, alpha_b=0.0)
    with ad.record():
        batch = tr.rollout(agent_a, agent_b, None, None, triples, cfg,
                           np.random.default_rng(13))
        raw = float(tr.agent_a_objective(batch, cfg).data)
        std = float(tr.agent_a_objective(batch, cfg, standardize=True).data)
    adv = np.concatenate([np.full(len(it.message.tokens), it.reward)
                          for it in batch.items])
    logps = np.concatenate([it.message.logps for it in batch.items])
    assert raw == pytest.approx(float(adv @ logps), abs=1e-10)
    zadv = (adv - adv.mean()) / adv.std()
    assert std == pytest.approx(float(zadv @ logps), abs=1e-10)


def test_rollout_messages_respect_length_cap():
    agent_a, agent_b, lm, ranker, _, _ = _toy_world(seed=5)
    rng = np.random.default_rng(17)
    srcs = [["s0"], ["s1", "s2"], ["s3", "s4", "s0", "s1", "s2", "s5"]]
    triples = [Triple(tuple(s), (), ("t0", "t1"), None,
                      rng.normal(size=GROUNDING_DIM)) for s in srcs]
    cfg = RewardConfig()
    for trial in range(10):
        batch = tr.rollout(agent_a, agent_b, lm, ranker, triples, cfg,
                           np.random.default_rng(trial))
        for it, t in zip(batch.items, triples):
            assert len(it.message.tokens) <= len(t.src)


# ---------------------------------------------------------------------------
# policy-gradient estimator on a three-action bandit
# ---------------------------------------------------------------------------


def _bandit_policy(theta):
    with ad.no_grad():
        return ad.softmax(Tensor(theta)).data.copy()


def _logp_grads_from_tape(theta):
    """d log p(a) / d theta for each action, via the autodiff tape."""
    grads = []
    for a in range(len(theta)):
        t = Tensor(theta.copy(), requires_grad=True)
        with ad.record() as tape:
            ad.backward(ad.pick(ad.log_softmax(t), a), tape)
        grads.append(t.grad.copy())
    return np.stack(grads)


def test_bandit_score_function_gradient_matches_softmax_identity():
    theta = np.array([0.2, -0.1, 0.4])
    p = _bandit_policy(theta)
    grads = _logp_grads_from_tape(theta)
    np.testing.assert_allclose(grads, np.eye(3) - p[None, :], atol=1e-12)


def test_bandit_estimator_within_3_sigma_of_exact_gradient():
    theta = np.array([0.2, -0.1, 0.4])
    rewards = np.array([1.0, 0.3, -0.5])
    p = _bandit_policy(theta)
    dlogp = _logp_grads_from_tape(theta)
    exact = p * (rewards - p @ rewards)

    n = 100_000
    rng = np.random.default_rng(2024)
    actions = rng.choice(3, size=n, p=p)
    samples = rewards[actions, None] * dlogp[actions]
    mean = samples.mean(axis=0)
    sem = samples.std(axis=0, ddof=1) / np.sqrt(n)
    assert (np.abs(mean - exact) <= 3.0 * sem).all()


def test_trained_baseline_reduces_estimator_variance():
    theta = np.array([0.2, -0.1, 0.4])
    rewards = np.array([1.0, 0.3, -0.5])
    p = _bandit_policy(theta)
    dlogp = _logp_grads_from_tape(theta)

    n = 100_000
    rng = np.random.default_rng(99)
    actions = rng.choice(3, size=n, p=p)

    # Fit the state-dependent baseline on a fixed dummy state: it converges
    # to a constant near E[reward] by minimizing the squared error.
    state = np.ones(4)
    net = tr.BaselineNet.init(4, 6, np.random.default_rng(1))
    opt = AdamState(net.tensors(), lr=0.05)
    for step in range(300):
        batch = rewards[actions[rng.integers(0, n, size=16)]]
        with ad.record() as tape:
            preds = [net.predict(state) for _ in range(len(batch))]
            loss = ad.squared_error_to_consts(preds, batch.tolist())
            ad.backward(loss, tape)
        adam_step(opt)
    with ad.no_grad():
        b = float(net.predict(state).data)
    assert b == pytest.approx(p @ rewards, abs=0.1)

    plain = rewards[actions, None] * dlogp[actions]
    centered = (rewards[actions] - b)[:, None] * dlogp[actions]
    # Both estimators stay unbiased; the baseline shrinks the variance.
    sem = centered.std(axis=0, ddof=1) / np.sqrt(n)
    exact = p * (rewards - p @ rewards)
    assert (np.abs(centered.mean(axis=0) - exact) <= 3.0 * sem).all()
    assert centered.var(axis=0).sum() < plain.var(axis=0).sum()


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------


def _word_pairs(n, rng):
    # Character rename s_k -> p_k at varying lengths: learnable by a tiny
    # model, so the test exercises the loop, not the model capacity.
    pairs = []
    for i in range(n):
        ln = int(rng.integers(2, 5))
        src = [f"s{(i + j) % 6}" for j in range(ln)]
        out = [f"p{(i + j) % 6}" for j in range(ln)]
        pairs.append((src, out))
    return pairs


def test_pretrain_memorizes_a_tiny_corpus():
    rng = np.random.default_rng(0)
    agent = AgentParams.init(word_vocab(6, "s"), word_vocab(6, "p"),
                             emb=8, hidden=12, rng=rng)
    pairs = _word_pairs(8, rng)
    # The dev curve plateaus before epoch ~96, so patience must span the run.
    log = tr.pretrain(agent, pairs, pairs, epochs=120, batch_size=4, lr=0.005,
                      seed=1, dropout=0.0, patience=120)
    assert log.records[0].step == 0
    assert max(r.task_bleu for r in log.records) == 100.0
    # The restored parameters reproduce the best recorded dev score.
    assert tr._supervised_dev_bleu(agent, pairs) == 100.0


def test_pretrain_validates_corpora():
    agent = AgentParams.init(word_vocab(4, "s"), word_vocab(4, "p"),
                             emb=3, hidden=4, rng=np.random.default_rng(0))
    with pytest.raises(ConfigError):
        tr.pretrain(agent, [], [(["s0"], ["p0"])], 1, 1, 0.01, seed=0)
    with pytest.raises(ConfigError):
        tr.pretrain(agent, [(["s0"], ["p0"])], [], 1, 1, 0.01, seed=0)


def _finetune_once(seed_world=8):
    agent_a, agent_b, lm, ranker, baseline, _ = _toy_world(seed=seed_world)
    rng = np.random.default_rng(21)
    triples = []
    for i in range(12):
        ln = int(rng.integers(2, 5))
        src = tuple(f"s{(i + j) % 6}" for j in range(ln))
        piv = tuple(f"p{(i + j) % 6}" for j in range(ln))
        tgt = tuple(f"t{(i + 2 * j) % 6}" for j in range(ln))
        triples.append(Triple(src, piv, tgt, None,
                              rng.normal(size=GROUNDING_DIM)))
    cfg = RewardConfig(beta_lm=0.1, beta_g=0.1)
    result = tr.finetune(agent_a, agent_b, baseline, lm, ranker,
                         triples, triples, cfg, steps=6, batch_size=3,
                         lr=0.005, eval_interval=3, patience=2, stop_after=6,
                         seed=5)
    return agent_a, agent_b, result


def test_finetune_is_deterministic_per_seed():
    a1, b1, r1 = _finetune_once()
    a2, b2, r2 = _finetune_once()
    for k, t in a1.tensors().items():
        np.testing.assert_array_equal(t.data, a2.tensors()[k].data)
    for k, t in b1.tensors().items():
        np.testing.assert_array_equal(t.data, b2.tensors()[k].data)
    assert r1.log.to_text() == r2.log.to_text()
    assert r1.best_step == r2.best_step


def test_finetune_restores_best_and_logs_steps():
    _, _, result = _finetune_once(seed_world=9)
    steps = [r.step for r in result.log.records]
    assert steps == sorted(steps) and steps[0] == 0
    assert result.best_task_bleu == max(r.task_bleu for r in result.log.records)


def test_finetune_b_only_keeps_pivot_messages_fixed():
    agent_a, agent_b, lm, _, _, _ = _toy_world(seed=10)
    rng = np.random.default_rng(31)
    triples = []
    for i in range(10):
        src = tuple(f"s{(i + j) % 6}" for j in range(3))
        piv = tuple(f"p{(i + j) % 6}" for j in range(3))
        tgt = tuple(f"t{(i + j) % 6}" for j in range(3))
        triples.append(Triple(src, piv, tgt, None,
                              rng.normal(size=GROUNDING_DIM)))
    task0, pivot0, _ = tr.evaluate_pair(agent_a, agent_b, triples)
    snap = {k: t.data.copy() for k, t in agent_a.tensors().items()}
    result = tr.finetune_b_only(agent_a, agent_b, triples, triples,
                                steps=8, batch_size=4, lr=0.01,
                                eval_interval=4, patience=2, stop_after=4,
                                seed=3)
    task1, pivot1, _ = tr.evaluate_pair(agent_a, agent_b, triples)
    for k, t in agent_a.tensors().items():
        np.testing.assert_array_equal(t.data, snap[k])
    assert pivot1 == pivot0
    assert task1 >= task0
    assert result.log.records[0].task_bleu == task0


def test_train_log_rejects_backward_steps():
    log = tr.TrainLog()
    log.append(tr.EvalRecord(0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.1))
    log.append(tr.EvalRecord(5, 1.0, 1.0, 0.0, 0.0, 0.0, 0.1))
    with pytest.raises(ConfigError):
        log.append(tr.EvalRecord(3, 1.0, 1.0, 0.0, 0.0, 0.0, 0.1))
