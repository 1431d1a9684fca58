"""Experiment harness: corpus generation through regime comparison.

Every subcommand reads one flat key=value config, writes its artifacts under
the run directory, and appends to manifest.txt.  Fixed output names:

    data/*.tsv                     corpora
    ckpt/*.ckpt                    model checkpoints
    logs/<REGIME>_<seed>.log       per-evaluation training records
    reports/<REGIME>_<seed>.txt    drift reports (+ .curve.csv)
    scores/<REGIME>.csv            per-sentence pivot scores of the median run
    results/<REGIME>.tsv           per-seed result rows
    summary.tsv                    one row per regime (mean, std over seeds)
    curves.csv                     merged learning curves
    compare_<X>_vs_<Y>.txt         significance test record

Exit codes: 0 success, 2 bad config/usage, 3 missing prerequisite artifact,
4 numeric divergence.
"""
from __future__ import annotations

import argparse
import hashlib
import sys
import time
from pathlib import Path

import numpy as np

from . import agents as ag
from . import corpus as cp
from . import metrics, stats, trainer
from .agents import AgentParams
from .checkpoint import load_into, save_tensors
from .config import REGIMES, ExperimentConfig, load_config
from .constraints import (LMParams, RankerParams, RewardConfig, ranker_recall,
                          train_lm, train_ranker)
from .errors import (ConfigError, DriftLabError, MissingArtifactError,
                     NumericError, UsageError)

SUMMARY_ORDER = ("PRETRAINED",) + REGIMES


class Workspace:
    """Run directory: artifact paths, manifest bookkeeping, prerequisite checks."""

    def __init__(self, out: str | Path, cfg: ExperimentConfig):
        self.root = Path(out)
        self.cfg = cfg
        self.root.mkdir(parents=True, exist_ok=True)
        self._t0 = time.monotonic()
        self._command = "?"

    def begin(self, command: str) -> None:
        self._command = command
        self._t0 = time.monotonic()

    def path(self, rel: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write_text(self, rel: str, text: str) -> Path:
        p = self.path(rel)
        p.write_text(text, encoding="utf-8")
        self._record(p)
        return p

    def write_bytes_via(self, rel: str, writer) -> Path:
        p = self.path(rel)
        writer(p)
        self._record(p)
        return p

    def _record(self, p: Path) -> None:
        digest = hashlib.sha256(p.read_bytes()).hexdigest()
        elapsed = time.monotonic() - self._t0
        line = (f"{digest}\t{p.relative_to(self.root)}\t{self._command}"
                f"\t{self.cfg.digest()}\t{elapsed:.2f}\n")
        with open(self.root / "manifest.txt", "a", encoding="utf-8") as f:
            f.write(line)

    def require(self, rel: str, produced_by: str) -> Path:
        p = self.root / rel
        if not p.exists():
            raise MissingArtifactError(str(p), produced_by)
        return p


# ---------------------------------------------------------------------------
# model construction and checkpoints
# ---------------------------------------------------------------------------


def _vocabs():
    return cp.build_vocab("src"), cp.build_vocab("pivot"), cp.build_vocab("tgt")


def _fresh_agent_a(cfg: ExperimentConfig, seed: int) -> AgentParams:
    vs, vp, _ = _vocabs()
    return AgentParams.init(vs, vp, cfg.emb, cfg.hidden, np.random.default_rng(seed))


def _fresh_agent_b(cfg: ExperimentConfig, seed: int) -> AgentParams:
    _, vp, vt = _vocabs()
    return AgentParams.init(vp, vt, cfg.emb, cfg.hidden, np.random.default_rng(seed))


def _fresh_direct(cfg: ExperimentConfig, seed: int) -> AgentParams:
    vs, _, vt = _vocabs()
    return AgentParams.init(vs, vt, cfg.emb, cfg.hidden, np.random.default_rng(seed))


def _load_agent(ws: Workspace, rel: str, produced_by: str, builder) -> AgentParams:
    path = ws.require(rel, produced_by)
    agent = builder(ws.cfg, 0)
    load_into(path, agent.tensors())
    return agent


def _load_lm(ws: Workspace) -> LMParams:
    path = ws.require("ckpt/lm.ckpt", "train-lm")
    _, vp, _ = _vocabs()
    lm = LMParams.init(vp, ws.cfg.lm_emb, ws.cfg.lm_hidden, np.random.default_rng(0))
    load_into(path, lm.tensors())
    return lm


def _load_ranker(ws: Workspace) -> RankerParams:
    path = ws.require("ckpt/ranker.ckpt", "train-ranker")
    _, vp, _ = _vocabs()
    rk = RankerParams.init(vp, ws.cfg.ranker_emb, ws.cfg.ranker_hidden,
                           np.random.default_rng(0))
    load_into(path, rk.tensors())
    return rk


def _read_corpus(ws: Workspace, name: str) -> list[cp.Triple]:
    return cp.read_tsv(ws.require(f"data/{name}.tsv", "generate"))


def _reward_config(cfg: ExperimentConfig) -> RewardConfig:
    return RewardConfig(beta_lm=cfg.beta_lm, beta_g=cfg.beta_g,
                        alpha_pg=cfg.alpha_pg, alpha_entr=cfg.alpha_entr,
                        alpha_b=cfg.alpha_b)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_generate(ws: Workspace) -> None:
    cfg = ws.cfg
    base = cfg.corpus_seed * 10
    pre = cp.generate_corpus(cp.PRETRAIN_DOMAIN, cfg.pretrain_size, base + 1,
                             sigma=cfg.grounding_sigma)
    n_ft = cfg.finetune_train_size + cfg.finetune_dev_size + cfg.finetune_test_size
    fine = cp.generate_corpus(cp.FINETUNE_DOMAIN, n_ft, base + 2,
                              sigma=cfg.grounding_sigma,
                              exclude=cp.meaning_keys(pre))
    text = cp.generate_corpus(cp.TEXT_DOMAIN, cfg.text_size, base + 3,
                              sigma=cfg.grounding_sigma)
    n = len(fine)
    train, dev, test = cp.split(fine, (cfg.finetune_train_size / n,
                                       cfg.finetune_dev_size / n,
                                       cfg.finetune_test_size / n))
    for name, triples in (("pretrain", pre), ("finetune_train", train),
                          ("finetune_dev", dev), ("finetune_test", test),
                          ("text", text)):
        ws.write_bytes_via(f"data/{name}.tsv", lambda p, tr=triples: cp.write_tsv(p, tr))
    print(f"generated {len(pre)} pretrain, {n} fine-tune, {len(text)} text triples")


def cmd_pretrain(ws: Workspace) -> None:
    cfg = ws.cfg
    pre = _read_corpus(ws, "pretrain")
    train, dev = cp.split(pre, (0.9, 0.1))
    agent_a = _fresh_agent_a(cfg, cfg.pretrain_seed)
    agent_b = _fresh_agent_b(cfg, cfg.pretrain_seed + 1)
    log_a = trainer.pretrain(
        agent_a, [(t.src, t.pivot) for t in train], [(t.src, t.pivot) for t in dev],
        cfg.pretrain_epochs, cfg.pretrain_batch, cfg.pretrain_lr,
        seed=cfg.pretrain_seed, dropout=cfg.dropout,
        patience=cfg.pretrain_patience, clip=cfg.clip)
    log_b = trainer.pretrain(
        agent_b, [(t.pivot, t.tgt) for t in train], [(t.pivot, t.tgt) for t in dev],
        cfg.pretrain_epochs, cfg.pretrain_batch, cfg.pretrain_lr,
        seed=cfg.pretrain_seed + 1, dropout=cfg.dropout,
        patience=cfg.pretrain_patience, clip=cfg.clip)
    ws.write_bytes_via("ckpt/a0.ckpt", lambda p: save_tensors(p, agent_a.tensors()))
    ws.write_bytes_via("ckpt/b0.ckpt", lambda p: save_tensors(p, agent_b.tensors()))
    ws.write_text("logs/pretrain_a.log", log_a.to_text())
    ws.write_text("logs/pretrain_b.log", log_b.to_text())
    print(f"agent A dev BLEU {max(r.task_bleu for r in log_a.records):.2f}; "
          f"agent B dev BLEU {max(r.task_bleu for r in log_b.records):.2f}")


def cmd_train_lm(ws: Workspace) -> None:
    cfg = ws.cfg
    text = _read_corpus(ws, "text")
    _, vp, _ = _vocabs()
    sentences = [vp.encode(t.pivot) for t in text]
    cut = max(1, int(0.95 * len(sentences)))
    lm, dev_nll = train_lm(sentences[:cut], vp, cfg.lm_emb, cfg.lm_hidden,
                           cfg.lm_epochs, cfg.lm_lr, cfg.lm_batch,
                           seed=cfg.lm_seed, dev_sentences=sentences[cut:],
                           clip=cfg.clip)
    ws.write_bytes_via("ckpt/lm.ckpt", lambda p: save_tensors(p, lm.tensors()))
    ws.write_text("logs/lm.log", f"dev_nll_per_token\t{dev_nll:.6f}\n")
    print(f"language model dev NLL/token {dev_nll:.4f}")


def cmd_train_ranker(ws: Workspace) -> None:
    cfg = ws.cfg
    text = _read_corpus(ws, "text")
    _, vp, _ = _vocabs()
    pairs = [(vp.encode(t.pivot), t.grounding) for t in text]
    cut = max(2, int(0.9 * len(pairs)))
    ranker = train_ranker(pairs[:cut], vp, cfg.ranker_emb, cfg.ranker_hidden,
                          cfg.ranker_epochs, cfg.ranker_lr, cfg.ranker_batch,
                          seed=cfg.ranker_seed, clip=cfg.clip)
    recall = ranker_recall(ranker, pairs[cut:])
    ws.write_bytes_via("ckpt/ranker.ckpt", lambda p: save_tensors(p, ranker.tensors()))
    ws.write_text("logs/ranker.log",
                  "".join(f"recall@{k}\t{v:.6f}\n" for k, v in sorted(recall.items())))
    print("ranker " + ", ".join(f"recall@{k} {v:.3f}" for k, v in sorted(recall.items())))


def _regime_models(ws: Workspace, regime: str):
    lm = _load_lm(ws)
    use_lm = lm if "LM" in regime else None
    use_rk = _load_ranker(ws) if "+G" in regime else None
    return lm, use_lm, use_rk


def _drift_and_scores(ws: Workspace, regime: str, seed, agent_a, agent_b,
                      eval_lm, test):
    report = metrics.drift_report(agent_a, agent_b, eval_lm, test,
                                  per_sentence=True)
    tag = f"{regime}_{seed}"
    ws.write_text(f"reports/{tag}.txt", report.to_text())
    ws.write_text(f"reports/{tag}.curve.csv", report.curve_csv())
    return report


def _result_row(seed, report) -> str:
    return (f"{seed}\t{report.task_bleu:.4f}\t{report.pivot_bleu:.4f}"
            f"\t{report.pivot_lm_nll:.4f}\t{report.freq.unique_per_sentence:.4f}"
            f"\t{report.freq.unique_all_ratio:.4f}")


RESULT_HEADER = ("seed\ttask_bleu\tpivot_bleu\tpivot_lm_nll"
                 "\tuniq_per_sent\tuniq_all_ratio")


def _write_results(ws: Workspace, regime: str, rows: list[str],
                   values: list[tuple[float, float]]) -> None:
    tasks = np.array([v[0] for v in values])
    pivots = np.array([v[1] for v in values])
    lines = [RESULT_HEADER] + rows
    lines.append(f"MEAN\t{tasks.mean():.4f}\t{pivots.mean():.4f}\t-\t-\t-")
    lines.append(f"STD\t{tasks.std():.4f}\t{pivots.std():.4f}\t-\t-\t-")
    ws.write_text(f"results/{regime}.tsv", "\n".join(lines) + "\n")
    _rebuild_summary(ws)
    _rebuild_curves(ws)


def _rebuild_summary(ws: Workspace) -> None:
    lines = ["regime\ttask_bleu_mean\ttask_bleu_std\tpivot_bleu_mean\tpivot_bleu_std"]
    for regime in SUMMARY_ORDER:
        p = ws.root / f"results/{regime}.tsv"
        if not p.exists():
            continue
        mean = std = None
        for line in p.read_text(encoding="utf-8").splitlines():
            cols = line.split("\t")
            if cols[0] == "MEAN":
                mean = cols
            elif cols[0] == "STD":
                std = cols
        if mean and std:
            lines.append(f"{regime}\t{mean[1]}\t{std[1]}\t{mean[2]}\t{std[2]}")
    ws.write_text("summary.tsv", "\n".join(lines) + "\n")


def _rebuild_curves(ws: Workspace) -> None:
    out = ["regime,seed,step,task_bleu,pivot_bleu,lm_nll,mean_reward,mean_entropy,lr"]
    logdir = ws.root / "logs"
    if logdir.exists():
        for p in sorted(logdir.glob("*_*.log")):
            stem = p.stem
            regime, _, seed = stem.rpartition("_")
            if regime not in REGIMES:
                continue
            for line in p.read_text(encoding="utf-8").splitlines()[1:]:
                if line.startswith("#"):
                    continue
                out.append(",".join([regime, seed] + line.split("\t")))
    ws.write_text("curves.csv", "\n".join(out) + "\n")


def cmd_finetune(ws: Workspace, regime: str | None = None) -> None:
    cfg = ws.cfg
    regime = regime or cfg.regime
    if regime not in REGIMES:
        raise ConfigError(f"unknown regime {regime!r}")
    train = _read_corpus(ws, "finetune_train")
    dev = _read_corpus(ws, "finetune_dev")
    eval_lm = _load_lm(ws)
    if regime == "ENSEMBLE":
        _run_ensemble(ws, regime, dev, eval_lm)
        return
    rows, values, logs, reports = [], [], [], []
    for seed in cfg.seeds:
        agent_a = _load_agent(ws, "ckpt/a0.ckpt", "pretrain", _fresh_agent_a)
        agent_b = _load_agent(ws, "ckpt/b0.ckpt", "pretrain", _fresh_agent_b)
        if regime == "DIRECT":
            agent_d = _fresh_direct(cfg, seed)
            pre = _read_corpus(ws, "pretrain")
            ptr, pdev = cp.split(pre, (0.9, 0.1))
            trainer.pretrain(agent_d, [(t.src, t.tgt) for t in ptr],
                             [(t.src, t.tgt) for t in pdev],
                             cfg.pretrain_epochs, cfg.pretrain_batch,
                             cfg.pretrain_lr, seed=seed, dropout=cfg.dropout,
                             patience=cfg.pretrain_patience, clip=cfg.clip)
            log = trainer.pretrain(agent_d, [(t.src, t.tgt) for t in train],
                                   [(t.src, t.tgt) for t in dev],
                                   cfg.pretrain_epochs, cfg.pretrain_batch,
                                   cfg.pretrain_lr, seed=seed + 1,
                                   dropout=cfg.dropout,
                                   patience=cfg.pretrain_patience, clip=cfg.clip)
            hyps, refs = [], []
            for t in dev:
                ids = agent_d.vocab_in.encode(t.src)
                out = ag.translate_greedy(agent_d, ids, len(ids) + trainer.GEN_SLACK)
                hyps.append(agent_d.vocab_out.decode(out, stop_at_eos=False))
                refs.append(list(t.tgt))
            task = metrics.corpus_bleu(hyps, refs)
            ws.write_bytes_via(f"ckpt/DIRECT_{seed}.ckpt",
                               lambda p: save_tensors(p, agent_d.tensors()))
            ws.write_text(f"logs/DIRECT_{seed}.log", log.to_text())
            rows.append(f"{seed}\t{task:.4f}\t0.0000\t-\t-\t-")
            values.append((task, 0.0))
            logs.append(log)
            reports.append(None)
            continue
        if regime == "FIXED_A":
            result = trainer.finetune_b_only(
                agent_a, agent_b, train, dev, cfg.ft_steps, cfg.ft_batch,
                cfg.ft_lr, cfg.eval_interval, cfg.patience, cfg.stop_after,
                seed=seed, eval_lm=eval_lm, clip=cfg.clip)
        else:
            _, use_lm, use_rk = _regime_models(ws, regime)
            baseline = trainer.BaselineNet.init(
                cfg.hidden, cfg.baseline_hidden, np.random.default_rng(seed + 99))
            result = trainer.finetune(
                agent_a, agent_b, baseline, use_lm, use_rk, train, dev,
                _reward_config(cfg), cfg.ft_steps, cfg.ft_batch, cfg.ft_lr,
                cfg.eval_interval, cfg.patience, cfg.stop_after, seed=seed,
                eval_lm=eval_lm, clip=cfg.clip,
                standardize=cfg.standardize_advantage)
        tag = f"{regime}_{seed}"
        ws.write_bytes_via(f"ckpt/{tag}_a.ckpt",
                           lambda p: save_tensors(p, agent_a.tensors()))
        ws.write_bytes_via(f"ckpt/{tag}_b.ckpt",
                           lambda p: save_tensors(p, agent_b.tensors()))
        ws.write_text(f"logs/{tag}.log", result.log.to_text())
        report = _drift_and_scores(ws, regime, seed, agent_a, agent_b, eval_lm, dev)
        rows.append(_result_row(seed, report))
        values.append((report.task_bleu, report.pivot_bleu))
        logs.append(result.log)
        reports.append(report)
    if regime != "DIRECT" and len(cfg.seeds) % 2 == 1:
        med = stats.median_run_selector(logs)
        scores = reports[med].sentence_scores
        lines = ["id,score"] + [f"t{i:04d},{s:.6f}" for i, s in enumerate(scores)]
        ws.write_text(f"scores/{regime}.csv", "\n".join(lines) + "\n")
    _write_results(ws, regime, rows, values)
    tasks = np.array([v[0] for v in values])
    pivots = np.array([v[1] for v in values])
    print(f"{regime}: task BLEU {tasks.mean():.2f}+-{tasks.std():.2f}, "
          f"pivot BLEU {pivots.mean():.2f}+-{pivots.std():.2f}")


def _run_ensemble(ws: Workspace, regime: str, dev, eval_lm) -> None:
    cfg = ws.cfg
    agent_a = _load_agent(ws, "ckpt/a0.ckpt", "pretrain", _fresh_agent_a)
    agent_b = _load_agent(ws, "ckpt/b0.ckpt", "pretrain", _fresh_agent_b)
    import driftlab.autodiff as ad
    pivot_hyps, tgt_hyps = [], []
    with ad.no_grad():
        for t in dev:
            src_ids = agent_a.vocab_in.encode(t.src)
            ann = ag.encode(agent_a, src_ids)
            hyps, _short = ag.beam_search(agent_a, ann, cfg.ensemble_k, len(src_ids))
            out = ag.ensemble_decode(agent_b, [h for h, _ in hyps],
                                     len(src_ids) + trainer.GEN_SLACK)
            pivot_hyps.append(agent_a.vocab_out.decode(hyps[0][0]))
            tgt_hyps.append(agent_b.vocab_out.decode(out, stop_at_eos=False))
    task = metrics.corpus_bleu(tgt_hyps, [list(t.tgt) for t in dev])
    pivot = metrics.corpus_bleu(pivot_hyps, [list(t.pivot) for t in dev])
    rows = [f"0\t{task:.4f}\t{pivot:.4f}\t-\t-\t-"]
    _write_results(ws, regime, rows, [(task, pivot)])
    print(f"ENSEMBLE (K={cfg.ensemble_k}): task BLEU {task:.2f}, pivot BLEU {pivot:.2f}")


def cmd_evaluate(ws: Workspace, ckpt_a: str | None, ckpt_b: str | None,
                 tag: str = "PRETRAINED") -> None:
    eval_lm = _load_lm(ws)
    if ckpt_a is None:
        agent_a = _load_agent(ws, "ckpt/a0.ckpt", "pretrain", _fresh_agent_a)
    else:
        agent_a = _fresh_agent_a(ws.cfg, 0)
        load_into(ws.require(ckpt_a, "finetune"), agent_a.tensors())
    if ckpt_b is None:
        agent_b = _load_agent(ws, "ckpt/b0.ckpt", "pretrain", _fresh_agent_b)
    else:
        agent_b = _fresh_agent_b(ws.cfg, 0)
        load_into(ws.require(ckpt_b, "finetune"), agent_b.tensors())
    dev = _read_corpus(ws, "finetune_dev")
    report = metrics.drift_report(agent_a, agent_b, eval_lm, dev, per_sentence=True)
    ws.write_text("drift_report.txt", report.to_text())
    ws.write_text("freq_curve.csv", report.curve_csv())
    lines = ["id,score"] + [f"t{i:04d},{s:.6f}"
                            for i, s in enumerate(report.sentence_scores)]
    ws.write_text(f"scores/{tag}.csv", "\n".join(lines) + "\n")
    if tag == "PRETRAINED":
        rows = [_result_row(0, report)]
        _write_results(ws, tag, rows, [(report.task_bleu, report.pivot_bleu)])
    print(f"task BLEU {report.task_bleu:.2f}, pivot BLEU {report.pivot_bleu:.2f}, "
          f"LM NLL {report.pivot_lm_nll:.3f}")


def cmd_compare(ws: Workspace, regime_x: str, regime_y: str) -> None:
    cfg = ws.cfg
    px = ws.require(f"scores/{regime_x}.csv", "finetune")
    py = ws.require(f"scores/{regime_y}.csv", "finetune")
    pairs = stats.PairedScores.from_files(px, py)
    full = stats.wilcoxon_signed_rank(pairs, enforce_min=True)
    boot = stats.bootstrap_test(pairs, n_boot=cfg.n_boot, seed=cfg.corpus_seed)
    record = (f"x={regime_x}\ty={regime_y}\tn={len(pairs)}\t"
              f"W={full.w:.1f}\tp={full.p:.6f}\t"
              f"boot_mean_W={boot.mean_w:.2f}\tboot_mean_p={boot.mean_p:.6f}\t"
              f"n_boot={boot.n_boot}\n")
    ws.write_text(f"compare_{regime_x}_vs_{regime_y}.txt".replace("+", ""), record)
    print(record.strip())


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftlab",
        description="Pivot-translation drift laboratory")
    parser.add_argument("--out", default="runs/exp", help="run directory")
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("-D", "--define", action="append", default=[],
                        metavar="KEY=VALUE", help="config override")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", help="write the synthetic corpora")
    sub.add_parser("pretrain", help="pretrain agents A and B")
    sub.add_parser("train-lm", help="train the pivot language model")
    sub.add_parser("train-ranker", help="train the grounding ranker")
    p = sub.add_parser("finetune", help="run a fine-tuning regime over all seeds")
    p.add_argument("--regime", default=None, choices=list(REGIMES))
    p = sub.add_parser("evaluate", help="drift-report a checkpoint pair")
    p.add_argument("--ckpt-a", default=None)
    p.add_argument("--ckpt-b", default=None)
    p.add_argument("--tag", default="PRETRAINED")
    p = sub.add_parser("compare", help="significance test between two regimes")
    p.add_argument("regime_x", nargs="?", default="PG+LM")
    p.add_argument("regime_y", nargs="?", default="PG+LM+G")
    sub.add_parser("direct", help="direct source-to-target upper bound")
    return parser


def run(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config, args.define)
    ws = Workspace(args.out, cfg)
    ws.begin(args.command)
    if args.command == "generate":
        cmd_generate(ws)
    elif args.command == "pretrain":
        cmd_pretrain(ws)
    elif args.command == "train-lm":
        cmd_train_lm(ws)
    elif args.command == "train-ranker":
        cmd_train_ranker(ws)
    elif args.command == "finetune":
        cmd_finetune(ws, args.regime)
    elif args.command == "evaluate":
        cmd_evaluate(ws, args.ckpt_a, args.ckpt_b, args.tag)
    elif args.command == "compare":
        cmd_compare(ws, args.regime_x, args.regime_y)
    elif args.command == "direct":
        cmd_finetune(ws, "DIRECT")


def main(argv: list[str] | None = None) -> int:
    try:
        run(argv)
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except MissingArtifactError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except DriftLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
