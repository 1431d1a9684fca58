"""Paired significance testing between regimes: bootstrapped Wilcoxon signed-rank."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EncodingError, UsageError


@dataclass
class PairedScores:
    """Per-sentence scores of two systems on identical sentence ids."""

    ids: list
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if not (len(self.ids) == self.x.shape[0] == self.y.shape[0]):
            raise UsageError("paired scores must align one-to-one")

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def from_files(cls, path_x: str | Path, path_y: str | Path) -> "PairedScores":
        sx = load_scores(path_x)
        sy = load_scores(path_y)
        if set(sx) != set(sy):
            raise UsageError("score files cover different sentence ids")
        ids = sorted(sx)
        return cls(ids, [sx[i] for i in ids], [sy[i] for i in ids])


def load_scores(path: str | Path) -> dict[str, float]:
    """Per-sentence score CSV: `id,score` per line, `#` comments allowed."""
    out: dict[str, float] = {}
    for lineno, line in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line or line.startswith("#") or line == "id,score":
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise EncodingError(f"{path}:{lineno}: expected `id,score`")
        try:
            out[parts[0]] = float(parts[1])
        except ValueError as e:
            raise EncodingError(f"{path}:{lineno}: bad score {parts[1]!r}") from e
    return out


@dataclass
class WilcoxonResult:
    w: float
    p: float
    n_nonzero: int
    degenerate: bool = False


def _rank_with_ties(values: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Mid-ranks (1-based) of values, plus tie-group sizes for the variance."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    tie_sizes = []
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mid = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mid
        tie_sizes.append(j - i + 1)
        i = j + 1
    return ranks, tie_sizes


def wilcoxon_signed_rank(pairs: PairedScores,
                         enforce_min: bool = True) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired differences.

    Zero differences are dropped; tied magnitudes get mid-ranks; W is the
    smaller of the positive- and negative-rank sums; the p-value uses the
    tie-corrected normal approximation with continuity correction.
    """
    d = pairs.x - pairs.y
    d = d[d != 0.0]
    n = d.shape[0]
    if n == 0:
        return WilcoxonResult(w=0.0, p=1.0, n_nonzero=0, degenerate=True)
    if enforce_min and n < 6:
        raise UsageError(f"need at least 6 nonzero differences, got {n}")
    ranks, tie_sizes = _rank_with_ties(np.abs(d))
    w_pos = float(ranks[d > 0].sum())
    w_neg = float(ranks[d < 0].sum())
    w = min(w_pos, w_neg)
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    var -= sum(t ** 3 - t for t in tie_sizes) / 48.0
    if var <= 0.0:
        return WilcoxonResult(w=w, p=1.0, n_nonzero=n, degenerate=True)
    z = (w - mu + 0.5) / math.sqrt(var)
    p = min(1.0, 2.0 * _phi(z))
    return WilcoxonResult(w=w, p=p, n_nonzero=n)


def _phi(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


@dataclass
class BootstrapResult:
    mean_w: float
    mean_p: float
    n_boot: int


def bootstrap_test(pairs: PairedScores, n_boot: int = 1000,
                   seed: int = 0) -> BootstrapResult:
    """Resample sentence pairs with replacement; average W and p over resamples.

    Tiny or degenerate resamples fall back to the degenerate result (p = 1)
    rather than erroring, so heavily tied score sets stay testable.
    """
    if n_boot < 100:
        raise UsageError("need at least 100 bootstrap resamples")
    rng = np.random.default_rng(seed)
    n = len(pairs)
    if n == 0:
        raise UsageError("empty paired scores")
    ws, ps = [], []
    for _ in range(n_boot):
        idx = rng.integers(0, n, size=n)
        sub = PairedScores([pairs.ids[i] for i in idx], pairs.x[idx], pairs.y[idx])
        res = wilcoxon_signed_rank(sub, enforce_min=False)
        ws.append(res.w)
        ps.append(res.p)
    return BootstrapResult(float(np.mean(ws)), float(np.mean(ps)), n_boot)


def median_run_selector(runs) -> int:
    """Index of the run with the median final task BLEU (ties: lowest index)."""
    finals = [r.final_task_bleu() if hasattr(r, "final_task_bleu") else float(r)
              for r in runs]
    if len(finals) == 0 or len(finals) % 2 == 0:
        raise UsageError("median selection needs an odd number of runs")
    median = sorted(finals)[len(finals) // 2]
    for i, v in enumerate(finals):
        if v == median:
            return i
    raise AssertionError("unreachable")
