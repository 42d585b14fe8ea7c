"""Percentile bootstrap machinery and the summary tables over run records."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class Comparison(NamedTuple):
    p: float
    ties: float


def _check(values: Sequence[float], name: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    return arr


def bootstrap_means(values: Sequence[float], n_boot: int, rng: np.random.Generator) -> np.ndarray:
    arr = _check(values)
    idx = rng.integers(0, arr.size, size=(n_boot, arr.size))
    return arr[idx].mean(axis=1)


def bootstrap_ci(
    values: Sequence[float], n_boot: int = 10_000, level: float = 0.95, seed: int = 0
) -> tuple[float, float]:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    arr = _check(values)
    if arr.min() == arr.max():
        # every resample has this mean; skip the summation drift
        return float(arr[0]), float(arr[0])
    means = bootstrap_means(arr, n_boot, np.random.default_rng(seed))
    tail = (1 - level) / 2 * 100
    low, high = np.percentile(means, [tail, 100 - tail])
    return float(low), float(high)


def compare_bootstrap_p(
    a_values: Sequence[float],
    b_values: Sequence[float],
    n_boot: int = 10_000,
    seed: int = 0,
    paired: bool = False,
) -> Comparison:
    """Fraction of bootstrap resamples in which mean(a) > mean(b), plus the tie fraction.

    With ``paired=True`` both samples (which must be aligned, e.g. on shared
    games) are resampled with the same indices.
    """
    a = _check(a_values, "a_values")
    b = _check(b_values, "b_values")
    rng = np.random.default_rng(seed)
    if paired:
        if a.size != b.size:
            raise ValueError("paired comparison needs samples of equal length")
        idx = rng.integers(0, a.size, size=(n_boot, a.size))
        ma, mb = a[idx].mean(axis=1), b[idx].mean(axis=1)
    else:
        ma = bootstrap_means(a, n_boot, rng)
        mb = bootstrap_means(b, n_boot, rng)
    return Comparison(float(np.mean(ma > mb)), float(np.mean(ma == mb)))


@dataclass
class Tables:
    contrastivity: list[dict]
    depth: list[dict]
    iterations: list[dict]

    def to_csv(self) -> dict[str, str]:
        return {name: _csv(rows) for name, rows in self.__dict__.items()}

    def to_text(self) -> str:
        parts = []
        for name, rows in self.__dict__.items():
            parts.append(f"== {name} ==\n{_aligned(rows)}")
        return "\n\n".join(parts) + "\n"


def _csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(v: object) -> str:
    return f"{v:.3f}" if isinstance(v, float) else str(v)


def _aligned(rows: list[dict]) -> str:
    if not rows:
        return "(empty)"
    header = list(rows[0])
    body = [[_fmt(r[h]) for h in header] for r in rows]
    widths = [max(len(h), *(len(row[i]) for row in body)) for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in body]
    return "\n".join(lines)


def running_max(values: Sequence[float], length: int) -> list[float]:
    """Running maximum, carried forward to ``length`` entries after early termination."""
    out: list[float] = []
    best = 0.0
    for i in range(length):
        if i < len(values):
            best = max(best, values[i])
        out.append(best)
    return out


def summarize(records: Iterable[dict], n_boot: int = 10_000, seed: int = 0) -> Tables:
    """Build the contrastivity, depth and iteration tables from run records.

    Records carrying an ``error`` are skipped; a record set with no usable
    records is rejected.
    """
    records = [r for r in records if not r.get("error")]
    if not records:
        raise ValueError("no usable records to summarize")

    cells: dict[tuple, list[dict]] = defaultdict(list)
    for r in records:
        n_samples = r["n_samples"] if r["engine"] != "baseline" else 0
        cells[(r["engine"], r["n_distractors"], n_samples)].append(r)

    max_its = max(r["iterations_used"] for r in records)
    contrast_rows = []
    iter_rows = []
    depth_rows = []
    for (engine, n_d, n_s), group in sorted(cells.items()):
        scores = [r["gt_contrastivity"] for r in group]
        low, high = bootstrap_ci(scores, n_boot=n_boot, seed=seed)
        contrast_rows.append({
            "engine": engine,
            "n_distractors": n_d,
            "n_samples": n_s,
            "n_games": len(group),
            "mean": float(np.mean(scores)),
            "ci_low": low,
            "ci_high": high,
            "fully_contrastive": float(np.mean([s == 1.0 for s in scores])),
        })
        its = [r["iterations_used"] for r in group]
        row = {"engine": engine, "n_distractors": n_d, "n_samples": n_s, "mean_iterations": float(np.mean(its))}
        for k in range(1, max_its + 1):
            row[f"iter_{k}"] = sum(i == k for i in its)
        iter_rows.append(row)
        if engine != "iterative":
            continue
        depth = max(r["max_iterations"] for r in group)
        curves = np.array([running_max(r["iteration_max_gt"], depth) for r in group])
        for k in range(depth):
            col = curves[:, k]
            q1, median, q3 = np.percentile(col, [25, 50, 75])
            depth_rows.append({
                "n_distractors": n_d,
                "n_samples": n_s,
                "iteration": k + 1,
                "mean": float(col.mean()),
                "q1": float(q1),
                "median": float(median),
                "q3": float(q3),
                "min": float(col.min()),
            })
    return Tables(contrast_rows, depth_rows, iter_rows)
