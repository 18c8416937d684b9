"""Aggregation and reporting over evaluation result files.

Results are JSON lines as written by the evaluation commands. Aggregation
groups by (retriever, budget, mode, ordering kind); random-ordering seeds
within a group are collapsed to a mean and spread. Output is a plain-text
table, a JSON summary, a CSV, and a figure of answer F1 against haystack
budget.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import ValidationError
from .metrics import RetrievalReport


def load_results(paths: Iterable[str | Path]) -> list[dict]:
    rows: list[dict] = []
    for path in paths:
        with Path(path).open(encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    rows.append(json.loads(line))
    if not rows:
        raise ValidationError("no results to report")
    return rows


def _ordering_kind(tag: str) -> str:
    return tag.split(":", 1)[0]


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _std(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    mu = _mean(values)
    return math.sqrt(sum((v - mu) ** 2 for v in values) / len(values))


def aggregate(rows: Iterable[dict]) -> list[dict]:
    """One output row per (retriever, budget, mode, ordering kind), with the
    mean taken per seed first so each permutation weighs equally."""
    by_group: dict[tuple, dict[str, list[dict]]] = {}
    for row in rows:
        key = (
            row["retriever"],
            int(row["budget"]),
            row["mode"],
            _ordering_kind(row["ordering"]),
        )
        by_group.setdefault(key, {}).setdefault(row["ordering"], []).append(row)

    out: list[dict] = []
    for key in sorted(by_group):
        retriever, budget, mode, ordering = key
        per_seed = by_group[key]
        seed_f1 = []
        seed_em = []
        samples = 0
        errored = 0
        by_hop: dict[int, list[float]] = {}
        for tag in sorted(per_seed):
            group = per_seed[tag]
            seed_f1.append(_mean([r["f1"] for r in group]))
            seed_em.append(_mean([1.0 if r["exact_match"] else 0.0 for r in group]))
            samples += len(group)
            errored += sum(1 for r in group if r.get("errored"))
            for r in group:
                by_hop.setdefault(int(r["hop_count"]), []).append(r["f1"])
        out.append(
            {
                "retriever": retriever,
                "budget": budget,
                "mode": mode,
                "ordering": ordering,
                "seeds": len(per_seed),
                "samples": samples,
                "errored": errored,
                "mean_f1": _mean(seed_f1),
                "spread_f1": _std(seed_f1),
                "mean_exact_match": _mean(seed_em),
                "by_hop": {
                    str(h): _mean(values) for h, values in sorted(by_hop.items())
                },
            }
        )
    return out


def render_table(groups: Sequence[dict]) -> str:
    headers = ["retriever", "budget", "mode", "ordering", "samples", "f1", "em"]
    rows = [
        [
            g["retriever"],
            str(g["budget"]),
            g["mode"],
            g["ordering"],
            str(g["samples"]),
            f"{g['mean_f1']:.4f}"
            + (f" ±{g['spread_f1']:.4f}" if g["seeds"] > 1 else ""),
            f"{g['mean_exact_match']:.4f}",
        ]
        for g in groups
    ]
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    lines.extend(
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows
    )
    return "\n".join(lines)


def plot_f1_by_budget(groups: Sequence[dict], path: str | Path) -> None:
    """One line per (retriever, mode, ordering) across budgets."""
    series: dict[tuple, list[tuple[int, float]]] = {}
    for g in groups:
        series.setdefault((g["retriever"], g["mode"], g["ordering"]), []).append(
            (g["budget"], g["mean_f1"])
        )
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for key in sorted(series):
        points = sorted(series[key])
        ax.plot(
            [p[0] for p in points],
            [p[1] for p in points],
            marker="o",
            label=" / ".join(str(part) for part in key),
        )
    ax.set_xlabel("haystack budget (tokens)")
    ax.set_ylabel("mean answer F1")
    ax.set_xscale("log", base=2)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(groups: Sequence[dict], out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    csv_path = out_dir / "report.csv"
    figure_path = out_dir / "f1_by_budget.png"
    json_path.write_text(
        json.dumps(list(groups), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    fields = [
        "retriever",
        "budget",
        "mode",
        "ordering",
        "seeds",
        "samples",
        "errored",
        "mean_f1",
        "spread_f1",
        "mean_exact_match",
    ]
    with csv_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for g in groups:
            writer.writerow(g)
    plot_f1_by_budget(groups, figure_path)
    return {"json": json_path, "csv": csv_path, "figure": figure_path}


def plot_retrieval_report(report: RetrievalReport, path: str | Path) -> None:
    """Recall and NDCG against the rank cutoff, one line per strategy."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.5), sharey=True)
    for ax, metric, data in (
        (axes[0], "recall", report.recall),
        (axes[1], "ndcg", report.ndcg),
    ):
        for strategy in sorted(data):
            xs = list(report.cutoffs)
            ys = [data[strategy][n] for n in xs]
            ax.plot(xs, ys, marker="o", label=strategy)
        ax.set_xlabel("cutoff n")
        ax.set_ylabel(metric)
        ax.set_xscale("log", base=2)
        ax.grid(True, alpha=0.3)
    axes[0].set_ylim(-0.02, 1.02)
    axes[1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
