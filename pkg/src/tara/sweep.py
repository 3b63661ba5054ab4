"""Grid runner for dataset-size / composition ablations with seeded repeats.

Each (n, alpha) cell runs once per seed through a caller-supplied pipeline
(compose -> train -> eval); per-cell aggregates report mean and standard
deviation across seeds, mirroring the mean+-std presentation of multi-seed
result tables.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass

import numpy as np

from tara.ioutils import write_text_atomic

log = logging.getLogger("tara.sweep")


class SweepError(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepGrid:
    n_values: tuple[int, ...]
    alpha_values: tuple[float, ...]
    seeds: tuple[int, ...]

    def __post_init__(self):
        if not self.n_values or not self.alpha_values or not self.seeds:
            raise SweepError("grid axes must be non-empty")


@dataclass
class SweepRow:
    n: int
    alpha: float
    seed: int
    metrics: dict[str, float]


@dataclass
class SweepAggregate:
    n: int
    alpha: float
    mean: dict[str, float]
    std: dict[str, float]
    k: int

    def formatted(self) -> dict[str, str]:
        return {
            name: f"{self.mean[name]:.4f}±{self.std[name]:.4f}"
            for name in sorted(self.mean)
        }


def ablation_sweep(
    grid: SweepGrid,
    pipeline,
    csv_path: str | None = None,
    plot_csv_path: str | None = None,
    chart_path: str | None = None,
) -> tuple[list[SweepRow], list[SweepAggregate]]:
    """Run the pipeline over every (n, alpha, seed) cell.

    ``pipeline(n, alpha, seed)`` returns a metric-name -> value dict.
    Failures are re-raised with the failing cell identified. Std across
    seeds uses the sample estimator (ddof=1) when k > 1.
    """
    rows: list[SweepRow] = []
    for n in grid.n_values:
        for alpha in grid.alpha_values:
            for seed in grid.seeds:
                try:
                    metrics = pipeline(n=n, alpha=alpha, seed=seed)
                except Exception as exc:
                    raise SweepError(
                        f"pipeline failed at cell n={n} alpha={alpha} seed={seed}: {exc}"
                    ) from exc
                rows.append(SweepRow(n=n, alpha=alpha, seed=seed, metrics=dict(metrics)))
                log.info("sweep cell n=%d alpha=%s seed=%d done", n, alpha, seed)

    aggregates: list[SweepAggregate] = []
    for n in grid.n_values:
        for alpha in grid.alpha_values:
            cell = [r for r in rows if r.n == n and r.alpha == alpha]
            names = sorted({name for r in cell for name in r.metrics})
            mean, std = {}, {}
            for name in names:
                values = np.array([r.metrics[name] for r in cell], dtype=np.float64)
                mean[name] = float(values.mean())
                std[name] = float(values.std(ddof=1)) if values.size > 1 else 0.0
            aggregates.append(
                SweepAggregate(n=n, alpha=alpha, mean=mean, std=std, k=len(cell))
            )

    if csv_path:
        write_text_atomic(csv_path, _results_csv(rows, aggregates))
    if plot_csv_path:
        write_text_atomic(plot_csv_path, _plot_csv(aggregates))
    if chart_path:
        write_text_atomic(chart_path, _chart_json(aggregates) + "\n")
    return rows, aggregates


def _metric_names(rows: list[SweepRow]) -> list[str]:
    return sorted({name for r in rows for name in r.metrics})


def _results_csv(rows: list[SweepRow], aggregates: list[SweepAggregate]) -> str:
    names = _metric_names(rows)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["n", "alpha", "seed"] + names)
    for r in rows:
        writer.writerow([r.n, r.alpha, r.seed] + [r.metrics.get(m, "") for m in names])
    for agg in aggregates:
        formatted = agg.formatted()
        writer.writerow([agg.n, agg.alpha, "aggregate"] + [formatted.get(m, "") for m in names])
    return buf.getvalue()


def _plot_csv(aggregates: list[SweepAggregate]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["n", "alpha", "metric", "mean", "std", "k"])
    for agg in aggregates:
        for name in sorted(agg.mean):
            writer.writerow([agg.n, agg.alpha, name, agg.mean[name], agg.std[name], agg.k])
    return buf.getvalue()


def _chart_json(aggregates: list[SweepAggregate]) -> str:
    metrics = sorted({name for agg in aggregates for name in agg.mean})
    return json.dumps(
        {
            "kind": "line",
            "x": "alpha",
            "y": "mean",
            "error": "std",
            "series_by": "metric",
            "facets_by": "n",
            "metrics": metrics,
        },
        indent=2,
    )
