"""Cross-model aggregation: metric tables, direction-aware ranking with the
average-tie convention, average and normalized ranks, Pearson/Spearman
correlations, and deterministic report emission.

Downstream-utility numbers are ingested as fixture CSVs and ranked; they are
never computed here.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np
import scipy.stats

from .conditional_analysis import ConditionalReport
from .errors import (
    DataError,
    EmptyInputError,
    IoFailureError,
    LengthMismatchError,
    MissingColumnError,
    NonFiniteValueError,
    ZeroVarianceError,
)

LOWER = "lower"
HIGHER = "higher"


@dataclass
class MetricTable:
    model_ids: list[str]
    metric_names: list[str]
    values: np.ndarray  # models x metrics
    directions: dict[str, str]  # metric -> "lower" | "higher" (better)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.model_ids), len(self.metric_names)):
            raise DataError(
                f"value matrix shape {self.values.shape} does not match "
                f"{len(self.model_ids)} models x {len(self.metric_names)} metrics"
            )
        for name in self.metric_names:
            if self.directions.get(name) not in (LOWER, HIGHER):
                raise DataError(f"metric {name!r} needs a direction of 'lower' or 'higher'")

    def column(self, metric: str) -> np.ndarray:
        return self.values[:, self.metric_names.index(metric)]


@dataclass
class RankTable:
    model_ids: list[str]
    metric_names: list[str]
    ranks: np.ndarray  # models x metrics, average-tie convention
    average_rank: np.ndarray
    normalized_rank: np.ndarray  # dense re-rank of average_rank, 1..n


def rank_metric(values: np.ndarray, direction: str) -> np.ndarray:
    """Rank a metric column: best value gets rank 1, ties get the average
    of the tied positions."""
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(values).all():
        raise NonFiniteValueError("metric values must be finite to rank")
    keyed = values if direction == LOWER else -values
    return scipy.stats.rankdata(keyed, method="average")


def aggregate_ranks(t: MetricTable) -> RankTable:
    """Per-metric ranks, their per-model mean, and a dense re-rank of that
    mean into a single leaderboard position."""
    if not t.model_ids or not t.metric_names:
        raise EmptyInputError("metric table is empty")
    ranks = np.column_stack(
        [rank_metric(t.column(m), t.directions[m]) for m in t.metric_names]
    )
    average = ranks.mean(axis=1)
    normalized = scipy.stats.rankdata(average, method="dense").astype(np.int64)
    return RankTable(
        model_ids=list(t.model_ids),
        metric_names=list(t.metric_names),
        ranks=ranks,
        average_rank=average,
        normalized_rank=normalized,
    )


def pearson(x: Iterable[float], y: Iterable[float]) -> float:
    """Product-moment correlation coefficient."""
    x = np.asarray(list(x), dtype=np.float64)
    y = np.asarray(list(y), dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatchError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise LengthMismatchError("need at least 2 points")
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(xc @ xc)
    vy = float(yc @ yc)
    if vx == 0.0 or vy == 0.0:
        raise ZeroVarianceError("correlation undefined for a constant input")
    return float(xc @ yc) / np.sqrt(vx * vy)


def spearman(x: Iterable[float], y: Iterable[float]) -> float:
    """Pearson correlation over average-tie ranks."""
    x = np.asarray(list(x), dtype=np.float64)
    y = np.asarray(list(y), dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatchError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    return pearson(
        scipy.stats.rankdata(x, method="average"),
        scipy.stats.rankdata(y, method="average"),
    )


# --- fixture ingestion -----------------------------------------------------------


def read_metric_table(path: str | Path, directions: dict[str, str],
                      default_direction: str | None = None) -> MetricTable:
    """Read a fixture CSV of model_id plus one column per metric."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumnError("model_id") from None
        if not header or header[0] != "model_id":
            raise MissingColumnError("model_id")
        metric_names = header[1:]
        model_ids: list[str] = []
        rows: list[list[float]] = []
        for rownum, row in enumerate(reader, start=1):
            if not row:
                continue
            model_ids.append(row[0])
            try:
                rows.append([float(cell) for cell in row[1:]])
            except ValueError as exc:
                raise DataError(f"{path}: bad value at data row {rownum}: {exc}") from exc
    resolved = dict(directions)
    if default_direction is not None:
        for name in metric_names:
            resolved.setdefault(name, default_direction)
    return MetricTable(
        model_ids=model_ids,
        metric_names=metric_names,
        values=np.array(rows, dtype=np.float64).reshape(len(model_ids), len(metric_names)),
        directions=resolved,
    )


def read_alignment_csv(path: str | Path) -> dict[str, float]:
    """Per-sample alignment scores: CSV with header sample_id, alignment_score."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for name in ("sample_id", "alignment_score"):
            if name not in fields:
                raise MissingColumnError(name)
        scores: dict[str, float] = {}
        for row in reader:
            scores[row["sample_id"]] = float(row["alignment_score"])
    return scores


def mean_alignment(path: str | Path) -> float:
    """Plain mean over the per-sample alignment scores in a CSV."""
    scores = read_alignment_csv(path)
    if not scores:
        raise EmptyInputError(f"{path}: no alignment scores")
    return float(np.mean(np.asarray(list(scores.values()), dtype=np.float64)))


def align_by_model(a_models: list[str], a_values: np.ndarray,
                   b_models: list[str], b_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Intersect two per-model vectors on model id, in the first list's order."""
    b_index = {m: i for i, m in enumerate(b_models)}
    xs, ys = [], []
    for i, m in enumerate(a_models):
        if m in b_index:
            xs.append(a_values[i])
            ys.append(b_values[b_index[m]])
    if len(xs) < 2:
        raise LengthMismatchError("fewer than 2 models shared between tables")
    return np.asarray(xs), np.asarray(ys)


# --- report emission --------------------------------------------------------------


def _fmt(v: float, places: int = 3) -> str:
    return f"{v:.{places}f}"


def metric_table_markdown(t: MetricTable, flag_best: bool = True) -> str:
    """Markdown table, one model per row, best value per column in bold."""
    best: dict[str, int] = {}
    for j, m in enumerate(t.metric_names):
        col = t.values[:, j]
        best[m] = int(np.argmin(col) if t.directions[m] == LOWER else np.argmax(col))
    arrows = {LOWER: "&darr;", HIGHER: "&uarr;"}
    lines = [
        "| Model | " + " | ".join(f"{m} {arrows[t.directions[m]]}" for m in t.metric_names) + " |",
        "|---" * (len(t.metric_names) + 1) + "|",
    ]
    for i, model in enumerate(t.model_ids):
        cells = []
        for j, m in enumerate(t.metric_names):
            s = _fmt(t.values[i, j])
            if flag_best and best[m] == i:
                s = f"**{s}**"
            cells.append(s)
        lines.append(f"| {model} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def rank_table_markdown(rt: RankTable) -> str:
    lines = [
        "| Model | " + " | ".join(rt.metric_names) + " | Average Rank | Normalized Rank |",
        "|---" * (len(rt.metric_names) + 3) + "|",
    ]
    for i, model in enumerate(rt.model_ids):
        cells = [_fmt(r, 1) for r in rt.ranks[i]]
        lines.append(
            f"| {model} | " + " | ".join(cells)
            + f" | {_fmt(rt.average_rank[i], 2)} | {rt.normalized_rank[i]} |"
        )
    return "\n".join(lines) + "\n"


def conditional_report_rows(report: ConditionalReport) -> list[dict]:
    rows = []
    for r in report.per_label:
        rows.append({
            "label": r.label_name,
            "n_real": r.n_real,
            "n_fake": r.n_fake,
            "skipped": int(r.skipped),
            "reason": r.reason or "",
            "fid": r.fid,
            "kid_mean": r.kid_mean,
            "kid_std": r.kid_std,
            "precision": r.prdc.precision if r.prdc else None,
            "recall": r.prdc.recall if r.prdc else None,
            "density": r.prdc.density if r.prdc else None,
            "coverage": r.prdc.coverage if r.prdc else None,
        })
    return rows


def conditional_report_markdown(report: ConditionalReport) -> str:
    cols = ["label", "n_real", "n_fake", "fid", "kid_mean", "precision",
            "recall", "density", "coverage"]
    lines = ["| " + " | ".join(cols) + " |", "|---" * len(cols) + "|"]
    for row in conditional_report_rows(report):
        cells = []
        for c in cols:
            v = row[c]
            if v is None:
                cells.append("skipped" if c == "fid" and row["skipped"] else "")
            elif isinstance(v, float):
                cells.append(_fmt(v))
            else:
                cells.append(str(v))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


Table = Union[MetricTable, RankTable, ConditionalReport]


def emit_report(tables: dict[str, Table], fmt: str, output_dir: str | Path) -> list[Path]:
    """Write each named table under output_dir in the requested format.

    markdown produces a single report.md with one section per table; csv and
    json produce one file per table. Output is byte-deterministic for equal
    inputs. Empty tables are an error.
    """
    if not tables:
        raise EmptyInputError("no tables to report")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        if fmt == "markdown":
            parts = []
            for name, table in tables.items():
                parts.append(f"## {name}\n\n{_to_markdown(table)}")
            path = output_dir / "report.md"
            path.write_text("\n".join(parts), encoding="utf-8")
            written.append(path)
        elif fmt == "csv":
            for name, table in tables.items():
                path = output_dir / f"{name}.csv"
                _write_csv(table, path)
                written.append(path)
        elif fmt == "json":
            for name, table in tables.items():
                path = output_dir / f"{name}.json"
                path.write_text(
                    json.dumps(_to_jsonable(table), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8",
                )
                written.append(path)
        else:
            raise DataError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise IoFailureError(str(exc)) from exc
    return written


def _to_markdown(table: Table) -> str:
    if isinstance(table, MetricTable):
        if not table.model_ids:
            raise EmptyInputError("metric table is empty")
        return metric_table_markdown(table)
    if isinstance(table, RankTable):
        return rank_table_markdown(table)
    if isinstance(table, ConditionalReport):
        return conditional_report_markdown(table)
    raise DataError(f"cannot render table of type {type(table).__name__}")


def _write_csv(table: Table, path: Path) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if isinstance(table, MetricTable):
            if not table.model_ids:
                raise EmptyInputError("metric table is empty")
            writer.writerow(["model_id", *table.metric_names])
            for i, model in enumerate(table.model_ids):
                writer.writerow([model, *[repr(float(v)) for v in table.values[i]]])
        elif isinstance(table, RankTable):
            writer.writerow(["model_id", *table.metric_names, "average_rank", "normalized_rank"])
            for i, model in enumerate(table.model_ids):
                writer.writerow([
                    model,
                    *[repr(float(v)) for v in table.ranks[i]],
                    repr(float(table.average_rank[i])),
                    int(table.normalized_rank[i]),
                ])
        elif isinstance(table, ConditionalReport):
            rows = conditional_report_rows(table)
            cols = list(rows[0].keys())
            writer.writerow(cols)
            for row in rows:
                writer.writerow(["" if row[c] is None else row[c] for c in cols])
        else:
            raise DataError(f"cannot render table of type {type(table).__name__}")


def _to_jsonable(table: Table):
    if isinstance(table, MetricTable):
        if not table.model_ids:
            raise EmptyInputError("metric table is empty")
        return {
            "model_ids": table.model_ids,
            "metric_names": table.metric_names,
            "directions": table.directions,
            "values": [[float(v) for v in row] for row in table.values],
        }
    if isinstance(table, RankTable):
        return {
            "model_ids": table.model_ids,
            "metric_names": table.metric_names,
            "ranks": [[float(v) for v in row] for row in table.ranks],
            "average_rank": [float(v) for v in table.average_rank],
            "normalized_rank": [int(v) for v in table.normalized_rank],
        }
    if isinstance(table, ConditionalReport):
        return conditional_report_rows(table)
    raise DataError(f"cannot render table of type {type(table).__name__}")
