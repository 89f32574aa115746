"""Metric reports and their JSON / CSV / Markdown renderings.

JSON is the lossless form. CSV is one line per row. Markdown pivots the
rows into the familiar layout: one line per embedding model and one column
per concept (or a relation/domain/range table for transition scores).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .embeddings import PathLike

SCHEMA_VERSION = 1
TASKS = ("categorization", "coherence", "semantic_error", "relatedness", "transition")
FORMATS = ("json", "csv", "markdown")

# column order for CSV output; unknown keys are appended alphabetically
COLUMNS = {
    "categorization": ["model", "concept", "score", "n_entities_used", "n_entities_skipped_oov",
                       "typing_mode", "error"],
    "coherence": ["model", "concept", "score", "radius", "effective_radius", "pool_size", "error"],
    "semantic_error": ["model", "concept_a", "concept_b", "delta", "ontology_similarity", "cosine",
                       "method", "error"],
    "relatedness": ["model", "correlation", "method", "n_pairs", "n_dropped", "error"],
    "transition": ["model", "property", "domain", "range", "score", "domain_equals_range", "error"],
}


@dataclass
class MetricReport:
    task: str
    rows: list[dict] = field(default_factory=list)
    run_meta: dict = field(default_factory=dict)
    # wall-clock details; never part of determinism comparisons
    meta: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")

    @property
    def models(self) -> list[dict]:
        return list(self.run_meta.get("models", []))

    @property
    def errors(self) -> list[dict]:
        return [r for r in self.rows if r.get("error")]

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "task": self.task,
            "run_meta": self.run_meta,
            "rows": self.rows,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema_version {version!r}")
        return cls(task=data["task"], rows=list(data.get("rows", [])), run_meta=dict(data.get("run_meta", {})),
                   meta=dict(data.get("meta", {})), schema_version=version)

    def deterministic_view(self) -> dict:
        d = self.to_dict()
        d.pop("meta")
        return d


def load_report(path: PathLike) -> MetricReport:
    return MetricReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def to_json(report: MetricReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _columns(report: MetricReport) -> list[str]:
    base = list(COLUMNS[report.task])
    extra = sorted({k for r in report.rows for k in r} - set(base))
    return base + extra


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_csv(report: MetricReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = _columns(report)
    writer.writerow(cols)
    for row in report.rows:
        writer.writerow([_cell(row.get(c)) for c in cols])
    return buf.getvalue()


def _score(value: Optional[float], error: Optional[str]) -> str:
    if error:
        return "error"
    if value is None:
        return ""
    return f"{value:.3f}"


def _md_line(cells: list[str]) -> str:
    return "| " + " | ".join(c.replace("|", "\\|") for c in cells) + " |"


def _model_rows(report: MetricReport) -> list[tuple[str, str]]:
    models = report.models
    if models:
        return [(m.get("dataset", ""), m["label"]) for m in models]
    seen: dict[str, None] = {}
    for r in report.rows:
        seen.setdefault(r["model"], None)
    return [("", m) for m in seen]


def _pivot_key(report: MetricReport, row: dict) -> str:
    if report.task in ("categorization", "coherence"):
        return row["concept"]
    if report.task == "semantic_error":
        return f"{row['concept_a']} / {row['concept_b']}"
    return row.get("method") or "correlation"


def _value_field(task: str) -> str:
    return {"semantic_error": "delta", "relatedness": "correlation"}.get(task, "score")


def to_markdown(report: MetricReport) -> str:
    if report.task == "transition":
        return _transition_markdown(report)
    keys: dict[str, None] = {}
    cells: dict[tuple[str, str], str] = {}
    value_field = _value_field(report.task)
    for row in report.rows:
        key = _pivot_key(report, row)
        keys.setdefault(key, None)
        cells[(row["model"], key)] = _score(row.get(value_field), row.get("error"))
    header = ["Data Set", "Embedding Model", *keys]
    lines = [_md_line(header), _md_line(["---"] * len(header))]
    for dataset, label in _model_rows(report):
        lines.append(_md_line([dataset, label, *(cells.get((label, k), "") for k in keys)]))
    return "\n".join(lines) + "\n"


def _transition_markdown(report: MetricReport) -> str:
    labels = [label for _, label in _model_rows(report)]
    triples: dict[tuple[str, str, str], None] = {}
    cells: dict[tuple[str, tuple[str, str, str]], str] = {}
    for row in report.rows:
        t = (row["property"], row.get("domain") or "", row.get("range") or "")
        triples.setdefault(t, None)
        cells[(row["model"], t)] = _score(row.get("score"), row.get("error"))
    header = ["Relation", "Domain", "Range", *labels]
    lines = [_md_line(header), _md_line(["---"] * len(header))]
    for t in triples:
        lines.append(_md_line([*t, *(cells.get((label, t), "") for label in labels)]))
    return "\n".join(lines) + "\n"


_RENDER = {"json": to_json, "csv": to_csv, "markdown": to_markdown}


def format_for(path: PathLike, fmt: Optional[str] = None) -> str:
    if fmt:
        if fmt == "md":
            return "markdown"
        if fmt not in FORMATS:
            raise ValueError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
        return fmt
    suffix = Path(path).suffix.lower()
    return {".csv": "csv", ".md": "markdown", ".markdown": "markdown"}.get(suffix, "json")


def render(report: MetricReport, fmt: str = "json") -> str:
    return _RENDER[format_for("", fmt)](report)


def emit_report(report: MetricReport, path: PathLike, fmt: Optional[str] = None) -> Path:
    """Write ``report`` to ``path``; the format follows ``fmt`` or the file suffix."""
    out = Path(path)
    out.write_text(render(report, format_for(out, fmt)), encoding="utf-8")
    return out
