"""Command-line entry point: ``concept-eval``."""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, TypeVar

from . import __version__
from .categorization import build_pool, categorization, coherence, write_pool
from .embeddings import (CompositionMode, EmbeddingTable, PrefixMap, compose_labels, cosine, load_embeddings,
                         load_token_labels)
from .errors import ConceptEvalError
from .fixtures import FixtureSpec, generate, write_fixture
from .hierarchy import SimilarityMethod, absolute_semantic_error, load_judgments, relatedness_correlation, \
    semantic_similarity
from .kg import KnowledgeSlice, load_kg
from .projection import export_scatter, pca_2d, tsne_2d
from .relational import selectional_preference_inventory, transition_distances, write_inventory
from .report import MetricReport, emit_report

logger = logging.getLogger("concept_eval")

THREADS_ENV = "CONCEPT_EVAL_THREADS"

T = TypeVar("T")
R = TypeVar("R")


class UsageError(Exception):
    """Structural problem with the invocation or its inputs."""


@dataclass
class Model:
    label: str
    path: str
    dataset: str
    table: EmbeddingTable


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        return max(1, value)
    return min(8, os.cpu_count() or 1)


def ordered_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Map in parallel (capped by ``CONCEPT_EVAL_THREADS``), results in input order."""
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def read_list(value: str, prefixes: Optional[PrefixMap]) -> list[str]:
    """Identifiers from a comma list, or from a file (one per line) when ``value`` names one."""
    if value.startswith("@"):
        path: Optional[Path] = Path(value[1:])
    else:
        path = Path(value) if os.path.isfile(value) else None
    if path is not None:
        text = path.read_text(encoding="utf-8")
        items = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    else:
        items = [x.strip() for x in value.split(",") if x.strip()]
    if not items:
        raise UsageError(f"empty identifier list: {value!r}")
    if prefixes is not None:
        items = [prefixes.expand(x) for x in items]
    return items


def _split_spec(spec: str) -> tuple[str, str]:
    if os.path.exists(spec) or "=" not in spec:
        return Path(spec).stem, spec
    label, path = spec.split("=", 1)
    return label, path


def load_models(args, prefixes: Optional[PrefixMap]) -> list[Model]:
    models = []
    labels = load_token_labels(args.labels, lowercase=args.lowercase, prefixes=prefixes) if args.labels else None
    for spec in args.embeddings:
        label, path = _split_spec(spec)
        if not os.path.isfile(path):
            raise UsageError(f"embedding file not found: {path}")
        table = load_embeddings(path, args.embedding_format, lowercase=args.lowercase, prefixes=prefixes)
        if labels is not None:
            composed, skipped = compose_labels(table, labels, args.compose)
            if skipped:
                logger.warning("%s: %d labels have out-of-vocabulary tokens", label, len(skipped))
            table = table.overlay(composed)
        if any(m.label == label for m in models):
            raise UsageError(f"duplicate model label {label!r}")
        models.append(Model(label, path, args.dataset or "", table))
    return models


def load_slice(args, prefixes: Optional[PrefixMap]) -> KnowledgeSlice:
    missing = [p for p in args.kg if not os.path.isfile(p)]
    if missing:
        raise UsageError(f"knowledge-graph file not found: {missing[0]}")
    return load_kg(args.kg, prefixes=prefixes)


def base_meta(args, models: Sequence[Model]) -> dict:
    return {
        "tool_version": __version__,
        "models": [{"label": m.label, "path": m.path, "dataset": m.dataset,
                    "format": m.table.source_meta.get("format"), "dimension": m.table.dimension,
                    "size": len(m.table)} for m in models],
        "composition": CompositionMode.parse(args.compose).value if args.labels else None,
        "labels": args.labels,
        "lowercase": args.lowercase,
        "prefixes": args.prefixes,
        "kg": list(getattr(args, "kg", None) or []),
    }


def _row_error(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


# -- eval commands ---------------------------------------------------------------

def cmd_categorization(args, prefixes) -> MetricReport:
    slice_ = load_slice(args, prefixes)
    models = load_models(args, prefixes)
    concepts = read_list(args.concepts, prefixes)
    rows = []
    for m in models:
        def one(c: str, m=m) -> dict:
            row = {"model": m.label, "concept": c, "score": None, "n_entities_used": None,
                   "n_entities_skipped_oov": None, "typing_mode": args.typing, "error": None}
            try:
                r = categorization(m.table, slice_, c, args.typing, limit=args.max_entities, seed=args.seed)
            except ConceptEvalError as exc:
                row["error"] = _row_error(exc)
                return row
            row.update(score=r.score, n_entities_used=r.n_entities_used,
                       n_entities_skipped_oov=r.n_entities_skipped_oov)
            return row
        rows.extend(ordered_map(one, concepts))
    meta = base_meta(args, models)
    meta.update(typing_mode=args.typing, concepts=concepts, max_entities=args.max_entities, seed=args.seed)
    return MetricReport("categorization", rows, meta)


def cmd_coherence(args, prefixes) -> MetricReport:
    slice_ = load_slice(args, prefixes)
    models = load_models(args, prefixes)
    concepts = read_list(args.concepts, prefixes)
    out = Path(args.out)
    rows = []
    pools = {}
    notes = []
    for m in models:
        usable, errors = [], {}
        for c in concepts:
            try:
                ents = slice_.entities_of(c, args.typing)
            except ConceptEvalError as exc:
                errors[c] = _row_error(exc)
                continue
            if not any(m.table.get(e) is not None and m.table.get(e).any() for e in ents):
                errors[c] = f"NoEntitiesError: concept {c!r} has no embeddable entities"
                continue
            usable.append(c)
        pool = build_pool(slice_, m.table, usable, args.batch_size, args.seed, args.typing) if usable else None
        if pool is not None:
            pool_path = out.with_name(f"{out.stem}.{m.label}.pool.tsv")
            write_pool(pool, pool_path)
            pools[m.label] = str(pool_path)
            if args.radius > len(pool):
                notes.append(f"{m.label}: radius {args.radius} exceeds pool size {len(pool)}; whole pool used")

        def one(c: str, m=m, pool=pool, errors=errors) -> dict:
            row = {"model": m.label, "concept": c, "score": None, "radius": args.radius,
                   "effective_radius": None, "pool_size": len(pool) if pool else 0, "error": errors.get(c)}
            if row["error"]:
                return row
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    row["score"] = coherence(m.table, slice_, pool, c, args.radius, match=args.match,
                                             typing_mode=args.typing)
                row["effective_radius"] = min(args.radius, len(pool))
            except ConceptEvalError as exc:
                row["error"] = _row_error(exc)
            return row
        rows.extend(ordered_map(one, concepts))
    for note in notes:
        logger.warning(note)
    meta = base_meta(args, models)
    meta.update(typing_mode=args.typing, concepts=concepts, radius=args.radius, batch_size=args.batch_size,
                seed=args.seed, match=args.match, pools=pools, warnings=notes,
                pool_sampling="embeddable entities only (missing or zero vectors excluded before sampling)")
    return MetricReport("coherence", rows, meta)


def cmd_semantic_error(args, prefixes) -> MetricReport:
    slice_ = load_slice(args, prefixes)
    models = load_models(args, prefixes)
    concepts = read_list(args.concepts, prefixes)
    method = SimilarityMethod.parse(args.method)
    pairs = [(concepts[i], concepts[j]) for i in range(len(concepts)) for j in range(i + 1, len(concepts))]
    rows = []
    for m in models:
        def one(pair, m=m) -> dict:
            a, b = pair
            row = {"model": m.label, "concept_a": a, "concept_b": b, "delta": None,
                   "ontology_similarity": None, "cosine": None, "method": method.value, "error": None}
            try:
                row["ontology_similarity"] = semantic_similarity(slice_, a, b, method)
                row["delta"] = absolute_semantic_error(m.table, slice_, a, b, method)
                row["cosine"] = cosine(m.table.vector(a), m.table.vector(b), names=(a, b))
            except ConceptEvalError as exc:
                row["error"] = _row_error(exc)
            return row
        rows.extend(ordered_map(one, pairs))
    meta = base_meta(args, models)
    meta.update(method=method.value, concepts=concepts, delta_range=[0.0, 2.0])
    return MetricReport("semantic_error", rows, meta)


def cmd_relatedness(args, prefixes) -> MetricReport:
    if not os.path.isfile(args.judgments):
        raise UsageError(f"judgment file not found: {args.judgments}")
    inventory = load_judgments(args.judgments, prefixes=prefixes)
    models = load_models(args, prefixes)
    rows = []
    for m in models:
        row = {"model": m.label, "correlation": None, "method": args.corr, "n_pairs": None,
               "n_dropped": None, "error": None}
        try:
            r = relatedness_correlation(m.table, inventory, args.corr)
            row.update(correlation=r.correlation, n_pairs=r.n_pairs, n_dropped=len(r.dropped),
                       dropped=[list(d) for d in r.dropped])
        except ConceptEvalError as exc:
            row["error"] = _row_error(exc)
        rows.append(row)
    meta = base_meta(args, models)
    meta.update(judgments=args.judgments, scale=list(inventory.scale), correlation=args.corr)
    return MetricReport("relatedness", rows, meta)


def cmd_transition(args, prefixes) -> MetricReport:
    slice_ = load_slice(args, prefixes)
    models = load_models(args, prefixes)
    properties = read_list(args.properties, prefixes)
    rows = []
    for m in models:
        def one(p: str, m=m) -> list[dict]:
            try:
                results = transition_distances(m.table, slice_, p)
            except ConceptEvalError as exc:
                s = slice_.schema.get(p)
                d = ",".join(sorted(s.domains)) if s else None
                r = ",".join(sorted(s.ranges)) if s else None
                return [{"model": m.label, "property": p, "domain": d, "range": r, "score": None,
                         "domain_equals_range": None, "error": _row_error(exc)}]
            return [{"model": m.label, "property": t.property, "domain": t.domain, "range": t.range,
                     "score": t.score, "domain_equals_range": t.domain_equals_range, "error": None}
                    for t in results]
        for chunk in ordered_map(one, properties):
            rows.extend(chunk)
    meta = base_meta(args, models)
    meta.update(properties=properties)
    return MetricReport("transition", rows, meta)


# -- other commands ------------------------------------------------------------------

def cmd_project(args, prefixes) -> int:
    args.labels = None
    models = load_models(args, prefixes)
    if len(models) != 1:
        raise UsageError("project takes exactly one --embeddings file")
    table = models[0].table
    ids = read_list(args.ids, prefixes)
    missing = [i for i in ids if i not in table]
    if missing:
        raise UsageError(f"identifiers without embeddings: {', '.join(missing[:5])}")
    vectors = [(i, table.vector(i)) for i in ids]
    if args.method == "pca":
        proj = pca_2d(vectors)
    else:
        proj = tsne_2d(vectors, perplexity=args.perplexity, iterations=args.iterations, seed=args.seed,
                       learning_rate=args.learning_rate)
    groups: dict[str, str] = {}
    if args.groups:
        for ln in Path(args.groups).read_text(encoding="utf-8").splitlines():
            if ln.strip() and not ln.startswith("#"):
                ident, _, group = ln.partition("\t")
                ident = prefixes.expand(ident) if prefixes else ident
                groups[ident] = group.strip()
    elif args.kg:
        slice_ = load_slice(args, prefixes)
        for i in ids:
            if i in slice_.typing:
                groups[i] = "|".join(sorted(slice_.typing[i]))
            elif i in slice_.concepts:
                groups[i] = "|".join(sorted(slice_.subclass.get(i, ()))) or i
    tsv, svg = export_scatter(proj, groups, args.out)
    print(tsv)
    print(svg)
    return 0


def cmd_fixture_generate(args, prefixes) -> int:
    spec = FixtureSpec.load(args.spec)
    paths = write_fixture(generate(spec), args.out)
    for p in paths.values():
        print(p)
    return 0


def cmd_inventory(args, prefixes) -> int:
    slice_ = load_slice(args, prefixes)
    properties = read_list(args.properties, prefixes)
    rows = selectional_preference_inventory(slice_, properties, args.negatives, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    judge, key = out / "selectional_preference.tsv", out / "selectional_preference.key.tsv"
    write_inventory(rows, judge, key, args.seed)
    print(judge)
    print(key)
    return 0


# -- argument parsing -------------------------------------------------------------

def _add_embedding_args(p: argparse.ArgumentParser, multiple: bool = True) -> None:
    p.add_argument("--embeddings", action="append", required=True, metavar="[LABEL=]PATH",
                   help="embedding file; repeat to compare models" if multiple else "embedding file")
    p.add_argument("--embedding-format", choices=["word2vec-text", "word2vec-binary", "glove", "tsv"],
                   help="embedding file format (guessed from suffix/content by default)")
    p.add_argument("--lowercase", action="store_true", help="lowercase identifiers while loading")
    p.add_argument("--dataset", default="", help="data-set name shown in markdown tables")


def _add_compose_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--labels", help="identifier<TAB>tokens file; label vectors are composed from tokens")
    p.add_argument("--compose", default="avg", choices=["avg", "average", "sum"],
                   help="token composition for --labels (default: avg)")


def _add_report_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="report path")
    p.add_argument("--format", dest="report_format", choices=["json", "csv", "markdown", "md"],
                   help="report format (default: from --out suffix, else json)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="concept-eval",
                                     description="Intrinsic evaluation of embeddings for ontological concepts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--prefixes", help="prefix<TAB>expansion file applied to every identifier")
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("eval", help="compute a metric report").add_subparsers(dest="task", required=True)

    p = ev.add_parser("categorization", help="concept vs. mean entity vector")
    _add_embedding_args(p)
    _add_compose_args(p)
    p.add_argument("--kg", action="append", required=True, help="KG file (.nt or TSV); repeatable")
    p.add_argument("--concepts", required=True, help="comma list or file")
    p.add_argument("--typing", default="direct", choices=["direct", "transitive"])
    p.add_argument("--max-entities", type=int, help="sample at most this many entities per concept")
    p.add_argument("--seed", type=int, default=0)
    _add_report_args(p)
    p.set_defaults(report_fn=cmd_categorization)

    p = ev.add_parser("coherence", help="share of nearest pooled entities with the concept")
    _add_embedding_args(p)
    _add_compose_args(p)
    p.add_argument("--kg", action="append", required=True)
    p.add_argument("--concepts", required=True)
    p.add_argument("--typing", default="direct", choices=["direct", "transitive"])
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--radius", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--match", default="label", choices=["label", "any_type"])
    _add_report_args(p)
    p.set_defaults(report_fn=cmd_coherence)

    p = ev.add_parser("semantic-error", help="|ontology similarity - cosine| for concept pairs")
    _add_embedding_args(p)
    _add_compose_args(p)
    p.add_argument("--kg", action="append", required=True)
    p.add_argument("--concepts", required=True)
    p.add_argument("--method", default="wu_palmer", choices=["wu_palmer", "inverse_path"])
    _add_report_args(p)
    p.set_defaults(report_fn=cmd_semantic_error)

    p = ev.add_parser("relatedness", help="correlation of cosine with judge scores")
    _add_embedding_args(p)
    _add_compose_args(p)
    p.add_argument("--judgments", required=True)
    p.add_argument("--corr", default="spearman", choices=["spearman", "pearson"])
    _add_report_args(p)
    p.set_defaults(report_fn=cmd_relatedness)

    p = ev.add_parser("transition", help="cos(domain + property, range)")
    _add_embedding_args(p)
    _add_compose_args(p)
    p.add_argument("--kg", action="append", required=True)
    p.add_argument("--properties", required=True)
    _add_report_args(p)
    p.set_defaults(report_fn=cmd_transition)

    p = sub.add_parser("project", help="2-D projection with TSV and SVG export")
    _add_embedding_args(p, multiple=False)
    p.add_argument("--ids", required=True)
    p.add_argument("--method", default="tsne", choices=["pca", "tsne"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perplexity", type=float)
    p.add_argument("--learning-rate", type=float, help="default: max(n/48, 50)")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--groups", help="identifier<TAB>group file used for colours")
    p.add_argument("--kg", action="append", help="colour points by their KG types instead of --groups")
    p.add_argument("--out", required=True, help="output base path (.tsv and .svg are written)")
    p.set_defaults(fn=cmd_project)

    fx = sub.add_parser("fixture", help="synthetic fixtures").add_subparsers(dest="fixture_cmd", required=True)
    p = fx.add_parser("generate", help="write a seeded fixture directory")
    p.add_argument("--spec", required=True, help="JSON fixture spec")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_fixture_generate)

    inv = sub.add_parser("inventory", help="judge inventories").add_subparsers(dest="inventory_cmd", required=True)
    p = inv.add_parser("selectional", help="concept/property compatibility sheet plus answer key")
    p.add_argument("--kg", action="append", required=True)
    p.add_argument("--properties", required=True)
    p.add_argument("--negatives", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_inventory)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        prefixes = PrefixMap.load(args.prefixes) if args.prefixes else None
        if hasattr(args, "report_fn"):
            started = _dt.datetime.now(_dt.timezone.utc)
            report = args.report_fn(args, prefixes)
            report.meta = {"timestamp": started.isoformat(), "argv": list(argv if argv is not None else sys.argv[1:])}
            emit_report(report, args.out, args.report_format)
            n_err = len(report.errors)
            if n_err:
                logger.warning("%d of %d rows carry errors (see report)", n_err, len(report.rows))
            return 0
        return args.fn(args, prefixes)
    except (UsageError, ConceptEvalError, OSError, ValueError) as exc:
        print(f"concept-eval: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
