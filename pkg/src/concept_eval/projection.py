"""Deterministic 2-D projections (PCA and exact t-SNE) and scatter export."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .embeddings import PathLike
from .errors import FormatError, InsufficientDataError

logger = logging.getLogger(__name__)

# pinned exact t-SNE schedule
EARLY_EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
MOMENTUM_EARLY = 0.5
MOMENTUM_LATE = 0.8
MIN_LEARNING_RATE = 50.0
INIT_STD = 1e-4
PERPLEXITY_TOL = 1e-5
PERPLEXITY_STEPS = 50
P_FLOOR = 1e-12
MIN_GAIN = 0.01
KL_CHECKPOINTS = (250, 500, 750, 1000)


@dataclass
class Projection2D:
    ids: tuple[str, ...]
    coords: np.ndarray
    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.ids = tuple(self.ids)
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.shape != (len(self.ids), 2):
            raise ValueError(f"expected coordinates of shape ({len(self.ids)}, 2), got {self.coords.shape}")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("projection produced non-finite coordinates")

    def rows(self) -> list[tuple[str, float, float]]:
        return [(i, float(x), float(y)) for i, (x, y) in zip(self.ids, self.coords)]


def _stack(vectors: Sequence[tuple[str, Sequence[float]]]) -> tuple[tuple[str, ...], np.ndarray]:
    ids = tuple(i for i, _ in vectors)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate identifiers in projection input")
    X = np.array([np.asarray(v, dtype=np.float64) for _, v in vectors], dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("all vectors must share one dimension")
    return ids, X


def _principal_axes(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centered data and the top-2 principal axes (rows), sign-normalised."""
    Xc = X - X.mean(axis=0)
    if not np.any(Xc):
        raise InsufficientDataError("zero variance: all points coincide")
    _, _, vt = np.linalg.svd(Xc, full_matrices=False)
    axes = np.zeros((2, X.shape[1]))
    k = min(2, vt.shape[0])
    axes[:k] = vt[:k]
    for row in axes:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    return Xc, axes


def pca_2d(vectors: Sequence[tuple[str, Sequence[float]]]) -> Projection2D:
    """Project onto the two leading principal components of the centered data.

    Each component is oriented so its largest-magnitude loading is positive.
    """
    if len(vectors) < 2:
        raise InsufficientDataError("PCA needs at least 2 points")
    ids, X = _stack(vectors)
    Xc, axes = _principal_axes(X)
    return Projection2D(ids, Xc @ axes.T, "pca", {})


# -- exact t-SNE -----------------------------------------------------------------

def _sq_distances(X: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def _row_affinities(dist: np.ndarray, perplexity: float) -> np.ndarray:
    """Gaussian conditional probabilities whose entropy matches log(perplexity).

    The precision is found by bisection (doubling/halving while unbounded).
    Distances are shifted by their minimum, which leaves the normalised
    distribution unchanged and avoids underflow.
    """
    target = math.log(perplexity)
    d = dist - dist.min()
    beta, lo, hi = 1.0, 0.0, math.inf
    p = np.exp(-d * beta)
    for _ in range(PERPLEXITY_STEPS):
        p = np.exp(-d * beta)
        total = p.sum()
        entropy = math.log(total) + beta * float(np.dot(d, p)) / total
        diff = entropy - target
        if abs(diff) < PERPLEXITY_TOL:
            break
        if diff > 0:
            lo = beta
            beta = beta * 2.0 if hi == math.inf else (beta + hi) / 2.0
        else:
            hi = beta
            beta = (beta + lo) / 2.0
    return p / p.sum()


def joint_probabilities(X: np.ndarray, perplexity: float) -> np.ndarray:
    n = X.shape[0]
    D = _sq_distances(X)
    P = np.zeros((n, n))
    for i in range(n):
        others = np.r_[0:i, i + 1:n]
        P[i, others] = _row_affinities(D[i, others], perplexity)
    P = (P + P.T) / (2.0 * n)
    np.fill_diagonal(P, 0.0)
    return np.maximum(P, P_FLOOR)


def _student_t(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = 1.0 / (1.0 + _sq_distances(Y))
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), P_FLOOR)
    return num, Q


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    _, Q = _student_t(Y)
    mask = ~np.eye(P.shape[0], dtype=bool)
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def default_perplexity(n: int) -> float:
    return min(30.0, (n - 1) / 3.0)


def default_learning_rate(n: int) -> float:
    # A fixed rate of 200 overshoots on a few dozen points: the layout keeps
    # expanding and KL rises between checkpoints. Scale with n instead.
    return max(n / EARLY_EXAGGERATION / 4.0, MIN_LEARNING_RATE)


def tsne_2d(vectors: Sequence[tuple[str, Sequence[float]]], perplexity: Optional[float] = None,
            iterations: int = 1000, seed: int = 0, learning_rate: Optional[float] = None) -> Projection2D:
    """Exact t-SNE to two dimensions.

    Gradient descent with gains, momentum 0.5 then 0.8, early exaggeration 12
    for the first 250 iterations and a PCA start scaled to standard deviation
    1e-4. The learning rate defaults to ``max(n / 48, 50)``. ``seed`` drives the random start used only when
    the PCA start is degenerate. KL divergence at iterations 250, 500, 750,
    1000 and at the end is stored in ``params["kl"]``.
    """
    n = len(vectors)
    if n < 4:
        raise InsufficientDataError("t-SNE needs at least 4 points")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    ids, X = _stack(vectors)
    limit = (n - 1) / 3.0
    if perplexity is None:
        perplexity = default_perplexity(n)
    elif perplexity > limit:
        warnings.warn(f"perplexity {perplexity} clamped to (n-1)/3 = {limit:.4g}", stacklevel=2)
        perplexity = limit
    if perplexity <= 0:
        raise ValueError("perplexity must be positive")
    if learning_rate is None:
        learning_rate = default_learning_rate(n)
    elif learning_rate <= 0:
        raise ValueError("learning_rate must be positive")

    P = joint_probabilities(X, perplexity)

    init = "pca"
    try:
        Xc, axes = _principal_axes(X)
        Y = Xc @ axes.T
        std = Y[:, 0].std()
        if std == 0.0:
            raise InsufficientDataError("degenerate PCA start")
        Y = Y / std * INIT_STD
    except InsufficientDataError:
        init = "random"
        Y = np.random.default_rng(seed).normal(0.0, INIT_STD, size=(n, 2))

    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl: dict[str, float] = {}
    checkpoints = set(KL_CHECKPOINTS) | {iterations}
    for it in range(iterations):
        exaggerate = it < EXAGGERATION_ITERS
        momentum = MOMENTUM_EARLY if exaggerate else MOMENTUM_LATE
        num, Q = _student_t(Y)
        W = ((EARLY_EXAGGERATION * P if exaggerate else P) - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, MIN_GAIN, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        if it + 1 in checkpoints:
            kl[str(it + 1)] = kl_divergence(P, Y)

    params = {
        "perplexity": perplexity,
        "iterations": iterations,
        "seed": seed,
        "init": init,
        "learning_rate": float(learning_rate),
        "early_exaggeration": EARLY_EXAGGERATION,
        "exaggeration_iterations": EXAGGERATION_ITERS,
        "momentum": [MOMENTUM_EARLY, MOMENTUM_LATE],
        "perplexity_tolerance": PERPLEXITY_TOL,
        "kl": kl,
    }
    return Projection2D(ids, Y, "tsne", params)


# -- export --------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
DEFAULT_GROUP = "ungrouped"


def _base(path: PathLike) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix.lower() in (".tsv", ".svg") else p


def write_scatter_tsv(proj: Projection2D, labels: Mapping[str, str], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# method={proj.method}\n")
        fh.write("# params=" + json.dumps(proj.params, sort_keys=True) + "\n")
        fh.write("id\tgroup\tx\ty\n")
        for ident, x, y in proj.rows():
            fh.write(f"{ident}\t{labels.get(ident, DEFAULT_GROUP)}\t{x!r}\t{y!r}\n")


def read_scatter_tsv(path: PathLike) -> tuple[list[tuple[str, str, float, float]], dict]:
    meta: dict = {}
    rows: list[tuple[str, str, float, float]] = []
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if line.startswith("# method="):
                meta["method"] = line[len("# method="):]
                continue
            if line.startswith("# params="):
                meta["params"] = json.loads(line[len("# params="):])
                continue
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if not header_seen:
                if parts != ["id", "group", "x", "y"]:
                    raise FormatError("expected header 'id\\tgroup\\tx\\ty'", path=path, line=lineno)
                header_seen = True
                continue
            if len(parts) != 4:
                raise FormatError("expected 4 tab-separated fields", path=path, line=lineno)
            rows.append((parts[0], parts[1], float(parts[2]), float(parts[3])))
    return rows, meta


def render_svg(proj: Projection2D, labels: Mapping[str, str], *, width: int = 640, height: int = 480) -> str:
    """Self-contained SVG scatter, one colour per group plus a legend.

    Coordinates are rescaled to fill the plotting area independently for
    each projection.
    """
    groups = sorted({labels.get(i, DEFAULT_GROUP) for i in proj.ids})
    colour = {g: _PALETTE[k % len(_PALETTE)] for k, g in enumerate(groups)}
    legend_w = 160
    margin = 20
    plot_w = width - legend_w - 2 * margin
    plot_h = height - 2 * margin
    lo = proj.coords.min(axis=0)
    span = proj.coords.max(axis=0) - lo
    span[span == 0] = 1.0

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<title>{escape(proj.method)} projection</title>',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           '<g class="points">']
    for ident, (x, y) in zip(proj.ids, proj.coords):
        g = labels.get(ident, DEFAULT_GROUP)
        cx = margin + (x - lo[0]) / span[0] * plot_w
        cy = margin + plot_h - (y - lo[1]) / span[1] * plot_h
        out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="4" fill="{colour[g]}">'
                   f'<title>{escape(ident)}</title></circle>')
    out.append("</g>")
    out.append(f'<g class="legend" transform="translate({width - legend_w + 10},{margin})">')
    for k, g in enumerate(groups):
        y = k * 18
        out.append(f'<g class="legend-entry"><rect x="0" y="{y}" width="12" height="12" fill="{colour[g]}"/>'
                   f'<text x="18" y="{y + 10}" font-size="12" font-family="sans-serif">{escape(g)}</text></g>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_scatter(proj: Projection2D, labels: Mapping[str, str], path: PathLike) -> tuple[Path, Path]:
    """Write ``<path>.tsv`` (id, group, x, y) and ``<path>.svg``; returns both paths."""
    base = _base(path)
    tsv = base.with_name(base.name + ".tsv")
    svg = base.with_name(base.name + ".svg")
    write_scatter_tsv(proj, labels, tsv)
    svg.write_text(render_svg(proj, labels), encoding="utf-8")
    return tsv, svg
