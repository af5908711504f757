"""Precision-recall evaluation: curve construction, AUC, and baselines.

The curve sweeps every distinct score value as a threshold (score >= t is
classified positive); tied scores collapse into a single point. The AUC is
the average-precision step rule sum (R_i - R_{i-1}) * P_i with R_0 = 0,
accumulated with exactly-rounded summation so small instances can be
checked against a brute-force oracle for equality, not closeness.
"""

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import ShapeError, UndefinedRecallError


@dataclass
class PRCurve:
    points: List[Tuple[float, float, float]]  # (recall, precision, threshold)
    auc: float


@dataclass
class EvalReport:
    test_pr_auc: float
    baseline1_pr_auc: float
    baseline2_pr_auc: float
    prevalence: float
    n: int
    n_pos: int

    def lines(self) -> List[str]:
        return [
            f"test_pr_auc={self.test_pr_auc!r}",
            f"baseline1_pr_auc={self.baseline1_pr_auc!r}",
            f"baseline2_pr_auc={self.baseline2_pr_auc!r}",
            f"prevalence={self.prevalence!r}",
            f"n={self.n}",
            f"n_pos={self.n_pos}",
        ]


def _check_inputs(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ShapeError(f"scores {scores.shape} vs labels {labels.shape}")
    if scores.size == 0:
        raise ShapeError("empty score vector")
    if not np.all(np.isfinite(scores)):
        raise ShapeError("non-finite score")
    labels = labels.astype(int)
    if not np.all((labels == 0) | (labels == 1)):
        raise ShapeError("labels must be 0 or 1")
    if int(labels.sum()) == 0:
        raise UndefinedRecallError("recall is undefined without positive labels")
    return scores, labels


def pr_curve(scores, labels) -> PRCurve:
    """One (recall, precision, threshold) point per distinct score value."""
    scores, labels = _check_inputs(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    y_sorted = labels[order]
    n_pos = int(labels.sum())
    points = []
    areas = []
    tp = 0
    seen = 0
    prev_recall = 0.0
    i = 0
    n = scores.size
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        tp += int(y_sorted[i:j].sum())
        seen = j
        recall = tp / n_pos
        precision = tp / seen
        points.append((recall, precision, float(s_sorted[i])))
        areas.append((recall - prev_recall) * precision)
        prev_recall = recall
        i = j
    return PRCurve(points=points, auc=math.fsum(areas))


def pr_auc(scores, labels) -> float:
    return pr_curve(scores, labels).auc


def baseline_constant(labels) -> float:
    """Every example scored 1.0; the single all-tied point yields prevalence."""
    labels = np.asarray(labels)
    return pr_auc(np.ones(labels.shape[0]), labels)


def baseline_proportional(labels, seed) -> float:
    """Scores drawn 1 with probability prevalence, else 0 (seeded)."""
    labels = np.asarray(labels).astype(int)
    if labels.size == 0 or int(labels.sum()) == 0:
        raise UndefinedRecallError("recall is undefined without positive labels")
    prevalence = labels.sum() / labels.size
    rng = np.random.default_rng(seed)
    scores = (rng.random(labels.size) < prevalence).astype(float)
    return pr_auc(scores, labels)


def export_curve(curve: PRCurve, path):
    """CSV rows threshold,recall,precision plus a `# auc=` footer."""
    if not str(path):
        raise OSError("empty export path")
    lines = ["threshold,recall,precision"]
    for recall, precision, threshold in curve.points:
        lines.append(f"{threshold!r},{recall!r},{precision!r}")
    lines.append(f"# auc={curve.auc!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def import_curve(path) -> PRCurve:
    points = []
    auc = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line == "threshold,recall,precision":
                continue
            if line.startswith("# auc="):
                auc = float(line.split("=", 1)[1])
                continue
            threshold, recall, precision = (float(tok) for tok in line.split(","))
            points.append((recall, precision, threshold))
    if auc is None:
        raise OSError(f"{path}: missing auc footer")
    return PRCurve(points=points, auc=auc)


def export_curve_svg(curve: PRCurve, path, width: int = 640, height: int = 480):
    """Minimal standalone SVG rendering of the step curve."""
    margin = 50.0
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin

    def sx(recall):
        return margin + recall * plot_w

    def sy(precision):
        return height - margin - precision * plot_h

    # step curve: horizontal to the new recall, then vertical to its precision
    verts = [(0.0, curve.points[0][1])] if curve.points else [(0.0, 0.0)]
    for recall, precision, _ in curve.points:
        verts.append((recall, verts[-1][1]))
        verts.append((recall, precision))
    pts = " ".join(f"{sx(r):.2f},{sy(p):.2f}" for r, p in verts)
    grid = []
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        grid.append(
            f'<line x1="{sx(frac):.1f}" y1="{sy(0):.1f}" x2="{sx(frac):.1f}" y2="{sy(1):.1f}" '
            'stroke="#ddd" stroke-width="1"/>'
        )
        grid.append(
            f'<line x1="{sx(0):.1f}" y1="{sy(frac):.1f}" x2="{sx(1):.1f}" y2="{sy(frac):.1f}" '
            'stroke="#ddd" stroke-width="1"/>'
        )
        grid.append(f'<text x="{sx(frac) - 8:.1f}" y="{height - margin + 18:.1f}" font-size="11">{frac:g}</text>')
        grid.append(f'<text x="{margin - 30:.1f}" y="{sy(frac) + 4:.1f}" font-size="11">{frac:g}</text>')
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        + "\n".join(grid)
        + f'\n<polyline points="{pts}" fill="none" stroke="#c0392b" stroke-width="2"/>\n'
        f'<text x="{width / 2 - 20:.1f}" y="{height - 12:.1f}" font-size="13">recall</text>\n'
        f'<text x="14" y="{height / 2:.1f}" font-size="13" transform="rotate(-90 14 {height / 2:.1f})">precision</text>\n'
        f'<text x="{margin:.1f}" y="{margin - 14:.1f}" font-size="13">PR AUC = {curve.auc:.4f}</text>\n'
        "</svg>\n"
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
