"""Baselines and metrics: majority vote, ROC/AUC, WAIC, Brier score, and
credible-interval coverage / MSE for annotator expertise.

All functions are pure over immutable inputs. The WAIC terms can be computed
either from a full draws-by-observations log-likelihood matrix (`waic`) or
accumulated online during sampling (`WaicAccumulator`); the two agree up to
floating-point association.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import AnnotationTensor, GoldStandard
from .errors import DataError


def majority_vote(tensor: AnnotationTensor, unvoted_score: float = 0.5) -> np.ndarray:
    """Graded per-cell score: positive votes / votes.

    Cells nobody voted on carry no evidence and score at the chance level 0.5,
    ranking between voted-absent and voted-present cells (set unvoted_score=0
    to rank them below everything instead). The graded score (not a hard
    threshold) feeds the ROC so the baseline has a full curve.
    """
    pos = np.zeros(tensor.n_cells)
    tot = np.zeros(tensor.n_cells)
    np.add.at(pos, tensor.cell_codes, tensor.labels.astype(np.float64))
    np.add.at(tot, tensor.cell_codes, 1.0)
    with np.errstate(invalid="ignore"):
        score = np.where(tot > 0, pos / np.maximum(tot, 1.0), unvoted_score)
    return score.reshape(tensor.n_recordings, tensor.n_species)


def roc_auc(scores, labels):
    """AUC by the Mann-Whitney statistic (ties count 1/2) plus the ROC points.

    Returns (auc, points) with points a list of (fpr, tpr, threshold) swept
    over the unique score thresholds, anchored at (0, 0, inf) and ending at
    (1, 1, min score).
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.size != y.size:
        raise DataError("scores and labels must be the same length")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("roc_auc needs both classes present")

    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size)
    sorted_s = s[order]
    # midranks for ties
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[y == 1].sum()
    auc = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    # ROC points: sweep thresholds from high to low over unique scores
    desc = np.argsort(-s, kind="mergesort")
    s_desc = s[desc]
    y_desc = y[desc]
    tp = np.cumsum(y_desc == 1)
    fp = np.cumsum(y_desc == 0)
    last_of_value = np.flatnonzero(np.diff(s_desc) != 0)
    idx = np.concatenate([last_of_value, [s.size - 1]])
    points = [(0.0, 0.0, float("inf"))]
    points.extend(
        (float(fp[i] / n_neg), float(tp[i] / n_pos), float(s_desc[i])) for i in idx
    )
    return float(auc), points


def waic(loglik: np.ndarray):
    """(lppd, p_waic, waic) from a draws-by-observations log-likelihood matrix.

    lppd sums log mean_s exp(ll) per observation (max-shifted); p_waic sums
    the per-observation sample variance (needs >= 2 draws; a single draw gives
    p_waic = 0); waic = -2 (lppd - p_waic) exactly.
    """
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim != 2 or ll.size == 0:
        raise DataError("waic expects a non-empty (draws, observations) matrix")
    m = ll.max(axis=0)
    lppd = float(np.sum(m + np.log(np.mean(np.exp(ll - m[None, :]), axis=0))))
    p_waic = float(np.sum(ll.var(axis=0, ddof=1))) if ll.shape[0] > 1 else 0.0
    return lppd, p_waic, -2.0 * (lppd - p_waic)


class WaicAccumulator:
    """Online, exact accumulation of the WAIC terms over retained draws.

    Keeps a running max-shifted sum of exp(ll) for the lppd term and Welford
    mean/M2 for the variance term, one slot per observation unit.
    """

    def __init__(self, n_units: int):
        self.n_units = int(n_units)
        self.count = 0
        self.max = np.full(n_units, -np.inf)
        self.rsum = np.zeros(n_units)  # sum of exp(ll - max)
        self.mean = np.zeros(n_units)
        self.m2 = np.zeros(n_units)

    def update(self, ll: np.ndarray) -> None:
        ll = np.asarray(ll, dtype=float)
        if ll.shape != (self.n_units,):
            raise DataError("log-likelihood vector has the wrong length")
        bigger = ll > self.max
        self.rsum[bigger] *= np.exp(self.max[bigger] - ll[bigger])
        self.max[bigger] = ll[bigger]
        self.rsum += np.exp(ll - self.max)
        self.count += 1
        delta = ll - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (ll - self.mean)

    def merge(self, other: "WaicAccumulator") -> "WaicAccumulator":
        if other.n_units != self.n_units:
            raise DataError("cannot merge WAIC accumulators of different sizes")
        out = WaicAccumulator(self.n_units)
        out.count = self.count + other.count
        out.max = np.maximum(self.max, other.max)
        out.rsum = self.rsum * np.exp(self.max - out.max) + other.rsum * np.exp(
            other.max - out.max
        )
        na, nb = self.count, other.count
        if na == 0:
            out.mean, out.m2 = other.mean.copy(), other.m2.copy()
        elif nb == 0:
            out.mean, out.m2 = self.mean.copy(), self.m2.copy()
        else:
            delta = other.mean - self.mean
            out.mean = self.mean + delta * nb / out.count
            out.m2 = self.m2 + other.m2 + delta**2 * na * nb / out.count
        return out

    def result(self):
        if self.count == 0:
            raise DataError("no draws accumulated")
        lppd = float(np.sum(self.max + np.log(self.rsum / self.count)))
        p_waic = float(np.sum(self.m2 / (self.count - 1))) if self.count > 1 else 0.0
        return lppd, p_waic, -2.0 * (lppd - p_waic)

    def to_arrays(self) -> dict:
        return {
            "count": np.int64(self.count),
            "max": self.max,
            "rsum": self.rsum,
            "mean": self.mean,
            "m2": self.m2,
        }

    @staticmethod
    def from_arrays(arrays) -> "WaicAccumulator":
        acc = WaicAccumulator(int(arrays["max"].size))
        acc.count = int(arrays["count"])
        acc.max = np.asarray(arrays["max"], dtype=float)
        acc.rsum = np.asarray(arrays["rsum"], dtype=float)
        acc.mean = np.asarray(arrays["mean"], dtype=float)
        acc.m2 = np.asarray(arrays["m2"], dtype=float)
        return acc


def brier(probabilities, labels) -> float:
    """Mean squared difference between predicted probabilities and outcomes."""
    p = np.asarray(probabilities, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if p.size != y.size:
        raise DataError("probabilities and labels must be the same length")
    if np.any((p < 0) | (p > 1)):
        raise DataError("probabilities outside [0, 1]")
    return float(np.mean((p - y) ** 2))


def expertise_coverage_mse(draws: np.ndarray, truth):
    """95% equal-tailed CI coverage and MSE of posterior-mean expertise.

    draws: (n_draws, n_annotators) pooled posterior draws on the probability
    scale; truth: per-annotator true rates. Intervals use type-7 empirical
    quantiles. Returns (coverage rate, mse, per-annotator covered flags,
    per-annotator squared errors).
    """
    d = np.asarray(draws, dtype=float)
    t = np.asarray(truth, dtype=float)
    if d.ndim != 2 or d.shape[1] != t.size:
        raise DataError("draws must be (n_draws, n_annotators) aligned with truth")
    lo = np.quantile(d, 0.025, axis=0)  # numpy default 'linear' = type 7
    hi = np.quantile(d, 0.975, axis=0)
    covered = (lo <= t) & (t <= hi)
    sq_err = (d.mean(axis=0) - t) ** 2
    return float(covered.mean()), float(sq_err.mean()), covered, sq_err


@dataclass
class EvaluationReport:
    auc: float
    roc_points: list
    waic: tuple | None  # (lppd, p_waic, waic)
    brier: float | None
    coverage: float | None
    mse: float | None
    mv_auc: float | None = None
    extra: dict | None = None

    def to_text(self) -> str:
        lines = [f"auc {self.auc:.6f}"]
        if self.mv_auc is not None:
            lines.append(f"mv_auc {self.mv_auc:.6f}")
        if self.waic is not None:
            lppd, p_w, w = self.waic
            lines += [f"lppd {lppd:.4f}", f"p_waic {p_w:.4f}", f"waic {w:.4f}"]
        if self.brier is not None:
            lines.append(f"brier {self.brier:.6f}")
        if self.coverage is not None:
            lines.append(f"tpr_coverage {self.coverage:.4f}")
        if self.mse is not None:
            lines.append(f"tpr_mse {self.mse:.6e}")
        for key, val in (self.extra or {}).items():
            lines.append(f"{key} {val}")
        return "\n".join(lines) + "\n"


def write_roc_csv(points, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fpr,tpr,threshold\n")
        for fpr, tpr, thr in points:
            fh.write(f"{fpr!r},{tpr!r},{thr!r}\n")


def gold_scores(score_matrix: np.ndarray, gold: GoldStandard):
    """Restrict a full (N1, N3) score matrix to the gold-standard cells."""
    return score_matrix[gold.recordings, gold.species], gold.labels
