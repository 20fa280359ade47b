"""Splits, resampling, cross-validated grid search, metrics, permutation test."""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np


class EvalError(ValueError):
    pass


# ---------------------------------------------------------------------------
# splitting and resampling

@dataclass(frozen=True)
class SplitSpec:
    train_indices: np.ndarray
    test_indices: np.ndarray
    ratio: float
    stratified: bool
    seed: int

    def __post_init__(self):
        tr, te = set(self.train_indices.tolist()), set(self.test_indices.tolist())
        if tr & te:
            raise EvalError("train and test indices overlap")
        n = len(tr) + len(te)
        if tr | te != set(range(n)):
            raise EvalError("split does not cover 0..n-1")


def _check_labels(labels):
    y = np.asarray(labels)
    if y.ndim != 1:
        raise EvalError("labels must be one-dimensional")
    if not np.isin(y, (0, 1)).all():
        raise EvalError("labels must be 0/1")
    return y.astype(np.int64)


def stratified_split(labels, ratio=0.7, stratify=True, seed=0):
    """7:3-style split; train size is floor(n * ratio) exactly.

    Stratified mode keeps each class's train share within one row of
    proportional, distributing the leftover to the largest fractional parts.
    """
    y = _check_labels(labels)
    n = y.size
    if n < 2:
        raise EvalError("need at least two rows to split")
    if not 0.0 < ratio < 1.0:
        raise EvalError(f"ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    n_train = int(np.floor(n * ratio))
    if not stratify:
        perm = rng.permutation(n)
        train, test = perm[:n_train], perm[n_train:]
    else:
        classes = np.unique(y)
        if classes.size < 2:
            raise EvalError("stratified split needs both classes present")
        members = [rng.permutation(np.flatnonzero(y == c)) for c in classes]
        quotas = [int(np.floor(m.size * ratio)) for m in members]
        fracs = [m.size * ratio - q for m, q in zip(members, quotas)]
        leftover = n_train - sum(quotas)
        # hand the remaining slots to the largest fractional parts
        for i in np.argsort(-np.asarray(fracs), kind="stable")[:leftover]:
            quotas[i] += 1
        train = np.concatenate([m[:q] for m, q in zip(members, quotas)])
        test = np.concatenate([m[q:] for m, q in zip(members, quotas)])
    return SplitSpec(np.sort(train), np.sort(test), ratio, stratify, seed)


def undersample(labels, ratio=4.0, seed=0):
    """Keep the minority class, cap the majority at ratio x minority.

    Returns sorted retained indices; input order is untouched when the
    cap is already satisfied.
    """
    y = _check_labels(labels)
    if ratio <= 0:
        raise EvalError("ratio must be positive")
    counts = np.bincount(y, minlength=2)
    if counts.min() == 0:
        raise EvalError("undersampling needs both classes present")
    minority = int(np.argmin(counts))
    majority = 1 - minority
    cap = int(round(ratio * counts[minority]))
    maj_idx = np.flatnonzero(y == majority)
    if maj_idx.size <= cap:
        return np.arange(y.size)
    rng = np.random.default_rng(seed)
    kept_maj = rng.choice(maj_idx, size=cap, replace=False)
    return np.sort(np.concatenate([np.flatnonzero(y == minority), kept_maj]))


# ---------------------------------------------------------------------------
# metrics

def auc(scores, labels):
    """Rank AUC: P(score_pos > score_neg) with ties credited one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_labels(labels)
    if s.shape != y.shape:
        raise EvalError("scores and labels differ in length")
    if not np.isfinite(s).all():
        raise EvalError("scores must be finite")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvalError("AUC needs both classes present")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[order[j + 1]] == s[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum = ranks[y == 1].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class EvalReport:
    auc: float
    precision: float
    recall: float
    f1: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    no_predicted_positives: bool

    def to_json(self):
        return json.dumps({
            "auc": self.auc, "precision": self.precision,
            "recall": self.recall, "f1": self.f1,
            "threshold": self.threshold,
            "confusion": {"tp": self.tp, "fp": self.fp,
                          "tn": self.tn, "fn": self.fn},
            "no_predicted_positives": self.no_predicted_positives,
        }, sort_keys=True)


def f1_score(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def classification_report(scores, labels, threshold=0.5):
    """Threshold rule: scores >= threshold predict the positive class."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_labels(labels)
    if s.shape != y.shape:
        raise EvalError("scores and labels differ in length")
    if y.size == 0:
        raise EvalError("empty inputs")
    pred = (s >= threshold).astype(np.int64)
    tp = int(((pred == 1) & (y == 1)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    tn = int(((pred == 0) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())
    no_pos = (tp + fp) == 0
    precision = 0.0 if no_pos else tp / (tp + fp)
    recall = 0.0 if (tp + fn) == 0 else tp / (tp + fn)
    both = 0 < y.sum() < y.size
    area = auc(s, y) if both else None
    return EvalReport(area, precision, recall, f1_score(precision, recall),
                      threshold, tp, fp, tn, fn, no_pos)


# ---------------------------------------------------------------------------
# paired permutation test

@dataclass(frozen=True)
class PermTestResult:
    observed: float
    n_perm: int
    count_ge: int
    p_value: float
    seed: int

    def to_json(self):
        return json.dumps({
            "observed_abs_delta_auc": self.observed, "n_perm": self.n_perm,
            "count_ge": self.count_ge, "p_value": self.p_value,
            "seed": self.seed,
        }, sort_keys=True)


def perm_test_auc(scores_a, scores_b, labels, n_perm=1000, seed=0):
    """Paired test of |AUC(a) - AUC(b)| by per-instance score swapping."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    y = _check_labels(labels)
    if a.shape != y.shape or b.shape != y.shape:
        raise EvalError("paired score vectors must match the label length")
    if n_perm < 1:
        raise EvalError("n_perm must be at least 1")
    observed = abs(auc(a, y) - auc(b, y))
    rng = np.random.default_rng(seed)
    count = 0
    for _ in range(n_perm):
        swap = rng.random(y.size) < 0.5
        pa = np.where(swap, b, a)
        pb = np.where(swap, a, b)
        stat = abs(auc(pa, y) - auc(pb, y))
        if stat >= observed - 1e-12:
            count += 1
    p = (1 + count) / (n_perm + 1)
    return PermTestResult(observed, n_perm, count, p, seed)


# ---------------------------------------------------------------------------
# cross-validated grid search

def stratified_folds(labels, k, seed):
    """k folds with overall sizes within 1 and per-class counts within 1.

    Classes are dealt base shares first; each class's remainder goes to the
    currently lightest folds so the global sizes stay balanced.
    """
    y = _check_labels(labels)
    if k < 2:
        raise EvalError("k must be at least 2")
    if y.size < k:
        raise EvalError("fewer rows than folds")
    rng = np.random.default_rng(seed)
    loads = np.zeros(k, dtype=np.int64)
    folds = [[] for _ in range(k)]
    for c in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == c))
        counts = np.full(k, members.size // k, dtype=np.int64)
        loads += counts
        extras = members.size - counts.sum()
        for f in np.lexsort((np.arange(k), loads))[:extras]:
            counts[f] += 1
            loads[f] += 1
        pos = 0
        for f in range(k):
            folds[f].append(members[pos:pos + counts[f]])
            pos += counts[f]
    out = [np.sort(np.concatenate(parts)) for parts in folds]
    for f, idx in enumerate(out):
        if np.unique(y[idx]).size < 2:
            raise EvalError(f"fold {f} contains a single class")
    return out


@dataclass
class GridSearchResult:
    best_params: dict
    best_index: int
    metric: str
    table: list = field(default_factory=list)
    folds: list = field(default_factory=list)


def _cell_seed(seed, cell, fold):
    # cell 0 is reserved for fold-level resampling; grid cells start at 1
    return int(np.random.SeedSequence([seed, cell, fold]).generate_state(1)[0])


def kfold_grid_search(trainer, grid, labels, k=5, metric="f1", seed=0,
                      undersample_ratio=None, jobs=1, threshold=0.5):
    """Pick the grid cell with the best mean validation metric.

    trainer(params, fit_indices, val_indices, seed) returns validation
    scores; it must fit transformers and the model from fit/fold-train rows
    only.  fit_indices are the fold-train rows after optional undersampling.
    threshold is the F1 decision cut (margin scorers cut at 0).  Ties keep
    the earliest grid entry.  Parallel execution over (cell, fold) tasks
    writes to preassigned slots, so jobs > 1 changes nothing.
    """
    if not grid:
        raise EvalError("empty parameter grid")
    if metric not in ("f1", "auc"):
        raise EvalError(f"unknown selection metric {metric!r}")
    y = _check_labels(labels)
    folds = stratified_folds(y, k, seed)
    fit_sets = []
    for f, val_idx in enumerate(folds):
        train_rows = np.sort(np.concatenate(
            [folds[g] for g in range(k) if g != f]))
        if undersample_ratio is not None:
            keep = undersample(y[train_rows], undersample_ratio,
                               seed=_cell_seed(seed, 0, f))
            train_rows = train_rows[keep]
        fit_sets.append(train_rows)

    def run_one(cell, f):
        val_idx = folds[f]
        scores = np.asarray(trainer(dict(grid[cell]), fit_sets[f], val_idx,
                                    _cell_seed(seed, cell + 1, f)))
        if scores.shape != val_idx.shape:
            raise EvalError("trainer returned a wrong-length score vector")
        if metric == "auc":
            return auc(scores, y[val_idx])
        return classification_report(scores, y[val_idx],
                                     threshold=threshold).f1

    tasks = [(c, f) for c in range(len(grid)) for f in range(k)]
    scores = np.empty((len(grid), k))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for (c, f), v in zip(tasks, pool.map(lambda t: run_one(*t), tasks)):
                scores[c, f] = v
    else:
        for c, f in tasks:
            scores[c, f] = run_one(c, f)

    means = scores.mean(axis=1)
    best = int(np.argmax(means))  # argmax keeps the first of tied cells
    table = [{"params": dict(grid[c]), "per_fold": scores[c].tolist(),
              "mean": float(means[c])} for c in range(len(grid))]
    return GridSearchResult(dict(grid[best]), best, metric, table, folds)


def cv_table_tsv(result):
    keys = sorted({k for row in result.table for k in row["params"]})
    n_folds = len(result.table[0]["per_fold"])
    header = keys + [f"fold{f}" for f in range(n_folds)] + ["mean"]
    lines = ["\t".join(header)]
    for row in result.table:
        cells = [repr(row["params"].get(k)) for k in keys]
        cells += [f"{v:.6f}" for v in row["per_fold"]]
        cells.append(f"{row['mean']:.6f}")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
