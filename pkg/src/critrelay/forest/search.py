"""K-fold cross-validation and the two-stage hyperparameter grid search."""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .ensemble import fit_forest
from .metrics import Metrics, evaluate
from .tree import Hyperparams

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)


class SearchError(RuntimeError):
    """No candidate met the precision floor; ``best`` is the highest-recall log entry."""

    def __init__(self, msg: str, best: "LogEntry | None" = None):
        super().__init__(msg)
        self.best = best


class GridError(ValueError):
    pass


def kfold_split(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Shuffled partition of range(n) into k folds; the first n % k folds get one extra."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    bounds = np.cumsum([0] + sizes)
    return [np.sort(perm[bounds[i]:bounds[i + 1]]) for i in range(k)]


@dataclass
class CVResult:
    mean_recall: float | None
    mean_precision: float | None
    folds: list            # Metrics per evaluated fold, None for skipped ones
    pooled: Metrics

    @property
    def n_evaluated(self) -> int:
        return sum(m is not None for m in self.folds)


def _mean(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def cross_validate(X, y, params: Hyperparams, k: int = 5, seed: int = 0,
                   schema_hash: str = "") -> CVResult:
    """Fit on k-1 folds, score the held-out fold, average over folds.

    A fold whose training part lacks a class is skipped with a warning.  Folds
    with an undefined recall or precision are left out of that mean only.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    folds = kfold_split(len(y), k, seed)
    per_fold = []
    for i, test in enumerate(folds):
        train = np.setdiff1d(np.arange(len(y)), test, assume_unique=True)
        if len(np.unique(y[train])) < 2:
            log.warning("fold %d skipped: training part has a single class", i)
            per_fold.append(None)
            continue
        model = fit_forest(X[train], y[train], params, schema_hash)
        pred, _ = model.predict(X[test])
        per_fold.append(evaluate(pred, y[test]))
    done = [m for m in per_fold if m is not None]
    if not done:
        raise SearchError("every fold is degenerate (single-class training data)")
    pooled = sum(done[1:], done[0])
    return CVResult(_mean(m.recall for m in done), _mean(m.precision for m in done),
                    per_fold, pooled)


# ---------------------------------------------------------------- grid

_TUNABLE = {"class_weight", "n_trees", "max_depth", "min_samples_split",
            "min_samples_leaf", "max_features", "bootstrap"}
_STEPPABLE = {"class_weight", "n_trees", "max_depth", "min_samples_split", "min_samples_leaf",
              "max_features"}


def _to_field(name: str, value):
    """Map a grid entry to a Hyperparams field: class_weight w gives (1, w)."""
    if name == "class_weight":
        return "class_weights", value if value == "balanced" else (1.0, float(value))
    if name == "max_depth" and value == "unlimited":
        return "max_depth", None
    return name, value


def _from_field(name: str, params: Hyperparams):
    if name == "class_weight":
        cw = params.class_weights
        return cw if cw == "balanced" else cw[1]
    if name == "max_depth" and params.max_depth is None:
        return "unlimited"
    return getattr(params, name)


@dataclass(frozen=True)
class GridSpec:
    stage1: dict                            # name -> list of values
    stage2_steps: dict = field(default_factory=dict)   # name -> numeric step
    base: Hyperparams = Hyperparams()
    precision_floor: float = 0.6

    def __post_init__(self):
        if not self.stage1 or any(len(v) == 0 for v in self.stage1.values()):
            raise GridError("stage-1 grid must be non-empty")
        bad = (set(self.stage1) | set(self.stage2_steps)) - _TUNABLE
        if bad:
            raise GridError(f"unknown grid parameter(s) {sorted(bad)}")
        bad = set(self.stage2_steps) - _STEPPABLE
        if bad:
            raise GridError(f"stage-2 steps need numeric parameters, got {sorted(bad)}")
        if not 0 <= self.precision_floor <= 1:
            raise GridError("precision_floor must lie in [0, 1]")
        for name, values in self.stage1.items():
            for v in values:
                self.params_for({name: v})    # validates each value

    def params_for(self, point: dict) -> Hyperparams:
        kw = dict(_to_field(n, v) for n, v in point.items())
        try:
            return replace(self.base, **kw)
        except (TypeError, ValueError) as exc:
            raise GridError(f"invalid grid point {point}: {exc}") from None

    def stage1_points(self) -> list[dict]:
        names = list(self.stage1)
        return [dict(zip(names, combo)) for combo in itertools.product(*self.stage1.values())]

    def stage2_points(self, winner: dict) -> list[dict]:
        axes = []
        for name in self.stage1:
            v = winner[name]
            step = self.stage2_steps.get(name)
            if step is None or isinstance(v, str) or isinstance(v, bool):
                axes.append([v])
                continue
            cand = [v - step, v, v + step]
            if isinstance(v, int) and float(step).is_integer():
                cand = [int(c) for c in cand]
            axes.append(cand)
        out = []
        for combo in itertools.product(*axes):
            point = dict(zip(self.stage1, combo))
            try:
                self.params_for(point)
            except GridError:
                continue
            if point.get("class_weight", 1) != "balanced" and \
                    isinstance(point.get("class_weight"), (int, float)) and point["class_weight"] <= 0:
                continue
            out.append(point)
        return out


def load_grid(text: str) -> GridSpec:
    """Grid file (TOML)::

        precision_floor = 0.6
        [base]              # any Hyperparams field; class_weight = w1 or "balanced"
        seed = 0
        [stage1]            # value lists, swept as a cartesian product
        class_weight = [10, 20]
        max_depth = [10, 15]
        [stage2]            # numeric steps around the stage-1 winner
        class_weight = 5
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise GridError(f"grid parse error: {exc}") from None
    bad = set(doc) - {"precision_floor", "base", "stage1", "stage2"}
    if bad:
        raise GridError(f"grid: unknown field(s) {sorted(bad)}")
    base_kw = {}
    for name, v in doc.get("base", {}).items():
        if name not in _TUNABLE | {"seed"}:
            raise GridError(f"grid [base]: unknown parameter {name!r}")
        k, val = _to_field(name, v)
        base_kw[k] = val
    try:
        base = Hyperparams(**base_kw)
    except (TypeError, ValueError) as exc:
        raise GridError(f"grid [base]: {exc}") from None
    stage1 = {}
    for name, values in doc.get("stage1", {}).items():
        stage1[name] = list(values) if isinstance(values, list) else [values]
    return GridSpec(stage1, dict(doc.get("stage2", {})), base,
                    float(doc.get("precision_floor", 0.6)))


def load_grid_file(path) -> GridSpec:
    return load_grid(Path(path).read_text())


@dataclass
class LogEntry:
    stage: int
    point: dict
    params: Hyperparams
    mean_recall: float | None
    mean_precision: float | None
    pooled: Metrics
    feasible: bool

    def as_row(self) -> dict:
        return {"stage": self.stage, **{k: self.point[k] for k in sorted(self.point)},
                "mean_recall": _fmt(self.mean_recall), "mean_precision": _fmt(self.mean_precision),
                "feasible": int(self.feasible)}


def _fmt(x):
    return "n/a" if x is None else f"{x:.6f}"


def _rank(e: LogEntry):
    return (e.mean_recall if e.mean_recall is not None else -1.0,
            e.mean_precision if e.mean_precision is not None else -1.0)


def _cv_task(args):
    X, y, params, k, seed = args
    return cross_validate(X, y, params, k, seed)


def grid_search_two_stage(X, y, grid: GridSpec, k: int = 5, seed: int = 0, jobs: int = 1):
    """Maximize mean CV recall subject to ``mean precision >= precision_floor``.

    Stage 1 sweeps the coarse grid; stage 2 sweeps best +/- step for each
    stepped parameter around the stage-1 winner.  Equal recall is broken by
    precision, then by log order.  Returns ``(best Hyperparams, log)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    entries: list[LogEntry] = []
    seen = set()

    def run(stage, points):
        points = [p for p in points if _key(p) not in seen]
        seen.update(_key(p) for p in points)
        params = [grid.params_for(p) for p in points]
        tasks = [(X, y, hp, k, seed) for hp in params]
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(min(jobs, len(tasks))) as pool:
                results = list(pool.map(_cv_task, tasks))
        else:
            results = [_cv_task(t) for t in tasks]
        for p, hp, cv in zip(points, params, results):
            ok = cv.mean_precision is not None and cv.mean_precision >= grid.precision_floor \
                and cv.mean_recall is not None
            e = LogEntry(stage, p, hp, cv.mean_recall, cv.mean_precision, cv.pooled, ok)
            log.info("stage %d %s: recall %s precision %s%s", stage, p, _fmt(cv.mean_recall),
                     _fmt(cv.mean_precision), "" if ok else " (below floor)")
            entries.append(e)

    def winner():
        best = None
        for e in entries:
            if e.feasible and (best is None or _rank(e) > _rank(best)):
                best = e
        return best

    run(1, grid.stage1_points())
    w = winner()
    if w is None:
        raise SearchError(f"no stage-1 candidate reached precision {grid.precision_floor}",
                          max(entries, key=_rank))
    run(2, grid.stage2_points(w.point))
    w = winner()
    return w.params, entries


def _key(point: dict):
    return tuple(sorted((k, repr(v)) for k, v in point.items()))
