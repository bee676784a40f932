"""Per-frame precision/recall analysis and per-actor smoother evaluation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import DegenerateLabelsError, UnreachableRecallError
from .simulator import FrameRecord, FrameTable
from .smoother import SmootherConfig, buffer_fractions

SWEEP_THRESHOLDS = (0.0, 0.3, 0.5, 0.7)
PCT_CONVENTION = "relative: (new - baseline) / baseline * 100"


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def pr_curve_arrays(scores, labels) -> list[PRPoint]:
    """One operating point per distinct score; a frame is positive iff score >= threshold."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    pos, neg = int(labels.sum()), int((~labels).sum())
    if pos == 0 or neg == 0:
        raise DegenerateLabelsError("PR analysis needs at least one positive and one negative")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    tp_cum = np.cumsum(y)
    fp_cum = np.cumsum(~y)
    # last index of each run of equal scores (descending)
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    points = []
    for e in ends[::-1]:
        tp, fp = int(tp_cum[e]), int(fp_cum[e])
        precision = tp / (tp + fp)
        recall = tp / pos
        points.append(PRPoint(float(s[e]), precision, recall, _f1(precision, recall), tp, fp, pos - tp, neg - fp))
    return points


def _scored_frames(records) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(records, FrameTable):
        if records.scores is None:
            raise ValueError("table has no scores")
        ok = ~np.isnan(records.scores)
        return records.scores[ok], records.labels[ok]
    rs = [r for r in records if r.score is not None]
    return np.array([r.score for r in rs], dtype=float), np.array([r.label for r in rs], dtype=bool)


def pr_curve(records: Union[FrameTable, Sequence[FrameRecord]]) -> list[PRPoint]:
    """PR curve over every scored frame (frames without a score are skipped)."""
    return pr_curve_arrays(*_scored_frames(records))


def max_f1(curve: Sequence[PRPoint]) -> PRPoint:
    """Operating point with the highest F1 (lowest threshold wins ties)."""
    return max(curve, key=lambda p: (p.f1, -p.threshold))


def precision_at_recall(curve: Sequence[PRPoint], target: float = 0.8) -> float:
    """Highest precision among operating points whose recall reaches ``target``."""
    if not curve:
        raise ValueError("empty PR curve")
    qualifying = [p.precision for p in curve if p.recall >= target - 1e-12]
    if not qualifying:
        raise UnreachableRecallError(f"no operating point reaches recall {target}")
    return max(qualifying)


# -- per-actor evaluation ----------------------------------------------------------

class ActorColumns(NamedTuple):
    """Rows grouped by actor (actor-major, frames ascending)."""
    keys: list
    actor_of_row: np.ndarray
    frame_index: np.ndarray
    valid: np.ndarray
    scores: np.ndarray
    actor_active: np.ndarray


def actor_columns(records: Union[FrameTable, Sequence[FrameRecord]],
                  scores: Optional[np.ndarray] = None) -> ActorColumns:
    if isinstance(records, FrameTable):
        s = records.scores if scores is None else np.asarray(scores, dtype=float)
        if s is None:
            raise ValueError("table has no scores")
        order = np.lexsort((records.frame_index, records.actor_idx))
        used, actor_of_row = np.unique(records.actor_idx[order], return_inverse=True)
        keys = [(records.actors[a].scene_id, records.actors[a].track_id) for a in used]
        active = np.array([records.actors[a].is_active for a in used], dtype=bool)
        valid = records.valid[order] & ~np.isnan(s[order])
        return ActorColumns(keys, actor_of_row, records.frame_index[order], valid, np.nan_to_num(s[order]),
                            active)
    first: dict = {}
    for r in records:
        first.setdefault(r.actor_key, len(first))
    order = sorted(range(len(records)), key=lambda i: (first[records[i].actor_key], records[i].frame_index))
    keys = list(first)
    actor_of_row = np.array([first[records[i].actor_key] for i in order], dtype=np.int64)
    active = np.zeros(len(keys), dtype=bool)
    for r in records:
        active[first[r.actor_key]] |= r.is_active
    s = [records[i].score for i in order] if scores is None else [scores[i] for i in order]
    valid = np.array([records[i].crop.valid and s[j] is not None for j, i in enumerate(order)], dtype=bool)
    return ActorColumns(keys, actor_of_row, np.array([records[i].frame_index for i in order]), valid,
                        np.array([0.0 if v is None else v for v in s], dtype=float), active)


def actor_max_fractions(cols: ActorColumns, cfg: SmootherConfig) -> np.ndarray:
    """Largest buffer positive-fraction each actor reaches with >= min_frames held.

    An actor is smoothed-active on some frame under threshold T iff its value
    exceeds T; actors that never hold ``min_frames`` outputs get -1.
    """
    n_actors = len(cols.keys)
    out = np.full(n_actors, -1.0)
    if cfg.reset_after_invalid is not None:
        bounds = np.r_[0, np.cumsum(np.bincount(cols.actor_of_row, minlength=n_actors))]
        for a in range(n_actors):
            sl = slice(bounds[a], bounds[a + 1])
            frac = buffer_fractions(cols.scores[sl], cols.valid[sl], cfg)
            if np.any(~np.isnan(frac)):
                out[a] = np.nanmax(frac)
        return out
    v_actor = cols.actor_of_row[cols.valid]
    positive = (cols.scores[cols.valid] >= cfg.frame_decision_threshold).astype(np.int64)
    if len(positive) == 0:
        return out
    cum = np.r_[0, np.cumsum(positive)]
    j = np.arange(len(positive))
    starts = np.r_[0, np.flatnonzero(v_actor[1:] != v_actor[:-1]) + 1]
    seg_start = np.repeat(starts, np.diff(np.r_[starts, len(positive)]))
    count = np.minimum(j - seg_start + 1, cfg.buffer_capacity)
    frac = (cum[j + 1] - cum[j + 1 - count]) / count
    ok = count >= cfg.min_frames
    np.maximum.at(out, v_actor[ok], frac[ok])
    return out


@dataclass(frozen=True)
class ActorMetrics:
    threshold_T: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_predictions(cls, predicted: np.ndarray, actual: np.ndarray, threshold_T: float) -> "ActorMetrics":
        tp = int(np.sum(predicted & actual))
        fp = int(np.sum(predicted & ~actual))
        fn = int(np.sum(~predicted & actual))
        tn = int(np.sum(~predicted & ~actual))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        return cls(threshold_T, precision, recall, _f1(precision, recall), tp, fp, fn, tn)


def _scores_for(records, model, renderer):
    if model is None:
        return None
    from .classifier import score_records, score_table
    if isinstance(records, FrameTable):
        return score_table(model, records, renderer)
    return [r.score for r in score_records(model, records, renderer)]


def per_actor_metrics(records: Union[FrameTable, Sequence[FrameRecord]], model=None,
                      cfg: SmootherConfig = SmootherConfig(), renderer=None) -> ActorMetrics:
    """Actor-level precision/recall/F1 of the smoothed decisions.

    An actor counts as predicted-active if the smoother flags it on at least
    one frame. With ``model=None`` the scores already on the records are used.
    """
    cols = actor_columns(records, _scores_for(records, model, renderer))
    predicted = actor_max_fractions(cols, cfg) > cfg.threshold_T
    return ActorMetrics.from_predictions(predicted, cols.actor_active, cfg.threshold_T)


# -- reports -------------------------------------------------------------------------

def pct_change(new: float, old: float) -> Optional[float]:
    if old == 0:
        return 0.0 if new == 0 else None
    return (new - old) / old * 100.0


@dataclass
class EvalReport:
    name: str = "report"
    frame_curve: list = field(default_factory=list)
    max_f1: Optional[float] = None
    max_f1_threshold: Optional[float] = None
    precision_at_recall: Optional[float] = None
    recall_target: float = 0.8
    actor_rows: list = field(default_factory=list)
    baseline: Optional[str] = None
    pct_change_max_f1: Optional[float] = None
    pct_change_precision_at_recall: Optional[float] = None
    pct_convention: str = PCT_CONVENTION
    counts: dict = field(default_factory=dict)

    def attach_baseline(self, base: "EvalReport") -> "EvalReport":
        """Fill %-change fields against ``base`` (frame metrics and actor rows matched by T)."""
        self.baseline = base.name
        if self.max_f1 is not None and base.max_f1 is not None:
            self.pct_change_max_f1 = pct_change(self.max_f1, base.max_f1)
        if self.precision_at_recall is not None and base.precision_at_recall is not None:
            self.pct_change_precision_at_recall = pct_change(self.precision_at_recall, base.precision_at_recall)
        base_rows = {row["threshold_T"]: row for row in base.actor_rows}
        for row in self.actor_rows:
            ref = base_rows.get(row["threshold_T"])
            for k in ("precision", "recall", "f1"):
                row[f"pct_change_{k}"] = None if ref is None else pct_change(row[k], ref[k])
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frame_curve"] = [asdict(p) for p in self.frame_curve]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["frame_curve"] = [PRPoint(**p) for p in d.get("frame_curve", [])]
        return cls(**d)


def frame_report(records, name: str = "report", recall_target: float = 0.8,
                 include_curve: bool = True) -> EvalReport:
    curve = pr_curve(records)
    best = max_f1(curve)
    try:
        par = precision_at_recall(curve, recall_target)
    except UnreachableRecallError:
        par = None
    return EvalReport(name, curve if include_curve else [], best.f1, best.threshold, par, recall_target)


def sweep_threshold(records: Union[FrameTable, Sequence[FrameRecord]], model=None,
                    T_values: Iterable[float] = SWEEP_THRESHOLDS,
                    cfg: SmootherConfig = SmootherConfig(), renderer=None,
                    name: str = "sweep") -> EvalReport:
    """Per-actor metrics for each smoother threshold, with %-change vs the first row."""
    cols = actor_columns(records, _scores_for(records, model, renderer))
    best = actor_max_fractions(cols, cfg)
    rows = []
    for T in T_values:
        m = ActorMetrics.from_predictions(best > T, cols.actor_active, float(T))
        rows.append(asdict(m))
    base = dict(rows[0]) if rows else None
    for row in rows:
        for k in ("precision", "recall", "f1"):
            row[f"pct_change_{k}"] = pct_change(row[k], base[k])
    return EvalReport(name=name, actor_rows=rows, baseline=f"{name}@T={rows[0]['threshold_T']:g}" if rows else None)


def _fmt(v, spec="{:.2f}"):
    return "n/a" if v is None else spec.format(v)


def format_frame_table(reports: Sequence[EvalReport]) -> str:
    lines = [f"{'Model':<24}{'% change of max-F1':>22}{'% change of precision at 0.8 recall':>38}"
             f"{'max-F1':>10}{'P@0.8R':>10}"]
    for r in reports:
        lines.append(f"{r.name:<24}{_fmt(r.pct_change_max_f1):>22}{_fmt(r.pct_change_precision_at_recall):>38}"
                     f"{_fmt(r.max_f1, '{:.4f}'):>10}{_fmt(r.precision_at_recall, '{:.4f}'):>10}")
    lines.append(f"(% change is {PCT_CONVENTION})")
    return "\n".join(lines)


def format_sweep_table(report: EvalReport) -> str:
    lines = [f"{'Smoother threshold T':>22}{'% change of precision':>24}{'% change of recall':>21}"
             f"{'% change of F1 score':>23}{'precision':>11}{'recall':>9}{'F1':>8}"]
    for row in report.actor_rows:
        lines.append(f"{row['threshold_T'] * 100:>21.0f}%{_fmt(row['pct_change_precision']):>24}"
                     f"{_fmt(row['pct_change_recall']):>21}{_fmt(row['pct_change_f1']):>23}"
                     f"{row['precision']:>11.4f}{row['recall']:>9.4f}{row['f1']:>8.4f}")
    lines.append(f"(% change is {PCT_CONVENTION})")
    return "\n".join(lines)
