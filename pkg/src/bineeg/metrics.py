"""Evaluation metrics: ROC/AUC, sensitivities, and false predictions per hour.

AUC is the Mann-Whitney statistic P(score+ > score-) + 0.5 P(tie), computed
with midranks. Alarm semantics: a window whose preictal probability reaches
the threshold raises an alarm; a seizure counts as predicted when any alarm
falls inside its preictal range; interictal alarms are false alarms, with
subsequent ones suppressed for a refractory period. Both the refractory alarm
rate and the raw per-window alarm rate are reported.
"""

import json
from dataclasses import dataclass

import numpy as np

from .data import PREICTAL, seizure_preictal_range
from .errors import InvalidDataset


@dataclass
class ScoredWindow:
    recording_id: str
    start_s: float
    label: int
    score: float


def roc_auc(scores, labels):
    """Area under the ROC curve via midranks; ties contribute half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise InvalidDataset("AUC needs both classes present")
    _, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    midranks = starts + (counts + 1) / 2.0
    ranks = midranks[inverse]
    rank_sum = ranks[y == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_curve(scores, labels):
    """(threshold, tpr, fpr) rows swept over the distinct scores, descending."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise InvalidDataset("ROC needs both classes present")
    rows = [(np.inf, 0.0, 0.0)]
    for thr in np.unique(s)[::-1]:
        alarmed = s >= thr
        tpr = float((alarmed & (y == 1)).sum() / n_pos)
        fpr = float((alarmed & (y == 0)).sum() / n_neg)
        rows.append((float(thr), tpr, fpr))
    return rows


@dataclass
class MetricsReport:
    auc: float
    window_sensitivity: float
    seizure_sensitivity: float
    fpr_per_hour: float  # refractory alarm rate; None when exposure is zero
    window_fpr_per_hour: float  # every alarmed interictal window counted
    fpr_defined: bool
    threshold: float
    refractory_s: float
    tp: int
    fp: int
    tn: int
    fn: int
    false_alarms: int
    seizures_predicted: int
    seizures_total: int
    interictal_hours: float

    _KEYS = ("auc", "window_sensitivity", "seizure_sensitivity", "fpr_per_hour",
             "window_fpr_per_hour", "fpr_defined", "threshold", "refractory_s",
             "tp", "fp", "tn", "fn", "false_alarms", "seizures_predicted",
             "seizures_total", "interictal_hours")

    def to_json_line(self):
        """Single-line record with stable key order."""
        return json.dumps({k: getattr(self, k) for k in self._KEYS})


def _union_length(spans):
    total = 0.0
    end = -np.inf
    for lo, hi in sorted(spans):
        if lo > end:
            total += hi - lo
            end = hi
        elif hi > end:
            total += hi - end
            end = hi
    return total


def alarm_metrics(scored, seizures_by_recording, labeling, window_s,
                  threshold=0.5, refractory_s=1800.0):
    """Window- and seizure-level metrics from scored windows.

    scored: ScoredWindow list (any number of recordings). seizures_by_recording
    maps recording id to its Seizure list; labeling supplies sph/pil so each
    seizure knows its preictal range.
    """
    by_rec = {}
    for w in scored:
        by_rec.setdefault(w.recording_id, []).append(w)

    tp = fp = tn = fn = 0
    false_alarms = 0
    exposure_s = 0.0
    predicted = 0
    total_seizures = 0

    for rec_id in sorted(by_rec):
        windows = sorted(by_rec[rec_id], key=lambda w: w.start_s)
        inter = [w for w in windows if w.label != PREICTAL]
        pre = [w for w in windows if w.label == PREICTAL]
        for w in pre:
            if w.score >= threshold:
                tp += 1
            else:
                fn += 1
        suppress_until = -np.inf
        for w in inter:
            if w.score >= threshold:
                fp += 1
                if w.start_s >= suppress_until:
                    false_alarms += 1
                    suppress_until = w.start_s + refractory_s
            else:
                tn += 1
        exposure_s += _union_length([(w.start_s, w.start_s + window_s) for w in inter])
        for sz in seizures_by_recording.get(rec_id, []):
            total_seizures += 1
            lo, hi = seizure_preictal_range(sz, labeling)
            if any(w.score >= threshold and lo <= w.start_s < hi for w in pre):
                predicted += 1

    scores = [w.score for w in scored]
    labels = [1 if w.label == PREICTAL else 0 for w in scored]
    # single-class inputs leave AUC undefined rather than failing the report
    auc = roc_auc(scores, labels) if len(set(labels)) == 2 else None
    hours = exposure_s / 3600.0
    fpr_defined = hours > 0
    report = MetricsReport(
        auc=auc,
        window_sensitivity=tp / (tp + fn) if tp + fn else 0.0,
        seizure_sensitivity=predicted / total_seizures if total_seizures else 0.0,
        fpr_per_hour=false_alarms / hours if fpr_defined else None,
        window_fpr_per_hour=fp / hours if fpr_defined else None,
        fpr_defined=fpr_defined,
        threshold=threshold,
        refractory_s=refractory_s,
        tp=tp, fp=fp, tn=tn, fn=fn,
        false_alarms=false_alarms,
        seizures_predicted=predicted,
        seizures_total=total_seizures,
        interictal_hours=hours,
    )
    return report
