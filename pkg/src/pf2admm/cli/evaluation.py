"""Metric rows shared by ``evaluate`` and ``benchmark``."""

from __future__ import annotations

import csv
import math

import numpy as np

from .. import metrics
from ..tensor import relative_sse

# Stable column order of metrics.csv; new columns are only ever appended.
METRIC_COLUMNS = ["model", "fms", "fms_A", "fms_B", "fms_C", "rel_sse", "triple_cosine", "degenerate"]
SIM_COLUMNS = ["k", "r", "cwsnr_db", "sim"]


def model_metrics(est, truth=None, data=None):
    out = {}
    if truth is not None:
        match = metrics.fms(truth, est)
        out["fms"] = match.fms
        out["permutation"] = match.permutation.tolist()
        for mode in "ABC":
            out[f"fms_{mode}"] = metrics.fms_single_mode(truth, est, mode).fms
    if data is not None:
        out["rel_sse"] = relative_sse(est, data)
    if est.rank > 1 and est.shape[2] > 1:
        tc = metrics.triple_cosine(est)
        out["triple_cosine"] = tc
        out["degenerate"] = bool(tc < metrics.DEGENERACY_THRESHOLD)
    else:
        out["triple_cosine"] = 1.0
        out["degenerate"] = False
    return out


def sim_cwsnr_rows(est, truth, noise, permutation=None):
    snr = metrics.cwsnr(truth, noise)
    sim = metrics.cosine_sim_B(truth, est, permutation)
    rows = []
    K, R = snr.shape
    for k in range(K):
        for r in range(R):
            rows.append({"k": k, "r": r, "cwsnr_db": float(snr[k, r]), "sim": float(sim[k, r])})
    return rows


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    if isinstance(value, (np.floating, np.integer)):
        return _cell(value.item())
    return str(value)


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
