"""Evaluation metrics over the takeover window and cohort statistics.

Four metrics per run: takeover time, and mean/SD of |T_H|, |theta_sw|
(deg) and |yaw rate| (deg/s) over [t0, t0 + takeover_time], after a
centered moving-average filter.  Cohort aggregation pairs the two
conditions per participant; takeover time is compared with a paired
t-test on the values, the signal metrics with paired t-tests on the
per-participant SDs (consistency of control).  p-values come from the
regularized incomplete beta function, two-sided, n-1 degrees of freedom.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

SIGNIFICANCE_LEVEL = 0.01
FILTER_WINDOW = 5  # samples at the control rate (0.1 s at 50 Hz)


class DegenerateTTestError(ValueError):
    """Differences have zero variance but a nonzero mean."""


def moving_average(series, window: int) -> np.ndarray:
    """Centered moving average; the window shrinks symmetrically at the
    edges so the output length equals the input length."""
    x = np.asarray(series, dtype=float)
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    n = x.size
    if window > n:
        raise ValueError(f"window {window} longer than series of {n}")
    half = window // 2
    out = np.empty(n)
    for i in range(n):
        h = min(half, i, n - 1 - i)
        out[i] = x[i - h:i + h + 1].mean()
    return out


# --- Student-t p-values via the regularized incomplete beta function ----

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        de = d * c
        h *= de
        if abs(de - 1.0) < 1e-15:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must be in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, dof: int) -> float:
    """Two-sided tail probability of Student's t."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if t == 0.0:
        return 1.0
    return betainc_reg(dof / 2.0, 0.5, dof / (dof + t * t))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    significant: bool
    n: int
    mean_diff: float


def paired_t_test(baseline, proposed,
                  level: float = SIGNIFICANCE_LEVEL) -> TTestResult:
    """Classical two-sided paired t-test (pairing by position)."""
    a = np.asarray(baseline, dtype=float)
    b = np.asarray(proposed, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("samples must be equal-length vectors")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs n >= 2")
    d = a - b
    mean_d = float(d.mean())
    sd_d = float(d.std(ddof=1))
    if sd_d == 0.0:
        if mean_d == 0.0:
            return TTestResult(t=0.0, p=1.0, significant=False, n=n,
                               mean_diff=0.0)
        raise DegenerateTTestError(
            "zero variance of differences with nonzero mean")
    t = mean_d / (sd_d / math.sqrt(n))
    p = t_two_sided_p(t, n - 1)
    return TTestResult(t=t, p=p, significant=p < level, n=n,
                       mean_diff=mean_d)


# --- per-run metrics ----------------------------------------------------

RAD2DEG = 180.0 / math.pi


@dataclass(frozen=True)
class RunMetrics:
    takeover_time: float          # nan when the run never completed
    mean_t_h: float
    sd_t_h: float
    mean_theta_deg: float
    sd_theta_deg: float
    mean_yaw_deg_s: float
    sd_yaw_deg_s: float
    window: tuple[float, float]
    failed: bool = False


def run_metrics(record) -> RunMetrics:
    """Metrics for one RunRecord over its takeover window.

    Without a completion event the metrics cover the full duration and
    the result is flagged failed with takeover_time = nan.
    """
    t = np.asarray(record.t)
    t0 = record.events["tor"]
    entry = record.events.get("completion_entry")
    failed = bool(getattr(record, "failed", False)) or entry is None
    if entry is not None:
        takeover_time = entry - t0
        t_end = entry
    else:
        takeover_time = math.nan
        t_end = t[-1]
    mask = (t >= t0 - 1e-9) & (t <= t_end + 1e-9)
    if not mask.any():
        raise ValueError("takeover window contains no samples")

    def stats(series, scale=1.0):
        filt = moving_average(np.asarray(series) * scale, FILTER_WINDOW)
        w = np.abs(filt[mask])
        return float(w.mean()), float(w.std())

    m_th, s_th = stats(record.T_H)
    m_sw, s_sw = stats(record.theta_sw, RAD2DEG)
    m_yaw, s_yaw = stats(record.psi_dot, RAD2DEG)
    return RunMetrics(takeover_time=takeover_time,
                      mean_t_h=m_th, sd_t_h=s_th,
                      mean_theta_deg=m_sw, sd_theta_deg=s_sw,
                      mean_yaw_deg_s=m_yaw, sd_yaw_deg_s=s_yaw,
                      window=(float(t0), float(t_end)), failed=failed)


# --- cohort aggregation -------------------------------------------------

CONDITION_BASELINE = "baseline"
CONDITION_PROPOSED = "proposed"

METRIC_FIELDS = {
    "t_h": ("mean_t_h", "sd_t_h"),
    "theta_sw": ("mean_theta_deg", "sd_theta_deg"),
    "yaw_rate": ("mean_yaw_deg_s", "sd_yaw_deg_s"),
}


@dataclass(frozen=True)
class CohortRow:
    participant: int
    task: str
    condition: str
    metrics: RunMetrics
    failure_reason: str = ""


def five_number(values) -> dict:
    """min, Q1, median, Q3, max with linearly interpolated quartiles."""
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25.0, 50.0, 75.0])
    return {"min": float(v.min()), "q1": float(q1), "median": float(med),
            "q3": float(q3), "max": float(v.max())}


def _test_entry(baseline_vals, proposed_vals, level) -> dict:
    try:
        r = paired_t_test(baseline_vals, proposed_vals, level)
        return {"t": r.t, "p": r.p, "significant": r.significant,
                "degenerate": False}
    except DegenerateTTestError:
        return {"t": None, "p": None, "significant": None, "degenerate": True}


def cohort_stats(rows: list[CohortRow],
                 level: float = SIGNIFICANCE_LEVEL) -> tuple[dict, list]:
    """Aggregate paired per-run metrics into cohort statistics.

    Returns (stats dict, boxplot rows).  Every participant must appear in
    both conditions of each task; failed runs drop the whole pair from
    the tests and are listed under ``failures``.
    """
    tasks = sorted({r.task for r in rows})
    failures = [
        {"participant": r.participant, "task": r.task,
         "condition": r.condition, "reason": r.failure_reason or "incomplete"}
        for r in rows if r.metrics.failed
    ]
    stats: dict = {"failures": failures, "tasks": {}}
    box_rows: list = []
    for task in tasks:
        by_cond: dict[str, dict[int, RunMetrics]] = {}
        for r in rows:
            if r.task == task:
                by_cond.setdefault(r.condition, {})[r.participant] = r.metrics
        if set(by_cond) != {CONDITION_BASELINE, CONDITION_PROPOSED}:
            raise ValueError(f"task {task}: need both conditions")
        base, prop = by_cond[CONDITION_BASELINE], by_cond[CONDITION_PROPOSED]
        for pid in sorted(set(base) | set(prop)):
            if pid not in base or pid not in prop:
                raise ValueError(
                    f"participant {pid} is unpaired for task {task}")
        pids = sorted(pid for pid in base
                      if not (base[pid].failed or prop[pid].failed))
        if not pids:
            raise ValueError(f"task {task}: no complete pairs")
        entry: dict = {"n_pairs": len(pids)}

        tt_b = np.array([base[p].takeover_time for p in pids])
        tt_p = np.array([prop[p].takeover_time for p in pids])
        tt = {
            "baseline_mean": float(tt_b.mean()),
            "baseline_sd": float(tt_b.std(ddof=1)) if len(pids) > 1 else 0.0,
            "proposed_mean": float(tt_p.mean()),
            "proposed_sd": float(tt_p.std(ddof=1)) if len(pids) > 1 else 0.0,
        }
        tt["mean_reduction_pct"] = 100.0 * (1.0 - tt["proposed_mean"]
                                            / tt["baseline_mean"])
        if len(pids) >= 2:
            tt.update(_test_entry(tt_b, tt_p, level))
        else:
            tt.update({"t": None, "p": None, "significant": None,
                       "degenerate": None, "note": "n < 2, test skipped"})
        entry["takeover_time"] = tt
        box_rows.append((task, CONDITION_BASELINE, "takeover_time",
                         five_number(tt_b)))
        box_rows.append((task, CONDITION_PROPOSED, "takeover_time",
                         five_number(tt_p)))

        for name, (mean_f, sd_f) in METRIC_FIELDS.items():
            mb = np.array([getattr(base[p], mean_f) for p in pids])
            mp = np.array([getattr(prop[p], mean_f) for p in pids])
            sb = np.array([getattr(base[p], sd_f) for p in pids])
            sp = np.array([getattr(prop[p], sd_f) for p in pids])
            m: dict = {
                "baseline_mean": float(mb.mean()),
                "baseline_sd": float(mb.std(ddof=1)) if len(pids) > 1 else 0.0,
                "proposed_mean": float(mp.mean()),
                "proposed_sd": float(mp.std(ddof=1)) if len(pids) > 1 else 0.0,
                "sd_baseline_mean": float(sb.mean()),
                "sd_proposed_mean": float(sp.mean()),
                "sd_reduced_count": int(np.sum(sp < sb)),
            }
            if len(pids) >= 2:
                test = _test_entry(sb, sp, level)
                m.update({"t_sd": test["t"], "p_sd": test["p"],
                          "significant_sd": test["significant"],
                          "degenerate_sd": test["degenerate"]})
            else:
                m.update({"t_sd": None, "p_sd": None, "significant_sd": None,
                          "degenerate_sd": None, "note": "n < 2, test skipped"})
            entry[name] = m
            box_rows.append((task, CONDITION_BASELINE, name, five_number(mb)))
            box_rows.append((task, CONDITION_PROPOSED, name, five_number(mp)))
        stats["tasks"][task] = entry
    stats["n"] = max(e["n_pairs"] for e in stats["tasks"].values())
    return stats, box_rows


# --- persistence --------------------------------------------------------

SUMMARY_COLUMNS = [
    "participant", "task", "condition", "takeover_time",
    "mean_T_H", "sd_T_H", "mean_theta_sw_deg", "sd_theta_sw_deg",
    "mean_yaw_deg_s", "sd_yaw_deg_s", "failed",
]


def write_summary_csv(rows: list[CohortRow], path) -> None:
    ordered = sorted(rows, key=lambda r: (r.task, r.participant, r.condition))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for r in ordered:
            m = r.metrics
            w.writerow([r.participant, r.task, r.condition,
                        repr(m.takeover_time), repr(m.mean_t_h),
                        repr(m.sd_t_h), repr(m.mean_theta_deg),
                        repr(m.sd_theta_deg), repr(m.mean_yaw_deg_s),
                        repr(m.sd_yaw_deg_s), int(m.failed)])


def write_stats_json(stats: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_boxplot_csv(box_rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "condition", "metric",
                    "min", "q1", "median", "q3", "max"])
        for task, cond, metric, f in box_rows:
            w.writerow([task, cond, metric, repr(f["min"]), repr(f["q1"]),
                        repr(f["median"]), repr(f["q3"]), repr(f["max"])])
