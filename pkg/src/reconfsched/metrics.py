"""Run statistics: queue averages, duty cycle, schedule durations, stability verdicts."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

MAX_SAMPLES = 10_000
STABLE_RATIO = 1.2
UNSTABLE_RATIO = 3.0


def sample_stride(horizon: int) -> int:
    return max(1, -(-horizon // MAX_SAMPLES))


def window_reconfigs(reconfig_log, lo: int, hi: int) -> np.ndarray:
    log = np.asarray(reconfig_log, dtype=np.int64)
    return log[(log >= lo) & (log < hi)]


def duty_cycle(reconfig_log, delta_r: int, window: tuple[int, int]) -> float:
    """``1 - delta_r / E[T]`` with ``E[T]`` the mean gap between reconfigurations in ``window``."""
    times = window_reconfigs(reconfig_log, *window)
    if len(times) < 2:
        return 1.0
    return float(1.0 - delta_r / np.diff(times).mean())


@dataclass
class RunMetrics:
    n: int
    horizon: int
    warmup: int
    mean_queue_length: float
    mean_total_queue: float
    duty_cycle: float
    reconfig_count: int
    reconfig_total: int
    drop_count: int
    arrivals: int
    departures: int
    initial_total: int
    final_total: int
    first_half_mean: float
    second_half_mean: float
    duration_mean: float
    duration_median: float
    duration_p95: float
    effective_load: float
    blank_slots: int
    fallbacks: int = 0
    samples: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64), repr=False)

    @property
    def verdict(self) -> str:
        return stability_verdict(self)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("samples")
        d["verdict"] = self.verdict
        return d


def _durations(reconfig_log, lo, hi):
    times = window_reconfigs(reconfig_log, lo, hi)
    if len(times) < 2:
        return float("nan"), float("nan"), float("nan")
    gaps = np.diff(times)
    return float(gaps.mean()), float(np.median(gaps)), float(np.percentile(gaps, 95))


def build_metrics(*, n, horizon, warmup, delta_r, window_sum, first_sum, second_sum, reconfig_log,
                  reconfig_total, drops, arrivals, departures, initial_total, final_total,
                  effective_load, blank_slots, fallbacks=0, samples=None) -> RunMetrics:
    """Assemble metrics from accumulated sums (the streaming path)."""
    count = horizon - warmup
    mid = warmup + count // 2
    mean_total = window_sum / count
    d_mean, d_median, d_p95 = _durations(reconfig_log, warmup, horizon)
    return RunMetrics(
        n=n,
        horizon=horizon,
        warmup=warmup,
        mean_queue_length=mean_total / (n * (n - 1)),
        mean_total_queue=mean_total,
        duty_cycle=duty_cycle(reconfig_log, delta_r, (warmup, horizon)),
        reconfig_count=len(window_reconfigs(reconfig_log, warmup, horizon)),
        reconfig_total=int(reconfig_total),
        drop_count=int(drops),
        arrivals=int(arrivals),
        departures=int(departures),
        initial_total=int(initial_total),
        final_total=int(final_total),
        first_half_mean=first_sum / (mid - warmup) if mid > warmup else float("nan"),
        second_half_mean=second_sum / (horizon - mid),
        duration_mean=d_mean,
        duration_median=d_median,
        duration_p95=d_p95,
        effective_load=float(effective_load),
        blank_slots=int(blank_slots),
        fallbacks=int(fallbacks),
        samples=np.zeros((0, 2), dtype=np.int64) if samples is None else samples,
    )


def summarize(total_queue, reconfig_log, *, n, warmup, delta_r, effective_load=0.0, drops=0,
              arrivals=0, departures=0, final_total=None, blank=None, fallbacks=0) -> RunMetrics:
    """Metrics from a per-slot series of total queue length (the trace path).

    ``total_queue[t]`` is the backlog at the start of slot ``t``.
    """
    total = np.asarray(total_queue, dtype=np.int64)
    horizon = len(total)
    count = horizon - warmup
    mid = warmup + count // 2
    stride = sample_stride(horizon)
    idx = np.arange(0, horizon, stride)
    samples = np.stack([idx, total[idx]], axis=1) if horizon else np.zeros((0, 2), dtype=np.int64)
    return build_metrics(
        n=n, horizon=horizon, warmup=warmup, delta_r=delta_r,
        window_sum=int(total[warmup:].sum()),
        first_sum=int(total[warmup:mid].sum()),
        second_sum=int(total[mid:].sum()),
        reconfig_log=reconfig_log,
        reconfig_total=len(reconfig_log),
        drops=drops, arrivals=arrivals, departures=departures,
        initial_total=int(total[0]) if horizon else 0,
        final_total=int(total[-1]) if final_total is None else final_total,
        effective_load=effective_load,
        blank_slots=0 if blank is None else int(np.count_nonzero(np.asarray(blank)[warmup:])),
        fallbacks=fallbacks,
        samples=samples,
    )


def stability_verdict(m: RunMetrics, stable: float = STABLE_RATIO, unstable: float = UNSTABLE_RATIO) -> str:
    """Finite-horizon stability proxy from the ratio of second- to first-half mean backlog."""
    first, second = m.first_half_mean, m.second_half_mean
    if second <= stable * first:
        return "stable"
    if second >= unstable * first:
        return "unstable"
    return "suspect"


def gap_by_queue_quartile(total_queue, reconfig_log, lo: int = 0, hi: int | None = None) -> tuple[float, float]:
    """Median reconfiguration gap seen by slots in the bottom and top backlog quartiles.

    Each slot inside a completed gap ``[t_k, t_{k+1})`` is labelled with that
    gap's length; the slots are then split by the quartiles of the backlog
    over the same slots. Returns ``(median_gap_bottom, median_gap_top)``.
    """
    total = np.asarray(total_queue)
    hi = len(total) if hi is None else hi
    times = window_reconfigs(reconfig_log, lo, hi)
    if len(times) < 2:
        return float("nan"), float("nan")
    gaps = np.diff(times)
    slots = np.arange(times[0], times[-1])
    gap_of_slot = np.repeat(gaps, gaps)
    backlog = total[slots]
    q1, q3 = np.percentile(backlog, [25, 75])
    bottom = gap_of_slot[backlog <= q1]
    top = gap_of_slot[backlog >= q3]
    return float(np.median(bottom)), float(np.median(top))
