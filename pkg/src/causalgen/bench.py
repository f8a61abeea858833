"""Operation-count models and measured sequence-length scaling of mixers."""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .mixers import AttentionParams, MixerKind, apply_mixer
from .svg import Series, line_chart, write_svg
from .tensor import Tensor, no_grad

# keys the mixers tally in counting mode
COUNTED = ("comparisons", "additions", "scan_additions", "divisions", "multiply_adds", "exponentials")


def scan_rounds(n_t):
    return math.ceil(math.log2(n_t)) if n_t > 1 else 0


def count_ops(kind, n_t, d, n_head=1, batch=1):
    """Closed-form operation counts for one mixer call on [batch, n_t, d].

    The counted keys match what the mixers tally.  Context mixers also
    report two reference costs for the prefix mean: the parallel-depth
    bound T*d*ceil(log2 T) and a work-efficient sequential 2*T*d.
    """
    kind = MixerKind(kind)
    c = dict.fromkeys(COUNTED, 0)
    if kind is MixerKind.ATTENTION:
        c["multiply_adds"] = 3 * n_t * d * d + 2 * n_t * n_t * d
        c["exponentials"] = n_head * n_t * n_t
        c["attention_qkv_multiply_adds"] = 3 * n_t * d * d
        c["attention_score_mix_multiply_adds"] = 2 * n_t * n_t * d
    elif kind is MixerKind.CAUSAL_PAIR_MEAN:
        c["additions"] = (n_t - 1) * d
    elif kind in (MixerKind.CAUSAL_MAX, MixerKind.CAUSAL_MIN):
        c["comparisons"] = (n_t - 1) * d
    else:
        rounds = scan_rounds(n_t)
        c["comparisons"] = (n_t - 1) * d + n_t * d
        c["scan_additions"] = d * sum(n_t - 2**k for k in range(rounds))
        c["divisions"] = n_t * d
        c["scan_additions_depth_bound"] = n_t * d * rounds
        c["scan_additions_sequential"] = 2 * n_t * d
        c["scan_depth"] = rounds
    return {k: (v if k == "scan_depth" else v * batch) for k, v in c.items()}


def total_ops(counts):
    return sum(counts[k] for k in COUNTED)


@dataclass
class ScalingRow:
    mixer: str
    T: int
    median_ms: float
    iqr_ms: float
    ops_model: int


@dataclass
class ScalingReport:
    rows: list
    slopes: dict
    d: int
    batch: int
    repetitions: int
    input_digest: str
    notes: list = field(default_factory=list)

    def median(self, mixer, n_t):
        for r in self.rows:
            if r.mixer == mixer and r.T == n_t:
                return r.median_ms
        raise KeyError((mixer, n_t))

    def to_csv(self):
        lines = ["mixer,T,median_ms,iqr_ms,ops_model"]
        lines += [f"{r.mixer},{r.T},{r.median_ms:.6f},{r.iqr_ms:.6f},{r.ops_model}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())

    def write_svg(self, path):
        series = []
        for kind in dict.fromkeys(r.mixer for r in self.rows):
            rows = [r for r in self.rows if r.mixer == kind]
            label = f"{kind} (slope {self.slopes[kind]:.2f})"
            series.append(Series(label, [r.T for r in rows], [r.median_ms for r in rows]))
        write_svg(
            path,
            line_chart(series, title=f"mixer time vs sequence length (d={self.d}, batch={self.batch})",
                       x_label="T", y_label="median ms", log_x=True, log_y=True),
        )


def loglog_slope(ts, times):
    return float(np.polyfit(np.log(ts), np.log(times), 1)[0])


def _inputs(rng, kinds, ts, d, n_head, batch, repetitions, dtype):
    params = None
    if MixerKind.ATTENTION in kinds:
        w = rng.normal(0.0, 0.02, size=(d, 3 * d)).astype(dtype)
        params = AttentionParams(Tensor(w), Tensor(np.eye(d, dtype=dtype)), n_head)
    xs = {
        (rep, n_t): rng.standard_normal((batch, n_t, d)).astype(dtype)
        for rep in range(repetitions)
        for n_t in ts
    }
    return params, xs


def _digest(params, xs):
    h = hashlib.sha256()
    if params is not None:
        h.update(params.w_qkv.data.tobytes())
    for key in sorted(xs):
        h.update(xs[key].tobytes())
    return h.hexdigest()


def run_scaling(kinds, ts, d=64, repetitions=30, seed=0, n_head=4, batch=4, warmup=3,
                dtype=np.float32, fit_points=3, max_widen=4):
    """Median wall time of each mixer per T, repetitions interleaved across kinds.

    Inputs are regenerated from ``seed`` for every repetition.  When the
    median of any cell is under 20x the timer resolution the batch is
    doubled and the measurement redone (noted in the report).
    """
    kinds = [MixerKind(k) for k in kinds]
    ts = sorted(int(t) for t in ts)
    resolution = time.get_clock_info("perf_counter").resolution
    notes = []
    for _ in range(max_widen + 1):
        rng = np.random.default_rng(seed)
        params, xs = _inputs(rng, kinds, ts, d, n_head, batch, warmup + repetitions, dtype)
        samples = {(k, t): [] for k in kinds for t in ts}
        with no_grad():
            for rep in range(warmup + repetitions):
                for n_t in ts:
                    x = Tensor(xs[(rep, n_t)])
                    for kind in kinds:
                        t0 = time.perf_counter()
                        apply_mixer(kind, x, params)
                        elapsed = time.perf_counter() - t0
                        if rep >= warmup:
                            samples[(kind, n_t)].append(elapsed)
        medians = {key: float(np.median(v)) for key, v in samples.items()}
        if min(medians.values()) >= 20 * resolution:
            break
        notes.append(f"timer resolution too coarse at batch={batch}; widened to {batch * 2}")
        batch *= 2

    rows = []
    for kind in kinds:
        for n_t in ts:
            v = np.asarray(samples[(kind, n_t)]) * 1e3
            q1, q3 = np.percentile(v, [25, 75])
            ops = total_ops(count_ops(kind, n_t, d, n_head, batch))
            rows.append(ScalingRow(kind.value, n_t, float(np.median(v)), float(q3 - q1), ops))
    fit = ts[-fit_points:]
    slopes = {
        kind.value: loglog_slope(fit, [medians[(kind, t)] for t in fit]) for kind in kinds
    }
    # digest of the data actually measured, regenerated from the seed
    params, xs = _inputs(np.random.default_rng(seed), kinds, ts, d, n_head, batch, warmup + repetitions, dtype)
    return ScalingReport(rows, slopes, d, batch, repetitions, _digest(params, xs), notes)
