"""Condition panels: ingestion, min-max scaling, and a synthetic simulator."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from grnn.errors import ParameterError, ValidationError
from grnn.graph import LinkageNetwork

MAX_FILL_GAP = 2


@dataclass(frozen=True)
class ConditionPanel:
    """``values[i, t]``: condition of node ``i`` in interval ``t``."""

    values: np.ndarray
    segments: tuple[str, ...]
    interval_minutes: int = 10

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != len(self.segments):
            raise ValidationError(
                f"panel shape {self.values.shape} does not match {len(self.segments)} segments"
            )
        if self.values.shape[1] < 1:
            raise ValidationError("panel has no intervals")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("panel has missing or non-finite entries")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def L(self) -> int:
        return self.values.shape[1]

    def intervals_per_day(self) -> int:
        return (24 * 60) // self.interval_minutes


def _fill_gaps(row: np.ndarray) -> int:
    """Linear-interpolate NaN runs in place; return the longest run."""
    missing = np.isnan(row)
    if not missing.any():
        return 0
    longest, run = 0, 0
    for m in missing:
        run = run + 1 if m else 0
        longest = max(longest, run)
    if longest > MAX_FILL_GAP or missing.all():
        return longest
    idx = np.arange(row.size)
    # np.interp holds the edge values flat, which covers leading/trailing gaps
    row[missing] = np.interp(idx[missing], idx[~missing], row[~missing])
    return longest


def load_panel(source, link: LinkageNetwork, interval_minutes: int | None = None) -> ConditionPanel:
    """Read ``segment_id,interval_index,value`` records into a dense panel.

    ``source`` is a path or an iterable of text lines.  A leading
    ``# interval_minutes=N`` comment sets the interval length.  Runs of up
    to two missing intervals are interpolated; longer runs are an error.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            lines = fh.read().splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in source]
    minutes = interval_minutes
    body = []
    for ln in lines:
        if ln.startswith("#"):
            m = re.search(r"interval_minutes\s*=\s*(\d+)", ln)
            if m and minutes is None:
                minutes = int(m.group(1))
        elif ln.strip():
            body.append(ln)
    reader = csv.DictReader(body)
    if tuple(reader.fieldnames or ()) != ("segment_id", "interval_index", "value"):
        raise ValidationError(f"panel header must be segment_id,interval_index,value; got {reader.fieldnames}")

    recs = []
    for r in reader:
        sid = r["segment_id"]
        if sid not in link.node_index:
            raise ValidationError(f"unknown segment_id {sid!r} in panel")
        try:
            recs.append((link.node_index[sid], int(r["interval_index"]), float(r["value"])))
        except ValueError as exc:
            raise ValidationError(f"malformed panel record {r}: {exc}") from None
    if not recs:
        raise ValidationError("panel has no records")

    t0 = min(t for _, t, _ in recs)
    L = max(t for _, t, _ in recs) - t0 + 1
    values = np.full((link.n, L), np.nan)
    for i, t, v in recs:
        values[i, t - t0] = v

    bad = []
    for i in range(link.n):
        if _fill_gaps(values[i]) > MAX_FILL_GAP or np.isnan(values[i]).any():
            bad.append(link.nodes[i])
    if bad:
        raise ValidationError(f"gaps longer than {MAX_FILL_GAP} intervals in segments: {', '.join(bad)}")
    return ConditionPanel(values, link.nodes, minutes or 10)


def format_panel(panel: ConditionPanel) -> str:
    buf = io.StringIO()
    buf.write(f"# interval_minutes={panel.interval_minutes}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["segment_id", "interval_index", "value"])
    for i, sid in enumerate(panel.segments):
        for t in range(panel.L):
            w.writerow([sid, t, repr(float(panel.values[i, t]))])
    return buf.getvalue()


def write_panel(panel: ConditionPanel, path: str | Path):
    Path(path).write_text(format_panel(panel))


class Normalizer:
    """Affine map of the training range ``[lo, hi]`` onto ``[0.05, 0.95]``.

    Values outside the training range can map outside ``(0, 1)``; those are
    clipped to ``[1e-6, 1 - 1e-6]`` and counted in ``clamped``.
    """

    target = (0.05, 0.95)
    margin = 1e-6

    def __init__(self, lo: float, hi: float):
        if not hi > lo:
            raise ValidationError(f"cannot normalize a constant series (min={lo}, max={hi})")
        self.lo, self.hi = float(lo), float(hi)
        self.clamped = 0

    @classmethod
    def fit(cls, panel: ConditionPanel | np.ndarray, train_fraction: float = 0.75) -> "Normalizer":
        values = panel.values if isinstance(panel, ConditionPanel) else np.asarray(panel)
        n_train = train_length(values.shape[1], train_fraction)
        if n_train < 1:
            raise ParameterError("training split is empty")
        train = values[:, :n_train]
        return cls(train.min(), train.max())

    def scale(self, x):
        a, b = self.target
        return a + (b - a) * (np.asarray(x, dtype=np.float64) - self.lo) / (self.hi - self.lo)

    def apply(self, x):
        y = self.scale(x)
        out = np.clip(y, self.margin, 1.0 - self.margin)
        self.clamped += int(np.count_nonzero(out != y))
        return out

    def invert(self, y):
        a, b = self.target
        return self.lo + (np.asarray(y, dtype=np.float64) - a) * (self.hi - self.lo) / (b - a)

    def to_dict(self) -> dict:
        return {"min": self.lo, "max": self.hi, "target": list(self.target)}


def train_length(L: int, fraction: float) -> int:
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError(f"train fraction must lie in [0, 1], got {fraction}")
    return int(np.floor(fraction * L + 1e-9))


@dataclass(frozen=True)
class SimParams:
    """Knobs of :func:`simulate_diffusion`.

    ``persistence`` < 1 pulls each node back toward its daily profile so
    the panel stays stationary; ``persistence = 1`` gives pure upstream
    mixing of the raw levels.
    """

    beta: float = 0.6
    noise: float = 4.0
    amplitude: float = 5.0
    persistence: float = 0.9
    base: float = 40.0
    base_spread: float = 0.0
    init_spread: float = 0.0
    clip_low: float = 1.0
    clip_high: float = 120.0
    interval_minutes: int = 10
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def seasonal_profile(L: int, amplitude: float, interval_minutes: int = 10) -> np.ndarray:
    """Daily cycle: slow-down at the morning and evening peaks."""
    per_day = (24 * 60) / interval_minutes
    phase = 2 * np.pi * np.arange(L) / per_day
    return -amplitude * (0.6 * np.sin(phase - np.pi / 2) ** 2 + 0.4 * np.cos(2 * phase))


def simulate_diffusion(link: LinkageNetwork, L: int, params: SimParams = SimParams()) -> ConditionPanel:
    """Synthetic speeds driven by upstream segments.

    With ``d`` the deviation from each node's daily profile
    ``base_j + s(t)``, every step does::

        d_j(t+1) = p * ((1-beta) d_j(t) + beta * mean_{i upstream of j} d_i(t)) + noise

    A node without upstream segments mixes with itself.  Levels are clipped
    to ``[clip_low, clip_high]``.
    """
    if L < 1:
        raise ParameterError("need at least one interval")
    if not 0.0 <= params.beta <= 1.0:
        raise ParameterError("beta must lie in [0, 1]")
    rng = np.random.default_rng(params.seed)
    n = link.n
    base = params.base + params.base_spread * rng.uniform(-1.0, 1.0, size=n)
    s = seasonal_profile(L, params.amplitude, params.interval_minutes)

    adj = link.adjacency.astype(np.float64)
    indeg = adj.sum(axis=0)
    # column j of mix averages the upstream of j; sources fall back to themselves
    mix = np.where(indeg > 0, adj / np.maximum(indeg, 1.0), np.eye(n))

    x = np.empty((n, L))
    x[:, 0] = base + s[0] + params.init_spread * rng.standard_normal(n)
    x[:, 0] = np.clip(x[:, 0], params.clip_low, params.clip_high)
    for t in range(L - 1):
        dev = x[:, t] - base - s[t]
        upstream = dev @ mix
        nxt = params.persistence * ((1 - params.beta) * dev + params.beta * upstream)
        if params.noise > 0:
            nxt = nxt + params.noise * rng.standard_normal(n)
        x[:, t + 1] = np.clip(base + s[t + 1] + nxt, params.clip_low, params.clip_high)
    return ConditionPanel(x, link.nodes, params.interval_minutes)
