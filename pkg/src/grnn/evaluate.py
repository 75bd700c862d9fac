"""Error metrics, naive baselines and the joint-vs-separate timing harness."""

from __future__ import annotations

import time
import tracemalloc
from dataclasses import dataclass, field

import numpy as np

from grnn import model
from grnn.errors import ContractError, ParameterError
from grnn.graph import build_propagation_matrix, chain_road_network, transform


def _errors(truth, prediction) -> np.ndarray:
    x = np.asarray(truth, dtype=np.float64)
    o = np.asarray(prediction, dtype=np.float64)
    if x.shape != o.shape:
        raise ContractError(f"truth {x.shape} and prediction {o.shape} differ in shape")
    if x.size == 0:
        raise ContractError("nothing to evaluate")
    return x - o


def mse(truth, prediction) -> float:
    e = _errors(truth, prediction)
    return float(np.mean(e * e))


def vd(truth, prediction) -> float:
    """Population variance of the errors."""
    e = _errors(truth, prediction)
    # shift by one sample first: exact zero for constant errors
    e = e - e.flat[0]
    return float(np.mean((e - e.mean()) ** 2))


@dataclass
class EvalReport:
    """Metrics in original units, over an ``n x T_eval`` block."""

    mse: float
    vd: float
    per_segment_mse: np.ndarray
    n: int
    T_eval: int
    config: dict = field(default_factory=dict)

    @classmethod
    def from_panels(cls, truth, prediction, config: dict | None = None) -> "EvalReport":
        e = _errors(truth, prediction)
        if e.ndim != 2:
            raise ContractError("expected n x T panels")
        return cls(
            mse=mse(truth, prediction),
            vd=vd(truth, prediction),
            per_segment_mse=np.mean(e * e, axis=1),
            n=e.shape[0],
            T_eval=e.shape[1],
            config=dict(config or {}),
        )

    def to_dict(self) -> dict:
        return {
            "mse": self.mse,
            "vd": self.vd,
            "mean_error_sq": self.mse - self.vd,
            "n": self.n,
            "T_eval": self.T_eval,
            "units": "original",
            "config": self.config,
        }

    def segment_table(self, segments) -> str:
        lines = ["segment_id,mse"]
        lines += [f"{s},{v!r}" for s, v in zip(segments, self.per_segment_mse.tolist())]
        return "\n".join(lines) + "\n"


def historical_average(panel, period: int) -> np.ndarray:
    """Mean of all earlier observations at the same time of day.

    Where no earlier same-offset value exists the node's mean over all
    earlier intervals is used; interval 0 has no history and echoes the
    first observation.
    """
    if period <= 0:
        raise ParameterError("period must be positive")
    x = np.asarray(getattr(panel, "values", panel), dtype=np.float64)
    n, L = x.shape
    pred = np.empty_like(x)
    same_sum = np.zeros((n, period))
    same_cnt = np.zeros(period)
    run_sum = np.zeros(n)
    for t in range(L):
        k = t % period
        if same_cnt[k] > 0:
            pred[:, t] = same_sum[:, k] / same_cnt[k]
        elif t > 0:
            pred[:, t] = run_sum / t
        else:
            pred[:, t] = x[:, 0]
        same_sum[:, k] += x[:, t]
        same_cnt[k] += 1
        run_sum += x[:, t]
    return pred


def persistence(panel) -> np.ndarray:
    """Last observed value; interval 0 echoes itself."""
    x = np.asarray(getattr(panel, "values", panel), dtype=np.float64)
    pred = np.empty_like(x)
    pred[:, 0] = x[:, 0]
    pred[:, 1:] = x[:, :-1]
    return pred


# --- complexity harness -----------------------------------------------------

def weight_count(D: int, d: int = 1) -> int:
    """Parameters shared by every node: three D x D, three D x d, and w_o."""
    return 3 * D * D + 3 * D * d + D


def joint_param_count(n: int, D: int, d: int = 1) -> int:
    """One model over ``n`` nodes: shared weights, per-node biases, state."""
    return weight_count(D, d) + (2 * D + 1) * n + D * n


def separate_param_count(n: int, D: int, d: int = 1) -> int:
    return n * weight_count(D, d) + n * (2 * D + 1 + D)


@dataclass
class BenchRow:
    n: int
    joint_ms_per_step: float
    separate_ms_per_step: float
    joint_params: int
    separate_params: int
    joint_peak_bytes: int

    @property
    def speedup(self) -> float:
        return self.separate_ms_per_step / self.joint_ms_per_step


def _train_step_timer(n: int, D: int, T: int, seed: int):
    """Closure doing one forward/backward/update on an ``n``-node chain."""
    link = transform(chain_road_network(n))
    A = build_propagation_matrix(link, 0.5)
    rng = np.random.default_rng(seed)
    state = {"p": model.init_params(D, n, seed=seed)}
    H0 = model.init_hidden(D, n, seed)
    X = rng.uniform(0.05, 0.95, size=(T + 1, n))

    def step():
        p = state["p"]
        tr = model.forward(p, H0, X[:-1], A)
        g = model.backward(tr, X[1:], p, A)
        state["p"] = model.sgd_update(p, g, 0.01)

    return step, state


def _time(fn, steps: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    t0 = time.perf_counter()
    for _ in range(steps):
        fn()
    return (time.perf_counter() - t0) / steps


def complexity_bench(sizes, D: int = 16, steps: int = 5, T: int = 8, warmup: int = 1, seed: int = 0) -> list[BenchRow]:
    """Time one joint ``n``-node model against ``n`` separate 1-node models.

    ``separate_ms_per_step`` is the cost of advancing all ``n`` single-node
    models by one training step each.
    """
    rows = []
    for n in sizes:
        joint, jstate = _train_step_timer(n, D, T, seed)
        t_joint = _time(joint, steps, warmup)
        tracemalloc.start()
        joint()
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()

        singles = [_train_step_timer(1, D, T, seed + k) for k in range(n)]

        def run_all():
            for s, _ in singles:
                s()

        t_sep = _time(run_all, steps, warmup)
        rows.append(
            BenchRow(
                n=n,
                joint_ms_per_step=1e3 * t_joint,
                separate_ms_per_step=1e3 * t_sep,
                joint_params=jstate["p"].count() + D * n,
                separate_params=sum(st["p"].count() + D for _, st in singles),
                joint_peak_bytes=int(peak),
            )
        )
    return rows


def bench_table(rows: list[BenchRow]) -> str:
    lines = ["n,wall_ms_per_step,param_count,peak_bytes,separate_wall_ms_per_step,separate_param_count"]
    for r in rows:
        lines.append(
            f"{r.n},{r.joint_ms_per_step:.4f},{r.joint_params},{r.joint_peak_bytes},"
            f"{r.separate_ms_per_step:.4f},{r.separate_params}"
        )
    return "\n".join(lines) + "\n"
