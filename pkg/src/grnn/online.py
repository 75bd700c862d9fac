"""Online train-and-predict loop.

Each arrival ``x(t)``:

1. slide the window (advancing the stored start state by one step once the
   window is full),
2. run the window forward from the start state and emit ``o(t+1)``,
3. train ``epochs`` rounds of truncated BPTT on the window, where input
   ``k`` is used to predict observation ``k + 1``.

The prediction is always made before this arrival's training touches the
parameters.
"""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from grnn import model
from grnn.errors import ContractError, NumericError, ParameterError
from grnn.graph import PropagationMatrix


@dataclass(frozen=True)
class TrainConfig:
    T: int = 48
    D: int = 16
    epochs: int = 10
    alpha: float = 0.5
    lr: float = 0.01
    seed: int = 0
    carry_hidden: bool = True
    init_scale: float = 0.1
    gate_bias: float = 0.0

    def __post_init__(self):
        if self.T < 1:
            raise ParameterError("window T must be >= 1")
        if self.D < 1:
            raise ParameterError("hidden size D must be >= 1")
        if self.epochs < 0:
            raise ParameterError("epochs must be >= 0")
        if not self.lr > 0:
            raise ParameterError("learning rate must be positive")
        if self.alpha < 0:
            raise ParameterError("alpha must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunState:
    """Parameters, the hidden state at the window start, and the window.

    ``H_time`` is the interval index of ``window[0]``: ``H`` is the state
    that will consume it.
    """

    params: model.Params
    H: np.ndarray
    H_time: int
    window: deque = field(default_factory=deque)
    last_loss: float = float("nan")

    @property
    def t(self) -> int:
        """Number of observations seen so far."""
        return self.H_time + len(self.window)


def initial_state(cfg: TrainConfig, n: int) -> RunState:
    p = model.init_params(cfg.D, n, 1, cfg.seed, cfg.init_scale)
    p.B_z += cfg.gate_bias
    return RunState(
        params=p,
        H=model.init_hidden(cfg.D, n, cfg.seed),
        H_time=0,
    )


def step(state: RunState, observation, cfg: TrainConfig, A_prime: PropagationMatrix) -> tuple[np.ndarray, RunState]:
    """Consume one normalized observation; return ``o(t+1)`` and the new state.

    ``state`` is not modified.
    """
    n = state.params.n
    x = np.asarray(observation, dtype=np.float64).reshape(-1)
    if x.shape != (n,):
        raise ContractError(f"observation has {x.size} entries, expected {n}")
    if not np.all(np.isfinite(x)):
        raise NumericError("observation contains non-finite entries")

    params = state.params
    window = deque(state.window)
    H, H_time = state.H, state.H_time
    if len(window) == cfg.T:
        oldest = window.popleft()
        if cfg.carry_hidden:
            H, _ = model.propagate_step(params, H, oldest, A_prime)
        else:
            H = model.init_hidden(cfg.D, n, cfg.seed)
        H_time += 1
    window.append(x)
    inputs = np.array(window)

    trace = model.forward(params, H, inputs, A_prime)
    prediction = trace.o[-1].copy()

    last_loss = float("nan")
    m = len(window)
    if m >= 2 and cfg.epochs > 0:
        targets = inputs[1:]
        trace.steps.pop()
        trace.o = trace.o[:-1]
        for epoch in range(cfg.epochs):
            if epoch > 0:
                trace = model.forward(params, H, inputs[:-1], A_prime)
            cur = model.loss(trace.o, targets)
            if epoch == 0:
                last_loss = cur
            grads = model.backward(trace, targets, params, A_prime)
            params = model.sgd_update(params, grads, cfg.lr)

    return prediction, RunState(params, H, H_time, window, last_loss)


class DivergenceMonitor:
    """Flags a run whose loss is non-finite or stays above ``factor`` times
    the first recorded loss for ``patience`` consecutive arrivals."""

    def __init__(self, factor: float = 10.0, patience: int = 3):
        self.factor, self.patience = factor, patience
        self.initial = None
        self.strikes = 0

    def update(self, value: float, t: int):
        if np.isnan(value) and self.initial is None:
            return
        if not np.isfinite(value):
            raise NumericError(f"training loss became non-finite at interval {t}")
        if self.initial is None:
            self.initial = value
            return
        self.strikes = self.strikes + 1 if value > self.factor * self.initial else 0
        if self.strikes >= self.patience:
            raise NumericError(
                f"training diverged at interval {t}: loss {value:.4g} exceeds "
                f"{self.factor}x the initial {self.initial:.4g} for {self.patience} arrivals"
            )


@dataclass
class OfflineResult:
    """Validation predictions: column ``k`` is interval ``intervals[k]``."""

    intervals: np.ndarray
    truth: np.ndarray
    prediction: np.ndarray
    state: RunState
    losses: np.ndarray


def run_offline(
    values: np.ndarray,
    cfg: TrainConfig,
    A_prime: PropagationMatrix,
    split: float = 0.75,
    state: RunState | None = None,
    start: int = 0,
    stop: int | None = None,
    monitor: DivergenceMonitor | None = None,
) -> OfflineResult:
    """Replay a normalized ``n x L`` panel through :func:`step`.

    The prediction for interval ``t`` is made on arrival ``t - 1``.  Only
    intervals ``t >= floor(split * L)`` are returned.  ``start``/``stop``
    restrict which arrivals are replayed (for resuming from a checkpoint).
    """
    from grnn.data import train_length

    x = np.asarray(values, dtype=np.float64)
    n, L = x.shape
    if L < cfg.T + 1:
        raise ParameterError(f"panel has {L} intervals; need at least T + 1 = {cfg.T + 1}")
    first_val = max(train_length(L, split), 1)
    stop = L if stop is None else stop
    if state is None:
        state = initial_state(cfg, n)
    if state.t != start:
        raise ContractError(f"state has seen {state.t} intervals but replay starts at {start}")

    iv, preds, losses = [], [], []
    for t in range(start, stop):
        pred, state = step(state, x[:, t], cfg, A_prime)
        losses.append(state.last_loss)
        if monitor is not None:
            monitor.update(state.last_loss, t)
        if t + 1 < L and t + 1 >= first_val:
            iv.append(t + 1)
            preds.append(pred)
    intervals = np.array(iv, dtype=int)
    prediction = np.array(preds).T if preds else np.zeros((n, 0))
    return OfflineResult(intervals, x[:, intervals], prediction, state, np.array(losses))
