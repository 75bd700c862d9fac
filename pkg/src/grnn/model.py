"""The GRNN cell: gated propagation over the linkage network, a sigmoid
readout per node, the windowed MSE loss and hand-written BPTT.

Shapes (``D`` hidden size, ``n`` nodes, ``d`` input features)::

    H, S, Z, R, Hc    D x n
    X                 d x n
    W, U_z, U_r       D x d      input -> hidden
    U, W_z, W_r       D x D      hidden -> hidden
    B_z, B_r          D x n      per-node gate biases
    w_o               1 x D
    b_o               n

One step, with ``A'`` the propagation matrix::

    S   = H A'
    Z   = sigmoid(W_z S + U_z X + B_z)
    R   = sigmoid(W_r S + U_r X + B_r)
    Hc  = tanh(W X + U (R * S))
    H'  = (1 - Z) * S + Z * Hc
    o   = sigmoid(w_o H' + b_o)

The backward pass is derived in ``docs/gradients.md``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterator

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from grnn.errors import ContractError, NumericError, ParameterError
from grnn.graph import PropagationMatrix

PARAM_NAMES = ("W", "U", "W_z", "U_z", "B_z", "W_r", "U_r", "B_r", "w_o", "b_o")


sigmoid = expit


@dataclass
class Params:
    W: np.ndarray
    U: np.ndarray
    W_z: np.ndarray
    U_z: np.ndarray
    B_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    B_r: np.ndarray
    w_o: np.ndarray
    b_o: np.ndarray

    @property
    def D(self) -> int:
        return self.U.shape[0]

    @property
    def n(self) -> int:
        return self.B_z.shape[1]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in PARAM_NAMES:
            yield name, getattr(self, name)

    def copy(self) -> "Params":
        return replace(self, **{k: v.copy() for k, v in self.items()})

    def count(self) -> int:
        return sum(v.size for _, v in self.items())

    def check(self):
        D, n, d = self.D, self.n, self.d
        want = {
            "W": (D, d), "U": (D, D), "W_z": (D, D), "U_z": (D, d), "B_z": (D, n),
            "W_r": (D, D), "U_r": (D, d), "B_r": (D, n), "w_o": (1, D), "b_o": (n,),
        }
        for name, arr in self.items():
            if arr.shape != want[name]:
                raise ContractError(f"{name} has shape {arr.shape}, expected {want[name]}")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"{name} contains non-finite entries")


@dataclass
class GradientSet(Params):
    """Gradients of the loss, one array per parameter, plus ``H`` for the
    hidden state at the start of the window."""

    H: np.ndarray = None

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(v))) for _, v in self.all_items())

    def all_items(self):
        yield from self.items()
        yield "H", self.H


@dataclass
class StepTrace:
    S: np.ndarray
    Z: np.ndarray
    R: np.ndarray
    Hc: np.ndarray
    H: np.ndarray
    X: np.ndarray


@dataclass
class ForwardTrace:
    """Everything backward() needs for one window.

    ``H0`` is the window's initial state; ``steps[k]`` consumes input ``k``
    and ``o[k]`` is read out from the state it produces.
    """

    H0: np.ndarray
    steps: list[StepTrace]
    o: np.ndarray  # T x n

    @property
    def T(self) -> int:
        return len(self.steps)


def init_params(D: int, n: int, d: int = 1, seed: int = 0, scale: float = 0.1) -> Params:
    """Weights ~ Normal(0, scale**2), biases zero."""
    if D < 1 or n < 1 or d < 1:
        raise ParameterError(f"dimensions must be positive, got D={D} n={n} d={d}")
    rng = np.random.default_rng(seed)
    g = lambda *shape: rng.normal(0.0, scale, size=shape)
    return Params(
        W=g(D, d), U=g(D, D), W_z=g(D, D), U_z=g(D, d), B_z=np.zeros((D, n)),
        W_r=g(D, D), U_r=g(D, d), B_r=np.zeros((D, n)), w_o=g(1, D), b_o=np.zeros(n),
    )


def init_hidden(D: int, n: int, seed: int = 0) -> np.ndarray:
    """Standard-normal initial hidden state."""
    return np.random.default_rng([seed, 1]).standard_normal((D, n))


def _matrix(A) -> np.ndarray | sp.spmatrix:
    if isinstance(A, PropagationMatrix):
        return A.values
    return A


def _right(H: np.ndarray, A) -> np.ndarray:
    """``H @ A`` for dense or sparse ``A``."""
    if sp.issparse(A):
        return np.asarray((A.T @ H.T).T)
    return H @ A


def _right_T(G: np.ndarray, A) -> np.ndarray:
    """``G @ A.T`` for dense or sparse ``A``."""
    if sp.issparse(A):
        return np.asarray((A @ G.T).T)
    return G @ A.T


def _as_input(X_t, d: int, n: int) -> np.ndarray:
    X_t = np.asarray(X_t, dtype=np.float64)
    if X_t.ndim == 1:
        X_t = X_t.reshape(1, -1)
    if X_t.shape != (d, n):
        raise ContractError(f"input has shape {X_t.shape}, expected {(d, n)}")
    if not np.all(np.isfinite(X_t)):
        raise NumericError("input contains non-finite entries")
    return X_t


def propagate_step(params: Params, H_prev: np.ndarray, X_t, A_prime) -> tuple[np.ndarray, StepTrace]:
    A = _matrix(A_prime)
    D, n = params.D, params.n
    if H_prev.shape != (D, n):
        raise ContractError(f"hidden state has shape {H_prev.shape}, expected {(D, n)}")
    if A.shape != (n, n):
        raise ContractError(f"propagation matrix has shape {A.shape}, expected {(n, n)}")
    X = _as_input(X_t, params.d, n)
    S = _right(H_prev, A)
    Z = sigmoid(params.W_z @ S + params.U_z @ X + params.B_z)
    R = sigmoid(params.W_r @ S + params.U_r @ X + params.B_r)
    Hc = np.tanh(params.W @ X + params.U @ (R * S))
    H = (1.0 - Z) * S + Z * Hc
    return H, StepTrace(S, Z, R, Hc, H, X)


def output_step(params: Params, H_t: np.ndarray) -> np.ndarray:
    if H_t.shape != (params.D, params.n):
        raise ContractError(f"hidden state has shape {H_t.shape}, expected {(params.D, params.n)}")
    return sigmoid(params.w_o @ H_t + params.b_o)[0]


def forward(params: Params, H0: np.ndarray, inputs, A_prime) -> ForwardTrace:
    """Run the cell over a window of inputs (``T x n`` or ``T x d x n``)."""
    steps, outs = [], []
    H = H0
    for X_t in inputs:
        H, st = propagate_step(params, H, X_t, A_prime)
        steps.append(st)
        outs.append(output_step(params, H))
    o = np.array(outs) if outs else np.zeros((0, params.n))
    return ForwardTrace(H0, steps, o)


def loss(predictions, truth) -> float:
    """Mean squared error over all ``n * T`` entries."""
    p = np.asarray(predictions, dtype=np.float64)
    x = np.asarray(truth, dtype=np.float64)
    if p.shape != x.shape:
        raise ContractError(f"predictions {p.shape} and truth {x.shape} differ in shape")
    if p.size == 0:
        raise ContractError("loss needs at least one prediction")
    return float(np.mean((x - p) ** 2))


def backward(trace: ForwardTrace, truth, params: Params, A_prime) -> GradientSet:
    """Truncated BPTT over one window.

    Returns d(loss)/d(theta) for every parameter and for ``trace.H0``.
    """
    A = _matrix(A_prime)
    x = np.asarray(truth, dtype=np.float64)
    T, n = trace.o.shape
    if x.shape != (T, n) or T == 0:
        raise ContractError(f"truth has shape {x.shape}, trace expects {(T, n)}")
    if trace.H0.shape != (params.D, n) or A.shape != (n, n):
        raise ContractError("trace, params and propagation matrix disagree on shape")

    g = GradientSet(**{k: np.zeros_like(v) for k, v in params.items()})
    dH = np.zeros_like(trace.H0)
    scale = -2.0 / (n * T)
    for t in range(T - 1, -1, -1):
        st = trace.steps[t]
        o = trace.o[t]
        d_ao = (scale * (x[t] - o) * o * (1.0 - o))[None, :]  # 1 x n
        g.w_o += d_ao @ st.H.T
        g.b_o += d_ao[0]
        dH = dH + params.w_o.T @ d_ao

        dS = dH * (1.0 - st.Z)
        d_az = dH * (st.Hc - st.S) * st.Z * (1.0 - st.Z)
        d_ah = dH * st.Z * (1.0 - st.Hc * st.Hc)
        RS = st.R * st.S
        g.W += d_ah @ st.X.T
        g.U += d_ah @ RS.T
        dRS = params.U.T @ d_ah
        d_ar = dRS * st.S * st.R * (1.0 - st.R)
        dS += dRS * st.R

        g.W_z += d_az @ st.S.T
        g.U_z += d_az @ st.X.T
        g.B_z += d_az
        dS += params.W_z.T @ d_az

        g.W_r += d_ar @ st.S.T
        g.U_r += d_ar @ st.X.T
        g.B_r += d_ar
        dS += params.W_r.T @ d_ar

        dH = _right_T(dS, A)
    g.H = dH
    return g


def window_loss(params: Params, H0: np.ndarray, inputs, truth, A_prime) -> float:
    return loss(forward(params, H0, inputs, A_prime).o, truth)


def fd_gradient(
    params: Params, H_init: np.ndarray, inputs, truth, A_prime, epsilon: float = 1e-4
) -> GradientSet:
    """Central finite differences of the window loss, one scalar at a time."""
    if epsilon <= 0:
        raise ParameterError("epsilon must be positive")
    p = params.copy()
    H0 = np.array(H_init, dtype=np.float64)
    f: Callable[[], float] = lambda: window_loss(p, H0, inputs, truth, A_prime)

    def estimate(arr: np.ndarray) -> np.ndarray:
        out = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), out.reshape(-1)
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + epsilon
            up = f()
            flat[k] = keep - epsilon
            down = f()
            flat[k] = keep
            gflat[k] = (up - down) / (2.0 * epsilon)
        return out

    g = GradientSet(**{k: estimate(v) for k, v in p.items()})
    g.H = estimate(H0)
    return g


def relative_errors(analytic: GradientSet, numeric: GradientSet, floor: float = 1e-7) -> dict[str, float]:
    """Worst ``|a - b| / max(|a|, |b|, floor)`` per parameter."""
    out = {}
    for name, a in analytic.all_items():
        b = getattr(numeric, name)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
        out[name] = float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
    return out


def sgd_update(params: Params, grads: GradientSet, lr: float) -> Params:
    """Plain gradient descent step; returns new params, leaves input alone."""
    if not lr > 0:
        raise ParameterError(f"learning rate must be positive, got {lr}")
    for name, gv in grads.items():
        if not np.all(np.isfinite(gv)):
            raise NumericError(f"gradient for {name} is not finite; update aborted")
    new = Params(**{k: v - lr * getattr(grads, k) for k, v in params.items()})
    for name, v in new.items():
        if not np.all(np.isfinite(v)):
            raise NumericError(f"update made {name} non-finite")
    return new


