"""Self-describing JSON checkpoints.

Arrays are stored as base64 of their little-endian float64 bytes, so a
save -> load -> save cycle reproduces the file byte for byte.
"""

from __future__ import annotations

import base64
import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from grnn.errors import ValidationError
from grnn.model import PARAM_NAMES, Params
from grnn.online import RunState, TrainConfig

FORMAT = "grnn-checkpoint/1"


def _enc(a) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _dec(obj) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)


@dataclass
class Checkpoint:
    config: TrainConfig
    nodes: tuple[str, ...]
    state: RunState
    normalizer: dict | None = None

    def to_bytes(self) -> bytes:
        p, st = self.state.params, self.state
        window = np.array(st.window) if st.window else np.zeros((0, p.n))
        doc = {
            "format": FORMAT,
            "D": p.D,
            "n": p.n,
            "d": p.d,
            "alpha": self.config.alpha,
            "config": self.config.to_dict(),
            "nodes": list(self.nodes),
            "params": {k: _enc(v) for k, v in p.items()},
            "H": _enc(st.H),
            "H_time": st.H_time,
            "window": _enc(window),
            "last_loss": None if math.isnan(st.last_loss) else st.last_loss,
            "normalizer": self.normalizer,
        }
        return (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode("utf-8")

    def save(self, path: str | Path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        try:
            doc = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"not a checkpoint: {exc}") from None
        if doc.get("format") != FORMAT:
            raise ValidationError(f"unsupported checkpoint format {doc.get('format')!r}")
        params = Params(**{k: _dec(doc["params"][k]) for k in PARAM_NAMES})
        params.check()
        if (params.D, params.n, params.d) != (doc["D"], doc["n"], doc["d"]):
            raise ValidationError("checkpoint dimensions disagree with its arrays")
        window = _dec(doc["window"])
        state = RunState(
            params=params,
            H=_dec(doc["H"]),
            H_time=int(doc["H_time"]),
            window=deque(row.copy() for row in window),
            last_loss=float("nan") if doc["last_loss"] is None else doc["last_loss"],
        )
        return cls(TrainConfig(**doc["config"]), tuple(doc["nodes"]), state, doc["normalizer"])

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())
