"""Simulation traces sampled at the controller rate, and their CSV form.

The on-disk schema is fixed: header ``t,vdc2,vpll,iref_d,iref_q,controller,
phase``, one row per controller sample, floats printed with 9 significant
digits. ``controller`` tags the outer-loop command source (cc | identifying
| ispc) and ``phase`` the grid condition (nominal | fault | cleared).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

__all__ = ["Trace", "CSV_COLUMNS", "CONTROLLER_TAGS", "PHASE_TAGS"]

CSV_COLUMNS = ["t", "vdc2", "vpll", "iref_d", "iref_q", "controller", "phase"]
CONTROLLER_TAGS = ("cc", "identifying", "ispc")
PHASE_TAGS = ("nominal", "fault", "cleared")
CHANNELS = ("vdc2", "vpll")


@dataclass
class Trace:
    """Per-sample records of a closed-loop run."""

    t: np.ndarray           # (n,) strictly increasing, uniform spacing
    y: np.ndarray           # (n, 2) columns vdc2, vpll
    u: np.ndarray           # (n, 2) applied current references
    controller: np.ndarray  # (n,) str tags
    phase: np.ndarray       # (n,) str tags

    def __post_init__(self) -> None:
        n = len(self.t)
        if not (len(self.y) == len(self.u) == len(self.controller)
                == len(self.phase) == n):
            raise ValueError("trace arrays must share their length")
        if n > 1:
            dt = np.diff(self.t)
            if np.any(dt <= 0):
                raise ValueError("trace time must be strictly increasing")
            if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
                raise ValueError("trace time must be uniformly spaced")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def ts(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.y[:, CHANNELS.index(name)]
        except ValueError:
            raise KeyError(f"unknown channel {name!r}, expected one of {CHANNELS}")

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Indices of samples with t0 <= t < t1."""
        return np.flatnonzero((self.t >= t0 - 1e-12) & (self.t < t1 - 1e-12))

    def to_csv(self, path) -> None:
        frame = pd.DataFrame({
            "t": self.t,
            "vdc2": self.y[:, 0],
            "vpll": self.y[:, 1],
            "iref_d": self.u[:, 0],
            "iref_q": self.u[:, 1],
            "controller": self.controller,
            "phase": self.phase,
        })
        frame.to_csv(path, index=False, float_format="%.9g")

    @classmethod
    def from_csv(cls, path) -> "Trace":
        frame = pd.read_csv(path)
        missing = [c for c in CSV_COLUMNS if c not in frame.columns]
        if missing:
            raise ValueError(f"trace file {path} is missing column(s): "
                             + ", ".join(missing))
        extra = [c for c in frame.columns if c not in CSV_COLUMNS]
        if extra:
            raise ValueError(f"trace file {path} has unexpected column(s): "
                             + ", ".join(extra))
        return cls(
            t=frame["t"].to_numpy(dtype=float),
            y=frame[["vdc2", "vpll"]].to_numpy(dtype=float),
            u=frame[["iref_d", "iref_q"]].to_numpy(dtype=float),
            controller=frame["controller"].to_numpy(dtype=object),
            phase=frame["phase"].to_numpy(dtype=object),
        )
