"""Performance metrics over fault-scenario traces.

Settling time follows the tube definition: the first instant after which
the output stays within a tube around its reference until the window ends;
the tube radius is 2% of the oscillation amplitude of the conventional
controller's companion run on the same scenario. RMSE is taken over 4 s
windows following the fault onset and the clearance. Stability of a run is
classified from the decay of its own oscillation envelope during the fault
plus the existence of a post-clearance settling instant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .plant import FaultEvent
from .trace import CHANNELS, Trace

__all__ = [
    "ChannelMetrics",
    "Metrics",
    "oscillation_amplitude",
    "settling_time",
    "rmse",
    "classify_stability",
    "compute_metrics",
    "RMSE_WINDOW",
    "FALLBACK_TUBE_RADIUS",
]

RMSE_WINDOW = 4.0
# Tube radius used by stability sweeps when no conventional companion
# amplitude is available (e.g. the companion diverges outright).
FALLBACK_TUBE_RADIUS = 0.01
# Oscillation below this absolute amplitude counts as decayed regardless of
# the envelope ratio; keeps the classifier from comparing numerical noise.
AMPLITUDE_FLOOR = 1e-4
DECAY_RATIO = 0.5


@dataclass
class ChannelMetrics:
    settling_during: float | None
    settling_after: float | None
    rmse_during: float
    rmse_after: float
    osc_amplitude: float
    tube_radius: float

    def to_dict(self) -> dict:
        return {
            "settling_during_s": self.settling_during,
            "settling_after_s": self.settling_after,
            "rmse_during": self.rmse_during,
            "rmse_after": self.rmse_after,
            "osc_amplitude": self.osc_amplitude,
            "tube_radius": self.tube_radius,
        }


@dataclass
class Metrics:
    vdc2: ChannelMetrics
    vpll: ChannelMetrics
    stable: bool
    diverged: bool
    tube_source: str
    # For fault-triggered runs the during-fault settling is also reported
    # anchored at the controller activation instant.
    settling_from_activation: dict | None = None

    def channel(self, name: str) -> ChannelMetrics:
        return {"vdc2": self.vdc2, "vpll": self.vpll}[name]

    def to_dict(self) -> dict:
        return {
            "channels": {"vdc2": self.vdc2.to_dict(), "vpll": self.vpll.to_dict()},
            "stable": self.stable,
            "diverged": self.diverged,
            "tube_source": self.tube_source,
            "settling_from_activation_s": self.settling_from_activation,
        }


def oscillation_amplitude(trace: Trace, channel: str,
                          window: tuple[float, float]) -> float:
    """Half the peak-to-peak excursion about the window mean."""
    idx = trace.window(*window)
    if idx.size == 0:
        raise ValueError(f"window {window} contains no samples")
    y = trace.channel(channel)[idx]
    return 0.5 * float(y.max() - y.min())


def settling_time(trace: Trace, channel: str, steady_value: float,
                  tube_radius: float, window_start: float,
                  window_end: float | None = None) -> float | None:
    """Earliest t >= window_start from which the channel stays within the
    tube until window_end; None when it never does."""
    if tube_radius <= 0:
        raise ValueError("tube_radius must be positive")
    if window_end is None:
        window_end = float(trace.t[-1]) + 0.5 * trace.ts
    idx = trace.window(window_start, window_end)
    if idx.size == 0:
        return None
    outside = np.abs(trace.channel(channel)[idx] - steady_value) > tube_radius
    if not outside.any():
        return float(window_start)
    last_out = np.flatnonzero(outside)[-1]
    if last_out == idx.size - 1:
        return None
    return float(trace.t[idx[last_out + 1]])


def rmse(trace: Trace, channel: str, reference: float,
         window: tuple[float, float]) -> float:
    idx = trace.window(*window)
    if idx.size == 0:
        raise ValueError(f"window {window} contains no samples")
    err = trace.channel(channel)[idx] - reference
    return float(np.sqrt(np.mean(err ** 2)))


def _covers(trace: Trace, t: float) -> bool:
    return len(trace) > 0 and trace.t[-1] >= t - 0.5 * max(trace.ts, 1e-12)


def classify_stability(trace: Trace, fault: FaultEvent,
                       tube_radius: float | None = None,
                       diverged: bool = False,
                       reference: float = 1.0) -> bool:
    """Stable iff the trace survived, the during-fault oscillation envelope
    decays (final fault second vs the second one), and a post-clearance
    settling instant exists on both channels."""
    if diverged or not _covers(trace, fault.t_clear + 2.0):
        return False
    tube = FALLBACK_TUBE_RADIUS if tube_radius is None else tube_radius
    for channel in CHANNELS:
        early = oscillation_amplitude(
            trace, channel, (fault.t_start + 1.0, fault.t_start + 2.0))
        late = oscillation_amplitude(
            trace, channel, (fault.t_clear - 1.0, fault.t_clear))
        if late > AMPLITUDE_FLOOR and late > DECAY_RATIO * early:
            return False
        if settling_time(trace, channel, reference, tube,
                         fault.t_clear, float(trace.t[-1]) + trace.ts) is None:
            return False
    return True


def compute_metrics(trace: Trace, fault: FaultEvent,
                    references: tuple[float, float] = (1.0, 1.0),
                    tube_radii: tuple[float, float] | None = None,
                    tube_source: str = "fixed_fallback",
                    diverged: bool = False,
                    activation_time: float | None = None) -> Metrics:
    """Settling, RMSE, amplitude, and stability for one scenario trace.

    ``tube_radii`` come from the conventional companion run (2% of its
    during-fault oscillation amplitude per channel); when absent the fixed
    fallback radius applies and is flagged in ``tube_source``.
    """
    t_end = float(trace.t[-1]) + trace.ts if len(trace) else fault.t_clear
    per_channel = {}
    from_activation = {} if activation_time is not None else None
    for ci, channel in enumerate(CHANNELS):
        ref = references[ci]
        if tube_radii is None:
            tube = FALLBACK_TUBE_RADIUS
        else:
            tube = tube_radii[ci]
        amp_window = (fault.t_clear - 1.0, fault.t_clear)
        amp = (oscillation_amplitude(trace, channel, amp_window)
               if _covers(trace, fault.t_clear) else math.inf)

        def _settle(start: float, end: float) -> float | None:
            # A truncated trace cannot certify that the signal stays in the
            # tube through the window end.
            if not _covers(trace, end - trace.ts):
                return None
            t = settling_time(trace, channel, ref, tube, start, end)
            return None if t is None else t - start

        settling_during = _settle(fault.t_start, fault.t_clear)
        settling_after = _settle(fault.t_clear, t_end)
        if from_activation is not None:
            from_activation[channel] = _settle(activation_time, fault.t_clear)

        def _rmse(start: float) -> float:
            idx = trace.window(start, start + RMSE_WINDOW)
            if idx.size == 0:
                return math.nan
            return rmse(trace, channel, ref, (start, start + RMSE_WINDOW))

        per_channel[channel] = ChannelMetrics(
            settling_during=settling_during,
            settling_after=settling_after,
            rmse_during=_rmse(fault.t_start),
            rmse_after=_rmse(fault.t_clear),
            osc_amplitude=amp,
            tube_radius=tube,
        )
    stable = classify_stability(
        trace, fault,
        tube_radius=None if tube_radii is None else max(tube_radii),
        diverged=diverged)
    return Metrics(
        vdc2=per_channel["vdc2"],
        vpll=per_channel["vpll"],
        stable=stable,
        diverged=diverged,
        tube_source=tube_source,
        settling_from_activation=from_activation,
    )
