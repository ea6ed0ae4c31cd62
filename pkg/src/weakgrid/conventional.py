"""Conventional dual-layer PI control of the grid-following converter.

The outer layer regulates the squared DC-link voltage and the PCC voltage
magnitude (as seen by the PLL) by shaping dq current references; the inner
layer tracks those references with the converter voltage, adding
cross-coupling cancellation and a PCC-voltage feedforward. Both layers are
continuous-time and their integrator states are carried inside the plant
state, so they integrate with the same RK4 scheme as the circuit.

Sign conventions. Outer-layer errors are measurement minus reference: the
plant gain from each reference current to its regulated voltage is negative
(more d-current drains the DC link, more q-current absorbs reactive power
and sags the PCC), so the tabled positive gains close stable loops.
Inner-layer errors are reference minus measurement: the converter voltage
drives the filter current directly, and the opposite reading is positive
feedback. The nominal-settling guard tests pin both choices.
"""

from __future__ import annotations

from dataclasses import dataclass

from .frames import DqVector

__all__ = [
    "PiGains",
    "ConventionalGains",
    "ConventionalState",
    "ControlReferences",
    "outer_layer",
    "inner_layer",
]


@dataclass(frozen=True)
class PiGains:
    """Proportional/integral gain pair; ki is per second."""

    kp: float
    ki: float

    def __post_init__(self) -> None:
        if self.kp < 0 or self.ki < 0:
            raise ValueError(f"PI gains must be non-negative, got {self}")


@dataclass(frozen=True)
class ConventionalGains:
    """The full conventional gain set; defaults are the benchmark values."""

    inner: PiGains = PiGains(0.48, 3.27)
    dc_link: PiGains = PiGains(0.4, 40.0)
    pcc_voltage: PiGains = PiGains(0.25, 25.0)
    # Inductance estimate used for decoupling, as a p.u. reactance.  Equal
    # to the true filter reactance: a perfect estimate.
    l_tilde: float = 0.15


@dataclass
class ConventionalState:
    """Integrator states of the two outer and two inner PI channels."""

    z_dc: float = 0.0
    z_v: float = 0.0
    z_id: float = 0.0
    z_iq: float = 0.0


@dataclass(frozen=True)
class ControlReferences:
    vdc2_ref: float = 1.0
    vpcc_ref: float = 1.0

    def __post_init__(self) -> None:
        if self.vdc2_ref <= 0 or self.vpcc_ref <= 0:
            raise ValueError(f"references must be positive, got {self}")


def outer_layer(y, refs: ControlReferences, state: ConventionalState,
                gains: ConventionalGains):
    """Outer voltage-regulation layer.

    Parameters
    ----------
    y : OutputSample
        Measured (vdc2, vpll) pair.

    Returns
    -------
    (i_ref, (dz_dc, dz_v))
        Current reference in the converter frame and the time-derivatives
        of the two outer integrator states.
    """
    e_dc = y[0] - refs.vdc2_ref
    e_v = y[1] - refs.vpcc_ref
    i_ref = DqVector(gains.dc_link.kp * e_dc + state.z_dc,
                     gains.pcc_voltage.kp * e_v + state.z_v)
    return i_ref, (gains.dc_link.ki * e_dc, gains.pcc_voltage.ki * e_v)


def inner_layer(i_f_c: DqVector, i_ref_c: DqVector, v_pll: float,
                state: ConventionalState, gains: ConventionalGains):
    """Inner current-tracking layer.

    ``i_f_c`` is the filter current in the converter frame and ``v_pll``
    the PLL's PCC-voltage magnitude estimate, fed forward on the d-axis.

    Returns
    -------
    (v_co_c, (dz_id, dz_iq))
        Converter terminal voltage command in the converter frame and the
        inner integrator derivatives.
    """
    e_d = i_ref_c.d - i_f_c.d
    e_q = i_ref_c.q - i_f_c.q
    lt = gains.l_tilde
    v_co = DqVector(gains.inner.kp * e_d + state.z_id - lt * i_f_c.q + v_pll,
                    gains.inner.kp * e_q + state.z_iq + lt * i_f_c.d)
    return v_co, (gains.inner.ki * e_d, gains.inner.ki * e_q)
