"""Continuous-time model of the converter-filter-cable-grid circuit.

The circuit is the single-phase equivalent of a grid-following converter:
an ideal voltage source behind an RL filter, a filter capacitor at the PCC
node, an RL transmission cable in series with the grid inductance, and a
Thevenin grid source. The DC link is a capacitor whose squared voltage
integrates the mismatch between constant generation-side power and the
power leaving the converter terminals. An SRF-PLL tracks the PCC voltage
angle and provides the converter reference frame.

The simulation runs in a frame rotating at exactly omega0, aligned with the
grid source, so the source is the constant vector (vg, 0), steady signals
are constants, and a fixed-step classical RK4 scheme resolves the closed
loop comfortably at the default 10 us step. Cable and grid inductances are
lumped into one branch; there is no PWM, saturation, or current limiting.

State layout (13 floats):

    0:2   i_f     filter current, grid frame
    2:4   v_pcc   filter-capacitor node voltage, grid frame
    4:6   i_g     cable/grid current, grid frame
    6     vdc2    DC-link voltage squared, p.u.
    7     delta   PLL angle relative to the grid frame, rad
    8     xi      PLL integrator state
    9:13  z_dc, z_v, z_id, z_iq   outer and inner PI integrators

A state is declared diverged as soon as any entry exceeds 1e3 p.u. in
magnitude, stops being finite, or the DC-link voltage squared reaches zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np
from numba import njit

from .conventional import (ConventionalGains, ConventionalState,
                           ControlReferences, inner_layer, outer_layer)
from .frames import DqVector, active_power, rotate

__all__ = [
    "PlantParams",
    "PlantState",
    "FaultEvent",
    "OutputSample",
    "MODE_CC",
    "MODE_IDENT",
    "MODE_ISPC",
    "N_STATES",
    "DIVERGENCE_LIMIT",
    "pack_params",
    "derivative",
    "closed_loop_derivative",
    "rk4",
    "rk4_step",
    "advance_interval",
    "measure_outputs",
    "measure_outputs_array",
    "apply_fault_schedule",
]

TWO_PI_60 = 2.0 * math.pi * 60.0

N_STATES = 13
DIVERGENCE_LIMIT = 1e3

# Outer-loop command source during a sample interval:
#   MODE_CC     outer PIs in command, evaluated continuously inside RK4
#   MODE_IDENT  an externally held (ZOH) current reference is applied while
#               the outer PI integrators keep evolving (identification)
#   MODE_ISPC   an externally held reference is applied and the unused
#               outer integrators are frozen
MODE_CC = 0
MODE_IDENT = 1
MODE_ISPC = 2


class OutputSample(NamedTuple):
    """The controlled outputs: squared DC-link voltage and PLL voltage."""

    vdc2: float
    vpll: float


@dataclass(frozen=True)
class PlantParams:
    """Circuit, DC-link, and PLL constants. Defaults are the benchmark set.

    Reactances, resistances, and the capacitor susceptance are p.u. at the
    converter base; ``vdc2_base`` is in squared volts, ``pbase`` in watts.
    """

    omega0: float = TWO_PI_60
    xf: float = 0.15
    rf: float = 0.003
    bf: float = 0.178
    xca: float = 0.45
    rca: float = 0.045
    xg: float = 0.01
    vg: float = 1.0
    cdc: float = 90e-3
    vdc2_base: float = 1100.0 ** 2
    pbase: float = 2e6
    pwind: float = 0.9
    kpll_p: float = 60.0
    kpll_i: float = 1400.0

    def __post_init__(self) -> None:
        if self.omega0 <= 0:
            raise ValueError("omega0 must be positive")
        if self.xf <= 0 or self.bf <= 0 or self.xca <= 0:
            raise ValueError("xf, bf, xca must be positive")
        for name in ("rf", "rca", "xg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.cdc <= 0 or self.vdc2_base <= 0 or self.pbase <= 0:
            raise ValueError("cdc, vdc2_base, pbase must be positive")

    @property
    def kdc(self) -> float:
        """Gain of the DC-link power-balance equation, 1/s."""
        return 2.0 * self.pbase / (self.cdc * self.vdc2_base)


@dataclass(frozen=True)
class FaultEvent:
    """A step change of grid reactance and source magnitude on [t_start, t_clear)."""

    t_start: float
    t_clear: float
    xg_fault: float
    vg_fault: float

    def __post_init__(self) -> None:
        if not 0 <= self.t_start < self.t_clear:
            raise ValueError(
                f"fault requires 0 <= t_start < t_clear, got [{self.t_start}, {self.t_clear})")


def apply_fault_schedule(params: PlantParams, fault: FaultEvent, t: float) -> PlantParams:
    """Grid parameters in effect at time ``t``; the switch is instantaneous."""
    if fault.t_start <= t < fault.t_clear:
        return replace(params, xg=fault.xg_fault, vg=fault.vg_fault)
    return params


@dataclass
class PlantState:
    """Full closed-loop state: circuit, DC link, PLL, and PI integrators."""

    i_f: DqVector
    v_pcc: DqVector
    i_g: DqVector
    vdc2: float
    delta_pll: float
    xi_pll: float
    cc: ConventionalState

    def as_array(self) -> np.ndarray:
        return np.array([
            self.i_f.d, self.i_f.q,
            self.v_pcc.d, self.v_pcc.q,
            self.i_g.d, self.i_g.q,
            self.vdc2, self.delta_pll, self.xi_pll,
            self.cc.z_dc, self.cc.z_v, self.cc.z_id, self.cc.z_iq,
        ])

    @classmethod
    def from_array(cls, a: np.ndarray) -> "PlantState":
        a = np.asarray(a, dtype=float)
        if a.shape != (N_STATES,):
            raise ValueError(f"expected shape ({N_STATES},), got {a.shape}")
        return cls(
            i_f=DqVector(a[0], a[1]),
            v_pcc=DqVector(a[2], a[3]),
            i_g=DqVector(a[4], a[5]),
            vdc2=a[6], delta_pll=a[7], xi_pll=a[8],
            cc=ConventionalState(a[9], a[10], a[11], a[12]),
        )


# Packed parameter vector consumed by the compiled kernels.
(P_OMEGA0, P_XF, P_RF, P_BF, P_XCA, P_RCA, P_XG, P_VG, P_KDC, P_PWIND,
 P_KPLL_P, P_KPLL_I, P_KP_DC, P_KI_DC, P_KP_V, P_KI_V, P_KP_I, P_KI_I,
 P_LTILDE, P_VDC2_REF, P_VPCC_REF) = range(21)
N_PARAMS = 21


def pack_params(params: PlantParams,
                gains: ConventionalGains | None = None,
                refs: ControlReferences | None = None) -> np.ndarray:
    """Pack plant constants, conventional gains, and references for the kernels."""
    gains = gains or ConventionalGains()
    refs = refs or ControlReferences()
    p = np.empty(N_PARAMS)
    p[P_OMEGA0] = params.omega0
    p[P_XF] = params.xf
    p[P_RF] = params.rf
    p[P_BF] = params.bf
    p[P_XCA] = params.xca
    p[P_RCA] = params.rca
    p[P_XG] = params.xg
    p[P_VG] = params.vg
    p[P_KDC] = params.kdc
    p[P_PWIND] = params.pwind
    p[P_KPLL_P] = params.kpll_p
    p[P_KPLL_I] = params.kpll_i
    p[P_KP_DC] = gains.dc_link.kp
    p[P_KI_DC] = gains.dc_link.ki
    p[P_KP_V] = gains.pcc_voltage.kp
    p[P_KI_V] = gains.pcc_voltage.ki
    p[P_KP_I] = gains.inner.kp
    p[P_KI_I] = gains.inner.ki
    p[P_LTILDE] = gains.l_tilde
    p[P_VDC2_REF] = refs.vdc2_ref
    p[P_VPCC_REF] = refs.vpcc_ref
    return p


@njit(cache=True, nogil=True)
def _rhs(s, p, mode, iref_d, iref_q, out):  # pragma: no cover - compiled
    ifd, ifq = s[0], s[1]
    vpd, vpq = s[2], s[3]
    igd, igq = s[4], s[5]
    vdc2 = s[6]
    delta = s[7]
    xi = s[8]
    zdc, zv, zid, ziq = s[9], s[10], s[11], s[12]

    cosd = math.cos(delta)
    sind = math.sin(delta)
    # converter-frame projections
    if_c_d = ifd * cosd + ifq * sind
    if_c_q = -ifd * sind + ifq * cosd
    vp_c_d = vpd * cosd + vpq * sind
    vp_c_q = -vpd * sind + vpq * cosd
    vpll = vp_c_d

    e_dc = vdc2 - p[P_VDC2_REF]
    e_v = vpll - p[P_VPCC_REF]
    if mode == MODE_CC:
        ird = p[P_KP_DC] * e_dc + zdc
        irq = p[P_KP_V] * e_v + zv
    else:
        ird = iref_d
        irq = iref_q
    if mode == MODE_ISPC:
        dzdc = 0.0
        dzv = 0.0
    else:
        dzdc = p[P_KI_DC] * e_dc
        dzv = p[P_KI_V] * e_v

    e_d = ird - if_c_d
    e_q = irq - if_c_q
    vco_c_d = p[P_KP_I] * e_d + zid - p[P_LTILDE] * if_c_q + vpll
    vco_c_q = p[P_KP_I] * e_q + ziq + p[P_LTILDE] * if_c_d

    # back to the grid frame
    vco_d = vco_c_d * cosd - vco_c_q * sind
    vco_q = vco_c_d * sind + vco_c_q * cosd

    w = p[P_OMEGA0]
    xf = p[P_XF]
    bf = p[P_BF]
    xt = p[P_XCA] + p[P_XG]
    out[0] = (w / xf) * (vco_d - vpd - p[P_RF] * ifd + xf * ifq)
    out[1] = (w / xf) * (vco_q - vpq - p[P_RF] * ifq - xf * ifd)
    out[2] = (w / bf) * (ifd - igd + bf * vpq)
    out[3] = (w / bf) * (ifq - igq - bf * vpd)
    out[4] = (w / xt) * (vpd - p[P_VG] - p[P_RCA] * igd + xt * igq)
    out[5] = (w / xt) * (vpq - p[P_RCA] * igq - xt * igd)
    power = vco_c_d * if_c_d + vco_c_q * if_c_q
    out[6] = p[P_KDC] * (p[P_PWIND] - power)
    out[7] = p[P_KPLL_P] * vp_c_q + xi
    out[8] = p[P_KPLL_I] * vp_c_q
    out[9] = dzdc
    out[10] = dzv
    out[11] = p[P_KI_I] * e_d
    out[12] = p[P_KI_I] * e_q


@njit(cache=True, nogil=True)
def advance_interval(s, p, mode, iref_d, iref_q, dt, n_sub):  # pragma: no cover
    """Advance the state ``n_sub`` RK4 steps of size ``dt`` with inputs held.

    Returns the new state and a divergence flag; on divergence the state of
    the offending step is returned and integration stops.
    """
    x = s.copy()
    k1 = np.empty(N_STATES)
    k2 = np.empty(N_STATES)
    k3 = np.empty(N_STATES)
    k4 = np.empty(N_STATES)
    tmp = np.empty(N_STATES)
    for _ in range(n_sub):
        _rhs(x, p, mode, iref_d, iref_q, k1)
        for i in range(N_STATES):
            tmp[i] = x[i] + 0.5 * dt * k1[i]
        _rhs(tmp, p, mode, iref_d, iref_q, k2)
        for i in range(N_STATES):
            tmp[i] = x[i] + 0.5 * dt * k2[i]
        _rhs(tmp, p, mode, iref_d, iref_q, k3)
        for i in range(N_STATES):
            tmp[i] = x[i] + dt * k3[i]
        _rhs(tmp, p, mode, iref_d, iref_q, k4)
        for i in range(N_STATES):
            x[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])
        bad = x[6] <= 0.0
        if not bad:
            for i in range(N_STATES):
                v = x[i]
                if not math.isfinite(v) or abs(v) > DIVERGENCE_LIMIT:
                    bad = True
                    break
        if bad:
            return x, True
    return x, False


def rhs_array(s: np.ndarray, p: np.ndarray, mode: int = MODE_CC,
              iref_d: float = 0.0, iref_q: float = 0.0) -> np.ndarray:
    """Closed-loop derivative on packed arrays (thin wrapper of the kernel)."""
    out = np.empty(N_STATES)
    _rhs(np.asarray(s, dtype=float), p, mode, iref_d, iref_q, out)
    return out


def measure_outputs(state: PlantState) -> OutputSample:
    """Controlled outputs y = (vdc2, vpll), vpll being the PCC voltage
    d-component in the converter frame."""
    vpll = rotate(state.v_pcc, state.delta_pll).d
    return OutputSample(state.vdc2, vpll)


def measure_outputs_array(s: np.ndarray) -> OutputSample:
    vpll = s[2] * math.cos(s[7]) + s[3] * math.sin(s[7])
    return OutputSample(s[6], vpll)


def derivative(state: PlantState, v_co_c: DqVector, params: PlantParams) -> np.ndarray:
    """Time-derivatives of the nine physical states for a given converter
    voltage command (converter frame).

    This is the readable reference path, assembled from the frame helpers;
    the compiled kernel must agree with it exactly (see the consistency
    tests). PI integrator derivatives are owned by the conventional layer.
    """
    s = state.as_array()
    if not np.all(np.isfinite(s)) or not all(map(math.isfinite, v_co_c)):
        raise ValueError("derivative requires a finite state and input")
    w = params.omega0
    v_co = rotate(v_co_c, -state.delta_pll)
    i_f, v_pcc, i_g = state.i_f, state.v_pcc, state.i_g
    xt = params.xca + params.xg
    d_if = ((w / params.xf) * (v_co.d - v_pcc.d - params.rf * i_f.d + params.xf * i_f.q),
            (w / params.xf) * (v_co.q - v_pcc.q - params.rf * i_f.q - params.xf * i_f.d))
    d_vp = ((w / params.bf) * (i_f.d - i_g.d + params.bf * v_pcc.q),
            (w / params.bf) * (i_f.q - i_g.q - params.bf * v_pcc.d))
    d_ig = ((w / xt) * (v_pcc.d - params.vg - params.rca * i_g.d + xt * i_g.q),
            (w / xt) * (v_pcc.q - params.rca * i_g.q - xt * i_g.d))
    i_f_c = rotate(i_f, state.delta_pll)
    d_vdc2 = params.kdc * (params.pwind - active_power(v_co_c, i_f_c))
    v_pcc_c = rotate(v_pcc, state.delta_pll)
    d_delta = params.kpll_p * v_pcc_c.q + state.xi_pll
    d_xi = params.kpll_i * v_pcc_c.q
    return np.array([*d_if, *d_vp, *d_ig, d_vdc2, d_delta, d_xi])


def closed_loop_derivative(state: PlantState, params: PlantParams,
                           gains: ConventionalGains, refs: ControlReferences,
                           mode: int = MODE_CC,
                           i_ref: DqVector | None = None) -> np.ndarray:
    """Full 13-state derivative with the selected outer-loop command source."""
    y = measure_outputs(state)
    i_ref_cc, (dz_dc, dz_v) = outer_layer(y, refs, state.cc, gains)
    if mode == MODE_CC:
        i_ref_c = i_ref_cc
    else:
        if i_ref is None:
            raise ValueError("held modes need an explicit current reference")
        i_ref_c = DqVector(*i_ref)
        if mode == MODE_ISPC:
            dz_dc = dz_v = 0.0
    i_f_c = rotate(state.i_f, state.delta_pll)
    v_co_c, (dz_id, dz_iq) = inner_layer(i_f_c, i_ref_c, y.vpll, state.cc, gains)
    phys = derivative(state, v_co_c, params)
    return np.concatenate((phys, [dz_dc, dz_v, dz_id, dz_iq]))


def rk4(f: Callable[..., np.ndarray], x: np.ndarray, dt: float, *args) -> np.ndarray:
    """One classical Runge-Kutta step of dx/dt = f(x, *args)."""
    k1 = f(x, *args)
    k2 = f(x + 0.5 * dt * k1, *args)
    k3 = f(x + 0.5 * dt * k2, *args)
    k4 = f(x + dt * k3, *args)
    return x + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def rk4_step(state: PlantState, params: PlantParams, dt: float,
             gains: ConventionalGains | None = None,
             refs: ControlReferences | None = None,
             mode: int = MODE_CC,
             i_ref: DqVector | None = None) -> tuple[PlantState, bool]:
    """One RK4 step of the closed loop with inputs held across the step.

    Deterministic: identical inputs produce bit-identical outputs. Returns
    the stepped state and a divergence flag.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    p = pack_params(params, gains, refs)
    ird, irq = (0.0, 0.0) if i_ref is None else (i_ref[0], i_ref[1])
    out, diverged = advance_interval(state.as_array(), p, mode, ird, irq, dt, 1)
    return PlantState.from_array(out), diverged
