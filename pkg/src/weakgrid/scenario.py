"""Fault-scenario orchestration: equilibria, controller lifecycles, metrics.

A scenario starts from the conventional closed loop's load-flow equilibrium
(nominal grid, regulated voltages, a prescribed power export), applies a
grid fault, and runs one of three outer-loop lifecycles:

CC            the conventional outer PIs command throughout.
FT_ISPC       conventional control until a detection delay after the fault
              onset, then one identification window of excited, sampled
              conventional references, then the predictive controller takes
              over the outer loop (inner PIs and PLL always stay active).
REGULAR_ISPC  the predictor is identified in a separate pre-scenario run
              under nominal conditions and the predictive controller is
              active from the first sample.

Runs are deterministic for a fixed configuration, seed included.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, root

from .conventional import ConventionalGains, ControlReferences
from .ispc import (ControllerGains, IoLog, IspcConfig, IspcRuntime, Predictor,
                   build_hankel, compute_gains, control_step,
                   estimate_predictor, excite)
from .metrics import (FALLBACK_TUBE_RADIUS, Metrics, compute_metrics,
                      oscillation_amplitude)
from .plant import (MODE_CC, MODE_IDENT, MODE_ISPC, N_STATES, FaultEvent,
                    PlantParams, PlantState, advance_interval,
                    apply_fault_schedule, measure_outputs_array, pack_params,
                    rhs_array, P_KP_DC, P_KP_V, P_VDC2_REF, P_VPCC_REF)
from .trace import Trace

__all__ = [
    "MODES",
    "ScenarioConfig",
    "PhaseTiming",
    "IdentificationResult",
    "ScenarioResult",
    "init_steady_state",
    "identify_nominal",
    "run_scenario",
]

MODES = ("CC", "FT_ISPC", "REGULAR_ISPC")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one fault experiment."""

    mode: str = "CC"
    fault: FaultEvent = FaultEvent(1.0, 5.0, 0.1819, 0.96)
    plant: PlantParams = PlantParams()
    cc_gains: ConventionalGains = ConventionalGains()
    refs: ControlReferences = ControlReferences()
    ispc: IspcConfig = field(default_factory=IspcConfig)
    t_end: float = 9.0
    dt: float = 1e-5
    detection_delay: float = 1.0
    # Identification excitation (p.u. per channel, uniform, held one sample).
    # Must dominate the conventional layer's correlated in-loop component or
    # the closed-loop least squares biases the predictor's gain; 3% is small
    # against the 1 p.u. operating level yet gives a comfortable margin.
    excitation_amplitude: float = 0.03
    seed: int = 1

    def validate(self) -> "ScenarioConfig":
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.t_end <= self.fault.t_clear:
            raise ValueError(
                f"t_end ({self.t_end}) must exceed fault.t_clear ({self.fault.t_clear})")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        n_sub = self.ispc.ts / self.dt
        if abs(n_sub - round(n_sub)) > 1e-9 or round(n_sub) < 1:
            raise ValueError(
                f"dt ({self.dt}) must divide the sample time ({self.ispc.ts}) exactly")
        if self.excitation_amplitude < 0:
            raise ValueError("excitation_amplitude must be non-negative")
        if self.mode != "CC":
            self.ispc.validate()
        if self.mode == "FT_ISPC":
            ts = self.ispc.ts
            activation = self.fault.t_start + self.detection_delay + self.ispc.T * ts
            if activation > self.fault.t_clear + 1e-12:
                raise ValueError(
                    f"identification must finish inside the fault window: "
                    f"activation at {activation:.3f}s, fault clears at "
                    f"{self.fault.t_clear}s")
            lead = (self.ispc.T_ini + self.ispc.N + 1) * ts
            if self.detection_delay < lead:
                raise ValueError(
                    f"detection_delay ({self.detection_delay}s) must cover the "
                    f"identification lead-in window ({lead:.3f}s)")
        return self

    @property
    def n_sub(self) -> int:
        return int(round(self.ispc.ts / self.dt))

    @property
    def n_samples(self) -> int:
        return int(round(self.t_end / self.ispc.ts))


@dataclass
class PhaseTiming:
    """Wall-clock record per controller phase."""

    identification_s: float | None = None
    gain_computation_s: float | None = None
    control_step_mean_ms: float | None = None
    control_step_max_ms: float | None = None
    control_steps: int = 0

    def to_dict(self) -> dict:
        return {
            "identification_s": self.identification_s,
            "gain_computation_s": self.gain_computation_s,
            "control_step_mean_ms": self.control_step_mean_ms,
            "control_step_max_ms": self.control_step_max_ms,
            "control_steps": self.control_steps,
        }


@dataclass
class IdentificationResult:
    log: IoLog
    predictor: Predictor
    gains: ControllerGains
    identification_s: float
    gain_computation_s: float
    u_eq: np.ndarray
    y_eq: np.ndarray


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    trace: Trace
    metrics: Metrics
    timing: PhaseTiming
    diverged: bool
    activation_time: float | None = None
    artifact: tuple[IspcConfig, Predictor, ControllerGains] | None = None
    companion_trace: Trace | None = None


def _flat_start(params: PlantParams, refs: ControlReferences) -> np.ndarray:
    s = np.zeros(N_STATES)
    s[0] = s[4] = s[9] = params.pwind
    s[2] = refs.vpcc_ref
    s[6] = refs.vdc2_ref
    return s


def _load_flow_guess(params: PlantParams, gains: ConventionalGains,
                     refs: ControlReferences) -> np.ndarray:
    """Algebraic equilibrium: |v_pcc| at its reference, converter-terminal
    power equal to the generation-side power, PLL locked, all PI errors zero."""
    v_mag = refs.vpcc_ref
    z_line = complex(params.rca, params.xca + params.xg)

    def branch(phi: float):
        vp = v_mag * complex(math.cos(phi), math.sin(phi))
        ig = (vp - params.vg) / z_line
        i_f = ig + 1j * params.bf * vp
        vco = vp + complex(params.rf, params.xf) * i_f
        return vp, ig, i_f, vco

    def power_mismatch(phi: float) -> float:
        _, _, i_f, vco = branch(phi)
        return (vco * i_f.conjugate()).real - params.pwind

    lo, hi = -0.7, 1.5
    if power_mismatch(lo) * power_mismatch(hi) > 0:
        raise ValueError("load flow infeasible: no equilibrium in the angle bracket")
    phi = brentq(power_mismatch, lo, hi, xtol=1e-14)
    vp, ig, i_f, vco = branch(phi)
    spin = complex(math.cos(phi), -math.sin(phi))  # grid -> converter frame
    if_c = i_f * spin
    vco_c = vco * spin
    s = np.empty(N_STATES)
    s[0], s[1] = i_f.real, i_f.imag
    s[2], s[3] = vp.real, vp.imag
    s[4], s[5] = ig.real, ig.imag
    s[6] = refs.vdc2_ref
    s[7] = phi
    s[8] = 0.0
    s[9], s[10] = if_c.real, if_c.imag
    s[11] = vco_c.real + gains.l_tilde * if_c.imag - v_mag
    s[12] = vco_c.imag - gains.l_tilde * if_c.real
    return s


def init_steady_state(params: PlantParams,
                      gains: ConventionalGains | None = None,
                      refs: ControlReferences | None = None,
                      p_export: float | None = None,
                      method: str = "hybrid",
                      dt: float = 1e-4,
                      max_sim: float = 60.0) -> PlantState:
    """Equilibrium of the conventional closed loop.

    ``hybrid`` (default) seeds a root solve of the full derivative with the
    algebraic load flow; ``settle`` integrates from a flat start until the
    largest state derivative falls below 1e-9 and then polishes. Both
    routes agree to solver tolerance. ``p_export`` overrides the
    generation-side power for the computed operating point.
    """
    gains = gains or ConventionalGains()
    refs = refs or ControlReferences()
    if p_export is not None:
        params = replace(params, pwind=p_export)
    p = pack_params(params, gains, refs)

    if method == "settle":
        s = _flat_start(params, refs)
        chunk = max(int(round(0.5 / dt)), 1)
        elapsed = 0.0
        while True:
            s, diverged = advance_interval(s, p, MODE_CC, 0.0, 0.0, dt, chunk)
            elapsed += chunk * dt
            if diverged:
                raise ValueError("closed loop diverged while settling to equilibrium")
            if np.max(np.abs(rhs_array(s, p))) <= 1e-9:
                break
            if elapsed >= max_sim:
                raise ValueError(
                    f"no equilibrium within {max_sim:.0f}s of simulation; "
                    "parameters appear infeasible")
        guess = s
    elif method in ("hybrid", "rootfind"):
        guess = _load_flow_guess(params, gains, refs)
    else:
        raise ValueError(f"unknown method {method!r}")

    sol = root(lambda x: rhs_array(x, p), guess, method="hybr", tol=1e-13)
    s = sol.x
    if np.max(np.abs(rhs_array(s, p))) > 1e-9:
        raise ValueError("equilibrium polish did not converge; parameters "
                         "appear infeasible")
    return PlantState.from_array(s)


def _sampled_outer(s: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Outer-layer current reference evaluated at a sample instant."""
    vpll = s[2] * math.cos(s[7]) + s[3] * math.sin(s[7])
    return np.array([
        p[P_KP_DC] * (s[6] - p[P_VDC2_REF]) + s[9],
        p[P_KP_V] * (vpll - p[P_VPCC_REF]) + s[10],
    ])


def identify_nominal(cfg: ScenarioConfig,
                     rng: np.random.Generator | None = None) -> IdentificationResult:
    """Pre-scenario identification under nominal grid conditions.

    Starting at the equilibrium, the sampled conventional reference plus
    held excitation noise drives the plant for one full log window; the
    predictor and gains are estimated from the log.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    ispc_cfg = cfg.ispc.validate()
    eq = init_steady_state(cfg.plant, cfg.cc_gains, cfg.refs)
    s = eq.as_array()
    p = pack_params(cfg.plant, cfg.cc_gains, cfg.refs)
    u_eq = np.array([s[9], s[10]])
    y_eq = np.asarray(measure_outputs_array(s))

    n_id = ispc_cfg.n_raw
    us = np.empty((n_id, ispc_cfg.n_u))
    ys = np.empty((n_id, ispc_cfg.n_y))
    t0 = time.perf_counter()
    for k in range(n_id):
        ys[k] = measure_outputs_array(s)
        us[k] = excite(_sampled_outer(s, p), rng, cfg.excitation_amplitude)
        s, diverged = advance_interval(s, p, MODE_IDENT, us[k, 0], us[k, 1],
                                       cfg.dt, cfg.n_sub)
        if diverged:
            raise ValueError("plant diverged during nominal identification")
    log = IoLog(us, ys)
    predictor = estimate_predictor(build_hankel(log, ispc_cfg),
                                   rcond=ispc_cfg.rcond)
    identification_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    gains = compute_gains(predictor, ispc_cfg)
    gain_s = time.perf_counter() - t0
    return IdentificationResult(log=log, predictor=predictor, gains=gains,
                                identification_s=identification_s,
                                gain_computation_s=gain_s,
                                u_eq=u_eq, y_eq=y_eq)


def _tube_from_companion(companion: Trace, fault: FaultEvent,
                         companion_diverged: bool) -> tuple[float, float] | None:
    """2% of the companion's oscillation amplitude over the last fault second."""
    if companion_diverged or len(companion) == 0:
        return None
    if companion.t[-1] < fault.t_clear - companion.ts * 1.5:
        return None
    window = (fault.t_clear - 1.0, fault.t_clear)
    return tuple(
        max(0.02 * oscillation_amplitude(companion, ch, window), 1e-9)
        for ch in ("vdc2", "vpll"))


def run_scenario(cfg: ScenarioConfig,
                 tube_radii: tuple[float, float] | None = None,
                 tube_source: str | None = None,
                 identification: IdentificationResult | None = None,
                 run_companion: bool = True) -> ScenarioResult:
    """Execute one fault scenario and compute its metrics.

    ``identification`` lets sweeps reuse a nominal identification across
    runs (it does not depend on the fault). ``tube_radii`` overrides the
    settling tube; otherwise a conventional companion run on the same fault
    supplies it, falling back to the fixed radius when the companion
    diverges or ``run_companion`` is false.
    """
    cfg.validate()
    ts = cfg.ispc.ts
    n_samples = cfg.n_samples
    n_sub = cfg.n_sub
    fault = cfg.fault

    seq_ident, seq_exc = np.random.SeedSequence(cfg.seed).spawn(2)
    rng_exc = np.random.default_rng(seq_exc)

    eq = init_steady_state(cfg.plant, cfg.cc_gains, cfg.refs)
    s = eq.as_array()
    p_nom = pack_params(cfg.plant, cfg.cc_gains, cfg.refs)
    p_fault = pack_params(
        apply_fault_schedule(cfg.plant, fault, fault.t_start),
        cfg.cc_gains, cfg.refs)

    timing = PhaseTiming()
    gains: ControllerGains | None = None
    runtime: IspcRuntime | None = None
    artifact: tuple | None = None
    activation_time: float | None = None
    r_y = np.array([cfg.refs.vdc2_ref, cfg.refs.vpcc_ref])

    if cfg.mode == "REGULAR_ISPC":
        if identification is None:
            identification = identify_nominal(
                cfg, rng=np.random.default_rng(seq_ident))
        timing.identification_s = identification.identification_s
        timing.gain_computation_s = identification.gain_computation_s
        gains = identification.gains
        artifact = (cfg.ispc, identification.predictor, identification.gains)
        runtime = IspcRuntime.from_steady_state(
            cfg.ispc.T_ini, np.array([s[9], s[10]]),
            np.asarray(measure_outputs_array(s)))
    k_ident = k_activate = None
    if cfg.mode == "FT_ISPC":
        k_ident = int(round((fault.t_start + cfg.detection_delay) / ts))
        k_activate = k_ident + cfg.ispc.T

    us = np.empty((n_samples, 2))
    ys = np.empty((n_samples, 2))
    controller_tags = np.empty(n_samples, dtype=object)
    phase_tags = np.empty(n_samples, dtype=object)
    step_times: list[float] = []
    diverged = False
    n_logged = 0

    for k in range(n_samples):
        t = k * ts
        in_fault = fault.t_start <= t < fault.t_clear
        p_k = p_fault if in_fault else p_nom
        phase_tags[k] = ("fault" if in_fault
                         else "nominal" if t < fault.t_start else "cleared")
        y_k = np.asarray(measure_outputs_array(s))
        ys[k] = y_k

        if cfg.mode == "FT_ISPC" and k == k_activate:
            lead = cfg.ispc.T_ini + cfg.ispc.N + 1
            log = IoLog(us[k_ident - lead:k], ys[k_ident - lead:k])
            t0 = time.perf_counter()
            predictor = estimate_predictor(build_hankel(log, cfg.ispc),
                                           rcond=cfg.ispc.rcond)
            timing.identification_s = time.perf_counter() - t0
            t0 = time.perf_counter()
            gains = compute_gains(predictor, cfg.ispc)
            timing.gain_computation_s = time.perf_counter() - t0
            artifact = (cfg.ispc, predictor, gains)
            runtime = IspcRuntime.from_history(
                cfg.ispc.T_ini,
                us[k - cfg.ispc.T_ini - 1:k],
                ys[k - cfg.ispc.T_ini:k])
            activation_time = t

        if cfg.mode == "CC" or (cfg.mode == "FT_ISPC" and k < k_ident):
            mode = MODE_CC
            u_k = _sampled_outer(s, p_k)
            controller_tags[k] = "cc"
        elif cfg.mode == "FT_ISPC" and k < k_activate:
            mode = MODE_IDENT
            u_k = excite(_sampled_outer(s, p_k), rng_exc,
                         cfg.excitation_amplitude)
            controller_tags[k] = "identifying"
        else:
            mode = MODE_ISPC
            t0 = time.perf_counter()
            runtime.observe(y_k)
            u_k = control_step(runtime, gains, r_y)
            step_times.append(time.perf_counter() - t0)
            controller_tags[k] = "ispc"

        us[k] = u_k
        n_logged = k + 1
        s, step_diverged = advance_interval(s, p_k, mode, u_k[0], u_k[1],
                                            cfg.dt, n_sub)
        if step_diverged:
            diverged = True
            break

    if step_times:
        timing.control_step_mean_ms = 1e3 * float(np.mean(step_times))
        timing.control_step_max_ms = 1e3 * float(np.max(step_times))
        timing.control_steps = len(step_times)

    trace = Trace(
        t=np.arange(n_logged) * ts,
        y=ys[:n_logged].copy(),
        u=us[:n_logged].copy(),
        controller=controller_tags[:n_logged].copy(),
        phase=phase_tags[:n_logged].copy(),
    )

    companion_trace = None
    if tube_radii is not None:
        source = tube_source or "explicit"
    elif cfg.mode == "CC":
        tube_radii = _tube_from_companion(trace, fault, diverged)
        source = "cc_companion" if tube_radii else "fixed_fallback"
    elif run_companion:
        companion = run_scenario(replace(cfg, mode="CC"), run_companion=False)
        companion_trace = companion.trace
        tube_radii = _tube_from_companion(companion.trace, fault,
                                          companion.diverged)
        source = "cc_companion" if tube_radii else "fixed_fallback"
    else:
        source = "fixed_fallback"
    if tube_radii is None:
        tube_radii = (FALLBACK_TUBE_RADIUS, FALLBACK_TUBE_RADIUS)

    metrics = compute_metrics(
        trace, fault,
        references=(cfg.refs.vdc2_ref, cfg.refs.vpcc_ref),
        tube_radii=tube_radii, tube_source=source,
        diverged=diverged, activation_time=activation_time)
    return ScenarioResult(
        config=cfg, trace=trace, metrics=metrics, timing=timing,
        diverged=diverged, activation_time=activation_time,
        artifact=artifact, companion_trace=companion_trace)
