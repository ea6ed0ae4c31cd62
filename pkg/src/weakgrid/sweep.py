"""Critical-reactance search: how far the grid can weaken before a
controller loses the fault.

For a fixed fault voltage, the boundary between decaying and sustained
post-onset oscillation is located by bisection over the fault reactance,
classifying each run with the stability test. Predictive-controller sweeps
reuse one nominal identification across all runs, since it does not depend
on the fault parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .scenario import (IdentificationResult, ScenarioConfig, ScenarioResult,
                       identify_nominal, run_scenario)

__all__ = ["CriticalResult", "classify_at", "critical_reactance"]


@dataclass
class CriticalResult:
    mode: str
    vg_fault: float
    critical_xg: float
    bracket: tuple[float, float]
    tol: float
    evaluations: list[tuple[float, bool]]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "vg_fault": self.vg_fault,
            "critical_xg": self.critical_xg,
            "bracket": list(self.bracket),
            "tol": self.tol,
            "evaluations": [[xg, stable] for xg, stable in self.evaluations],
        }


def classify_at(base: ScenarioConfig, mode: str, xg_fault: float,
                vg_fault: float,
                identification: IdentificationResult | None = None
                ) -> tuple[bool, ScenarioResult]:
    """Run one scenario at the given fault point and classify its stability.

    Sweep runs use the fixed fallback settling tube; running a conventional
    companion per bisection point would be both costly and undefined where
    the companion diverges outright.
    """
    cfg = replace(base, mode=mode,
                  fault=replace(base.fault, xg_fault=xg_fault,
                                vg_fault=vg_fault))
    result = run_scenario(cfg, identification=identification,
                          run_companion=False)
    return result.metrics.stable, result


def critical_reactance(base: ScenarioConfig, mode: str, vg_fault: float,
                       search_range: tuple[float, float],
                       tol: float = 5e-4,
                       identification: IdentificationResult | None = None
                       ) -> CriticalResult:
    """Largest classified-stable fault reactance, located by bisection.

    ``search_range`` must bracket the boundary: stable at the low end,
    unstable at the high end. The identification (for predictive modes) is
    performed once up front when not supplied.
    """
    lo, hi = search_range
    if not lo < hi:
        raise ValueError(f"search range must satisfy lo < hi, got [{lo}, {hi}]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if mode != "CC" and identification is None:
        identification = identify_nominal(base)

    evaluations: list[tuple[float, bool]] = []

    def stable_at(xg: float) -> bool:
        stable, _ = classify_at(base, mode, xg, vg_fault, identification)
        evaluations.append((xg, stable))
        return stable

    lo_stable = stable_at(lo)
    hi_stable = stable_at(hi)
    if not lo_stable or hi_stable:
        raise ValueError(
            f"search range does not bracket the stability boundary: "
            f"Xg={lo} classified {'stable' if lo_stable else 'unstable'}, "
            f"Xg={hi} classified {'stable' if hi_stable else 'unstable'}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if stable_at(mid):
            lo = mid
        else:
            hi = mid
    return CriticalResult(mode=mode, vg_fault=vg_fault, critical_xg=lo,
                          bracket=(lo, hi), tol=tol, evaluations=evaluations)
