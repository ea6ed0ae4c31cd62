"""Offset-free subspace predictive control of the outer voltage loop.

The controller works on input increments du(k) = u(k) - u(k-1) and raw
outputs, which bakes integral action into the predictor and gives zero
steady-state tracking error for constant references and disturbances. From
a single logged input/output trajectory it:

1. builds four block-Hankel matrices of past/future increment and output
   windows,
2. estimates a multi-step predictor  y_future = P1 du_past + P2 y_past
   + Gamma du_future  by minimum-norm least squares,
3. condenses the finite-horizon quadratic tracking cost into one constant
   gain via the analytic unconstrained solution, and
4. at each sample applies only matrix-vector products: du0 = K1 du_past
   + K2 y_past - Kr r_stacked, u(k) = u(k-1) + du0.

Identification is performed once, offline; the online step is a few
thousand flops. Both stages are exposed functionally and through thin
scikit-learn style estimators (`SubspacePredictor`, `IspcController`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from sklearn.base import BaseEstimator

__all__ = [
    "IspcConfig",
    "IoLog",
    "HankelSet",
    "RankReport",
    "Predictor",
    "ControllerGains",
    "IspcRuntime",
    "increments",
    "build_hankel",
    "check_persistency",
    "estimate_predictor",
    "predict_outputs",
    "compute_gains",
    "optimal_sequence",
    "control_step",
    "excite",
    "SubspacePredictor",
    "IspcController",
]


def _default_q() -> np.ndarray:
    return 8.5 * np.diag([0.85, 1.30])


def _default_r() -> np.ndarray:
    return 120.0 * np.diag([1.2, 1.0])


def _check_weight(name: str, w: np.ndarray, n: int, definite: bool) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}, got {w.shape}")
    if not np.allclose(w, w.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(0.5 * (w + w.T))
    if definite and eig.min() <= 0:
        raise ValueError(f"{name} must be positive definite")
    if not definite and eig.min() < -1e-12 * max(1.0, eig.max()):
        raise ValueError(f"{name} must be positive semi-definite")
    return w


@dataclass(frozen=True)
class IspcConfig:
    """Identification and control-law parameters.

    ``T`` counts Hankel columns; building them consumes
    ``T + T_ini + N + 1`` raw samples (the extra one supplies u(-1) for the
    first increment). Defaults are the benchmark controller set.
    """

    ts: float = 1e-3
    T: int = 750
    T_ini: int = 25
    N: int = 50
    Q: np.ndarray = field(default_factory=_default_q)
    P: np.ndarray | None = None
    R: np.ndarray = field(default_factory=_default_r)
    n_u: int = 2
    n_y: int = 2
    rcond: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))
        if self.P is not None:
            object.__setattr__(self, "P", np.asarray(self.P, dtype=float))

    @property
    def terminal_weight(self) -> np.ndarray:
        return self.Q if self.P is None else self.P

    @property
    def n_raw(self) -> int:
        """Raw samples consumed when building ``T`` Hankel columns."""
        return self.T + self.T_ini + self.N + 1

    def validate(self) -> "IspcConfig":
        if self.ts <= 0:
            raise ValueError("ts must be positive")
        n_i = self.n_u + self.n_y
        if not self.N >= self.T_ini >= n_i:
            raise ValueError(
                f"need N >= T_ini >= n_u + n_y, got N={self.N}, "
                f"T_ini={self.T_ini}, n_u + n_y = {n_i}")
        t_min = (self.T_ini + self.N) * self.n_u + n_i
        if self.T < t_min:
            raise ValueError(f"need T >= {t_min} columns, got T={self.T}")
        _check_weight("Q", self.Q, self.n_y, definite=False)
        _check_weight("P", self.terminal_weight, self.n_y, definite=False)
        _check_weight("R", self.R, self.n_u, definite=True)
        return self


@dataclass(frozen=True)
class IoLog:
    """An input/output record taken at the controller sample rate."""

    u: np.ndarray  # (length, n_u)
    y: np.ndarray  # (length, n_y)

    def __post_init__(self) -> None:
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if u.shape[0] != y.shape[0]:
            raise ValueError(f"u and y lengths differ: {u.shape[0]} vs {y.shape[0]}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise ValueError("log contains non-finite samples")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def length(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True)
class HankelSet:
    """The four data matrices: past/future input increments and outputs."""

    dUp: np.ndarray  # (T_ini*n_u, T)
    Yp: np.ndarray   # (T_ini*n_y, T)
    dUf: np.ndarray  # (N*n_u, T)
    Yf: np.ndarray   # (N*n_y, T)
    T_ini: int
    N: int
    n_u: int
    n_y: int

    @property
    def n_cols(self) -> int:
        return self.dUp.shape[1]


@dataclass(frozen=True)
class RankReport:
    """Numerical ranks of the identification regressor.

    ``full_row_rank`` refers to the input-increment Hankel [dUp; dUf]: its
    full row rank is the persistency-of-excitation condition. The stacked
    regressor [dUp; Yp; Yf] rank is reported alongside; on exact
    low-order linear data it is structurally deficient (the output rows add
    only the lifted state dimension), so it does not gate identification.
    """

    stacked_rank: int
    stacked_rows: int
    input_rank: int
    input_rows: int
    n_cols: int
    full_row_rank: bool
    stacked_full_row_rank: bool

    def to_dict(self) -> dict:
        return {
            "stacked_rank": self.stacked_rank,
            "stacked_rows": self.stacked_rows,
            "input_rank": self.input_rank,
            "input_rows": self.input_rows,
            "n_cols": self.n_cols,
            "full_row_rank": self.full_row_rank,
            "stacked_full_row_rank": self.stacked_full_row_rank,
        }


@dataclass(frozen=True)
class Predictor:
    """Estimated multi-step predictor blocks and fit diagnostics."""

    P1: np.ndarray     # (N*n_y, T_ini*n_u)
    P2: np.ndarray     # (N*n_y, T_ini*n_y)
    Gamma: np.ndarray  # (N*n_y, N*n_u)
    T_ini: int
    N: int
    n_u: int
    n_y: int
    residual: float
    rank_report: RankReport


@dataclass(frozen=True)
class ControllerGains:
    """Precomputed first-increment gains of the analytic control law."""

    K1: np.ndarray  # (n_u, T_ini*n_u)
    K2: np.ndarray  # (n_u, T_ini*n_y)
    Kr: np.ndarray  # (n_u, N*n_y), applied to the stacked reference with a minus sign
    n_u: int
    n_y: int
    T_ini: int
    N: int


def increments(u_seq: np.ndarray) -> np.ndarray:
    """First differences along the sample axis; output is one shorter."""
    u = np.asarray(u_seq, dtype=float)
    if u.shape[0] < 2:
        raise ValueError(f"need at least 2 samples to difference, got {u.shape[0]}")
    return np.diff(u, axis=0)


def _block_hankel(x: np.ndarray, width: int, n_cols: int) -> np.ndarray:
    """Stack sliding windows of ``width`` samples as columns, oldest first."""
    n = x.shape[1]
    h = np.empty((width * n, n_cols))
    for j in range(n_cols):
        h[:, j] = x[j:j + width].ravel()
    return h


def build_hankel(log: IoLog, cfg: IspcConfig) -> HankelSet:
    """Build the four Hankel matrices from the most recent samples of ``log``.

    Column j pairs the past window (du(j..j+T_ini-1), y(j+1..j+T_ini)) with
    the future window (du(j+T_ini..), y(j+T_ini+1..)), matching how the
    online controller stacks its ring buffers.
    """
    if log.u.shape[1] != cfg.n_u or log.y.shape[1] != cfg.n_y:
        raise ValueError(
            f"log dims ({log.u.shape[1]}, {log.y.shape[1]}) do not match "
            f"config ({cfg.n_u}, {cfg.n_y})")
    required = cfg.n_raw
    if log.length < required:
        raise ValueError(
            f"insufficient data: building T={cfg.T} columns needs "
            f"{required} samples, log has {log.length}")
    u = log.u[-required:]
    y = log.y[-required:]
    du = np.diff(u, axis=0)
    ys = y[1:]
    t_ini, n, t = cfg.T_ini, cfg.N, cfg.T
    return HankelSet(
        dUp=_block_hankel(du, t_ini, t),
        Yp=_block_hankel(ys[1:], t_ini, t),
        dUf=_block_hankel(du[t_ini:], n, t),
        Yf=_block_hankel(ys[t_ini + 1:], n, t),
        T_ini=t_ini, N=n, n_u=cfg.n_u, n_y=cfg.n_y,
    )


def check_persistency(h: HankelSet, rcond: float | None = None) -> RankReport:
    """Rank diagnostics of the regressor (singular values above tol*sigma_max)."""
    stacked = np.vstack((h.dUp, h.Yp, h.dUf))
    inputs = np.vstack((h.dUp, h.dUf))
    tol = rcond if rcond is None else rcond * np.linalg.norm(stacked, 2)
    stacked_rank = int(np.linalg.matrix_rank(stacked, tol=tol))
    input_rank = int(np.linalg.matrix_rank(
        inputs, tol=None if rcond is None else rcond * np.linalg.norm(inputs, 2)))
    return RankReport(
        stacked_rank=stacked_rank,
        stacked_rows=stacked.shape[0],
        input_rank=input_rank,
        input_rows=inputs.shape[0],
        n_cols=h.n_cols,
        full_row_rank=input_rank == inputs.shape[0],
        stacked_full_row_rank=stacked_rank == stacked.shape[0],
    )


def estimate_predictor(h: HankelSet, rcond: float | None = None) -> Predictor:
    """Minimum-norm least-squares fit of the multi-step predictor.

    Solved with an SVD-based routine so a rank-deficient regressor still
    yields the minimum-Frobenius-norm solution; the rank report carries the
    deficiency. The relative training residual is recorded, not enforced.
    """
    z = np.vstack((h.dUp, h.Yp, h.dUf))
    theta_t, *_ = np.linalg.lstsq(z.T, h.Yf.T, rcond=rcond)
    theta = theta_t.T
    nu_p = h.T_ini * h.n_u
    ny_p = h.T_ini * h.n_y
    yf_norm = np.linalg.norm(h.Yf)
    residual = 0.0 if yf_norm == 0 else float(
        np.linalg.norm(h.Yf - theta @ z) / yf_norm)
    return Predictor(
        P1=theta[:, :nu_p],
        P2=theta[:, nu_p:nu_p + ny_p],
        Gamma=theta[:, nu_p + ny_p:],
        T_ini=h.T_ini, N=h.N, n_u=h.n_u, n_y=h.n_y,
        residual=residual,
        rank_report=check_persistency(h, rcond=rcond),
    )


def predict_outputs(pred: Predictor, du_ini: np.ndarray, y_ini: np.ndarray,
                    du_future: np.ndarray) -> np.ndarray:
    """Predicted outputs over the horizon, shape (N, n_y)."""
    yhat = (pred.P1 @ np.ravel(du_ini)
            + pred.P2 @ np.ravel(y_ini)
            + pred.Gamma @ np.ravel(du_future))
    return yhat.reshape(pred.N, pred.n_y)


def _stage_weights(pred: Predictor, cfg: IspcConfig) -> tuple[np.ndarray, np.ndarray]:
    ny, nu, n = pred.n_y, pred.n_u, pred.N
    omega = np.zeros((n * ny, n * ny))
    for i in range(n - 1):
        omega[i * ny:(i + 1) * ny, i * ny:(i + 1) * ny] = cfg.Q
    omega[(n - 1) * ny:, (n - 1) * ny:] = cfg.terminal_weight
    psi = np.kron(np.eye(n), cfg.R)
    return omega, psi


def _full_gain(pred: Predictor, cfg: IspcConfig) -> np.ndarray:
    """K = -(Psi + Gamma' Omega Gamma)^-1 Gamma' Omega, all increments."""
    omega, psi = _stage_weights(pred, cfg)
    g = pred.Gamma
    m = psi + g.T @ omega @ g
    m = 0.5 * (m + m.T)
    try:
        factor = cho_factor(m)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "(Psi + Gamma' Omega Gamma) is not positive definite; "
            "R must be positive definite") from exc
    return -cho_solve(factor, g.T @ omega)


def compute_gains(pred: Predictor, cfg: IspcConfig) -> ControllerGains:
    """Condense predictor and weights into the first-increment gains."""
    _check_weight("R", cfg.R, pred.n_u, definite=True)
    k0 = _full_gain(pred, cfg)[:pred.n_u]
    return ControllerGains(
        K1=k0 @ pred.P1,
        K2=k0 @ pred.P2,
        Kr=k0,
        n_u=pred.n_u, n_y=pred.n_y, T_ini=pred.T_ini, N=pred.N,
    )


def optimal_sequence(pred: Predictor, cfg: IspcConfig, du_ini: np.ndarray,
                     y_ini: np.ndarray, r_y: np.ndarray) -> np.ndarray:
    """The full optimal increment sequence, shape (N*n_u,). Used by the
    dual-route optimality tests; the online law applies only its head."""
    k = _full_gain(pred, cfg)
    rbar = np.tile(np.ravel(r_y), pred.N)
    return k @ (pred.P1 @ np.ravel(du_ini) + pred.P2 @ np.ravel(y_ini) - rbar)


class IspcRuntime:
    """Ring buffers of the controller's recent history.

    The controller may act only once the buffers hold ``T_ini`` input
    increments and outputs and the previously applied input; seed them from
    a recorded trajectory or from a steady operating point.
    """

    def __init__(self, T_ini: int, n_u: int, n_y: int):
        self.T_ini = T_ini
        self.n_u = n_u
        self.n_y = n_y
        self._du = np.zeros((T_ini, n_u))
        self._y = np.zeros((T_ini, n_y))
        self._du_count = 0
        self._y_count = 0
        self.u_prev: np.ndarray | None = None

    @classmethod
    def from_history(cls, T_ini: int, u_hist: np.ndarray, y_hist: np.ndarray
                     ) -> "IspcRuntime":
        """Seed from applied inputs (>= T_ini + 1 samples) and outputs."""
        u_hist = np.atleast_2d(np.asarray(u_hist, dtype=float))
        y_hist = np.atleast_2d(np.asarray(y_hist, dtype=float))
        if u_hist.shape[0] < T_ini + 1 or y_hist.shape[0] < T_ini:
            raise ValueError(
                f"seeding needs {T_ini + 1} inputs and {T_ini} outputs, got "
                f"{u_hist.shape[0]} and {y_hist.shape[0]}")
        rt = cls(T_ini, u_hist.shape[1], y_hist.shape[1])
        rt._du[:] = np.diff(u_hist[-(T_ini + 1):], axis=0)
        rt._y[:] = y_hist[-T_ini:]
        rt._du_count = rt._y_count = T_ini
        rt.u_prev = u_hist[-1].copy()
        return rt

    @classmethod
    def from_steady_state(cls, T_ini: int, u_ss: np.ndarray, y_ss: np.ndarray
                          ) -> "IspcRuntime":
        """Seed with zero increments and a constant output history."""
        u_ss = np.asarray(u_ss, dtype=float)
        y_ss = np.asarray(y_ss, dtype=float)
        rt = cls(T_ini, u_ss.size, y_ss.size)
        rt._y[:] = y_ss
        rt._du_count = rt._y_count = T_ini
        rt.u_prev = u_ss.copy()
        return rt

    @property
    def ready(self) -> bool:
        return (self._du_count >= self.T_ini and self._y_count >= self.T_ini
                and self.u_prev is not None)

    def observe(self, y: np.ndarray) -> None:
        """Push the latest output measurement."""
        self._y = np.roll(self._y, -1, axis=0)
        self._y[-1] = y
        self._y_count += 1

    def push_increment(self, du: np.ndarray) -> None:
        self._du = np.roll(self._du, -1, axis=0)
        self._du[-1] = du
        self._du_count += 1

    def du_ini(self) -> np.ndarray:
        return self._du.ravel()

    def y_ini(self) -> np.ndarray:
        return self._y.ravel()


def control_step(rt: IspcRuntime, gains: ControllerGains, r_y: np.ndarray
                 ) -> np.ndarray:
    """One control update: compute du0, advance the buffers, return u(k).

    Call ``rt.observe(y_k)`` with the current measurement first; the
    returned input is applied zero-order-hold until the next sample.
    """
    if not rt.ready:
        raise RuntimeError("controller invoked before its warm-up completed")
    rbar = np.tile(np.ravel(r_y), gains.N)
    du0 = gains.K1 @ rt.du_ini() + gains.K2 @ rt.y_ini() - gains.Kr @ rbar
    u = rt.u_prev + du0
    rt.push_increment(du0)
    rt.u_prev = u
    return u


def excite(u_nominal: np.ndarray, rng: np.random.Generator, amplitude: float
           ) -> np.ndarray:
    """Add zero-mean uniform white noise per channel, held over one sample."""
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    u = np.asarray(u_nominal, dtype=float)
    if amplitude == 0:
        return u.copy()
    return u + rng.uniform(-amplitude, amplitude, size=u.shape)


class SubspacePredictor(BaseEstimator):
    """Multi-step increment/output predictor, scikit-learn style.

    Parameters
    ----------
    T_ini : length of the past window used as the initial condition.
    N : prediction horizon.
    T : Hankel columns to use; None takes every column the data allows.
    rcond : singular-value cutoff for the least-squares solve (None keeps
        the machine-precision default).

    After ``fit(U, Y)`` the blocks are available as ``P1_``, ``P2_``,
    ``Gamma_`` with the fit diagnostics in ``residual_`` and
    ``rank_report_``.
    """

    def __init__(self, T_ini: int = 25, N: int = 50, T: int | None = None,
                 rcond: float | None = None):
        self.T_ini = T_ini
        self.N = N
        self.T = T
        self.rcond = rcond

    def fit(self, U: np.ndarray, Y: np.ndarray) -> "SubspacePredictor":
        log = IoLog(U, Y)
        t = self.T
        if t is None:
            t = log.length - self.T_ini - self.N - 1
        if t < 1:
            raise ValueError(
                f"log of {log.length} samples yields no Hankel columns for "
                f"T_ini={self.T_ini}, N={self.N}")
        cfg = IspcConfig(T=t, T_ini=self.T_ini, N=self.N,
                         n_u=log.u.shape[1], n_y=log.y.shape[1],
                         rcond=self.rcond)
        hankel = build_hankel(log, cfg)
        pred = estimate_predictor(hankel, rcond=self.rcond)
        self.predictor_ = pred
        self.P1_ = pred.P1
        self.P2_ = pred.P2
        self.Gamma_ = pred.Gamma
        self.residual_ = pred.residual
        self.rank_report_ = pred.rank_report
        self.n_u_ = pred.n_u
        self.n_y_ = pred.n_y
        return self

    def predict(self, du_ini: np.ndarray, y_ini: np.ndarray,
                du_future: np.ndarray) -> np.ndarray:
        if not hasattr(self, "predictor_"):
            raise RuntimeError("predictor is not fitted")
        return predict_outputs(self.predictor_, du_ini, y_ini, du_future)


class IspcController(BaseEstimator):
    """Identification plus analytic control law in one estimator.

    ``fit(U, Y)`` estimates the predictor from the logged trajectory and
    precomputes the gains; ``make_runtime`` seeds the online buffers and
    ``step`` performs one sampled update.
    """

    def __init__(self, ts: float = 1e-3, T: int = 750, T_ini: int = 25,
                 N: int = 50, Q: np.ndarray | None = None,
                 P: np.ndarray | None = None, R: np.ndarray | None = None,
                 rcond: float | None = None):
        self.ts = ts
        self.T = T
        self.T_ini = T_ini
        self.N = N
        self.Q = Q
        self.P = P
        self.R = R
        self.rcond = rcond

    def _config(self, n_u: int, n_y: int) -> IspcConfig:
        kw = {}
        if self.Q is not None:
            kw["Q"] = self.Q
        if self.R is not None:
            kw["R"] = self.R
        return IspcConfig(ts=self.ts, T=self.T, T_ini=self.T_ini, N=self.N,
                          P=self.P, n_u=n_u, n_y=n_y, rcond=self.rcond,
                          **kw).validate()

    def fit(self, U: np.ndarray, Y: np.ndarray) -> "IspcController":
        log = IoLog(U, Y)
        cfg = self._config(log.u.shape[1], log.y.shape[1])
        hankel = build_hankel(log, cfg)
        pred = estimate_predictor(hankel, rcond=self.rcond)
        self.config_ = cfg
        self.predictor_ = pred
        self.gains_ = compute_gains(pred, cfg)
        self.rank_report_ = pred.rank_report
        return self

    def make_runtime(self, u_hist: np.ndarray | None = None,
                     y_hist: np.ndarray | None = None,
                     u_ss: np.ndarray | None = None,
                     y_ss: np.ndarray | None = None) -> IspcRuntime:
        if not hasattr(self, "gains_"):
            raise RuntimeError("controller is not fitted")
        if u_hist is not None and y_hist is not None:
            return IspcRuntime.from_history(self.T_ini, u_hist, y_hist)
        if u_ss is not None and y_ss is not None:
            return IspcRuntime.from_steady_state(self.T_ini, u_ss, y_ss)
        raise ValueError("provide either a history or a steady state to seed")

    def step(self, rt: IspcRuntime, y: np.ndarray, r_y: np.ndarray) -> np.ndarray:
        rt.observe(np.asarray(y, dtype=float))
        return control_step(rt, self.gains_, r_y)
