"""On-disk form of an identified predictor and its precomputed gains.

A single JSON document with a format tag, the controller configuration,
every matrix as {"shape": [rows, cols], "data": [row-major floats]}, the
rank report, and free-form metadata. Serialization is deterministic
(sorted keys, shortest round-trip float repr), so identical identifications
produce byte-identical artifacts.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ispc import ControllerGains, IspcConfig, Predictor, RankReport

__all__ = ["save_artifact", "load_artifact", "ARTIFACT_FORMAT"]

ARTIFACT_FORMAT = "weakgrid-ispc-artifact"
ARTIFACT_VERSION = 1


def _matrix(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=float)
    return {"shape": list(m.shape), "data": m.ravel().tolist()}


def _unmatrix(obj: dict, key: str) -> np.ndarray:
    try:
        shape = obj[key]["shape"]
        data = obj[key]["data"]
    except (KeyError, TypeError):
        raise ValueError(f"artifact is missing matrix field {key!r}")
    return np.asarray(data, dtype=float).reshape(shape)


def save_artifact(path, cfg: IspcConfig, predictor: Predictor,
                  gains: ControllerGains, meta: dict | None = None) -> None:
    doc = {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "config": {
            "ts": cfg.ts,
            "T": cfg.T,
            "T_ini": cfg.T_ini,
            "N": cfg.N,
            "Q": _matrix(cfg.Q),
            "P": _matrix(cfg.terminal_weight),
            "R": _matrix(cfg.R),
            "n_u": cfg.n_u,
            "n_y": cfg.n_y,
        },
        "predictor": {
            "P1": _matrix(predictor.P1),
            "P2": _matrix(predictor.P2),
            "Gamma": _matrix(predictor.Gamma),
            "residual": predictor.residual,
        },
        "rank_report": predictor.rank_report.to_dict(),
        "gains": {
            "K1": _matrix(gains.K1),
            "K2": _matrix(gains.K2),
            "Kr": _matrix(gains.Kr),
        },
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_artifact(path) -> tuple[IspcConfig, Predictor, ControllerGains, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != ARTIFACT_FORMAT:
        raise ValueError(f"{path} is not a {ARTIFACT_FORMAT} file")
    c = doc["config"]
    cfg = IspcConfig(ts=c["ts"], T=c["T"], T_ini=c["T_ini"], N=c["N"],
                     Q=_unmatrix(c, "Q"), P=_unmatrix(c, "P"),
                     R=_unmatrix(c, "R"), n_u=c["n_u"], n_y=c["n_y"])
    rr = doc["rank_report"]
    report = RankReport(
        stacked_rank=rr["stacked_rank"], stacked_rows=rr["stacked_rows"],
        input_rank=rr["input_rank"], input_rows=rr["input_rows"],
        n_cols=rr["n_cols"], full_row_rank=rr["full_row_rank"],
        stacked_full_row_rank=rr["stacked_full_row_rank"])
    p = doc["predictor"]
    predictor = Predictor(
        P1=_unmatrix(p, "P1"), P2=_unmatrix(p, "P2"),
        Gamma=_unmatrix(p, "Gamma"),
        T_ini=cfg.T_ini, N=cfg.N, n_u=cfg.n_u, n_y=cfg.n_y,
        residual=p["residual"], rank_report=report)
    g = doc["gains"]
    gains = ControllerGains(
        K1=_unmatrix(g, "K1"), K2=_unmatrix(g, "K2"), Kr=_unmatrix(g, "Kr"),
        n_u=cfg.n_u, n_y=cfg.n_y, T_ini=cfg.T_ini, N=cfg.N)
    return cfg, predictor, gains, doc.get("meta", {})
