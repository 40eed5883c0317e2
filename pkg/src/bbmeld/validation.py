"""Cross-validation over held-out GPS fixes for the melding model and the baselines."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from statistics import NormalDist
from typing import Iterable, Optional, Sequence

import numpy as np

from .baselines import conventional_correct, linear_interp
from .engine.meld import MeldConfig, meld, posterior_at
from .errors import MeldError, ValidationError
from .timeline import BiasBasis, GpsSeries, Track1D, validate_inputs

__all__ = [
    "METHODS",
    "PointRecord",
    "CvReport",
    "SweepRow",
    "holdout_blocks",
    "run_fold",
    "cross_validate",
    "loocv",
    "l5ocv",
    "order_sweep",
]

METHODS = ("bm", "conventional", "linear")
Z95 = NormalDist().inv_cdf(0.975)


@dataclass(frozen=True)
class PointRecord:
    t_index: int
    truth: float
    prediction: float
    sd: float
    covered: Optional[bool]

    def as_list(self) -> list:
        return [self.t_index, self.truth, self.prediction, None if math.isnan(self.sd) else self.sd, self.covered]


@dataclass(frozen=True)
class CvReport:
    """Held-out prediction summary for one method.

    ``truth`` in each record is the held-out GPS observation.  ``coverage_95`` is
    the share of held-out observations inside the pointwise 95% band of the
    true path; it is ``None`` for the baselines, which carry no uncertainty.
    """

    method: str
    held_out_count: int
    cv_rmse_km: float
    coverage_95: Optional[float]
    per_point: tuple
    flagged: tuple = ()

    @classmethod
    def from_records(cls, method: str, records: Sequence[PointRecord], flagged=()) -> "CvReport":
        records = tuple(sorted(records, key=lambda r: r.t_index))
        if records:
            err = np.array([r.prediction - r.truth for r in records])
            rmse = float(np.sqrt(np.mean(err ** 2)))
        else:
            rmse = float("nan")
        cov = None
        if method == "bm" and records:
            cov = float(np.mean([bool(r.covered) for r in records]))
        return cls(method, len(records), rmse, cov, records, tuple(flagged))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "held_out_count": self.held_out_count,
            "cv_rmse_km": self.cv_rmse_km,
            "coverage_95": self.coverage_95,
            "per_point": [r.as_list() for r in self.per_point],
            "flagged": [dict(f) for f in self.flagged],
        }


def holdout_blocks(K: int, size: int = 1) -> list:
    """Consecutive disjoint blocks of interior fix positions (0-based); the last may be shorter."""
    if size < 1:
        raise ValidationError("block size must be >= 1")
    interior = list(range(1, K - 1))
    return [interior[i:i + size] for i in range(0, len(interior), size)]


def _check_methods(methods: Iterable[str]) -> tuple:
    methods = tuple(methods)
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ValidationError(f"unknown CV methods {bad}; choose from {METHODS}")
    return methods


def run_fold(x: Track1D, y: GpsSeries, positions: Sequence[int], basis: BiasBasis,
             config: MeldConfig, methods: Sequence[str] = METHODS) -> dict:
    """Predict at the fixes ``positions`` (0-based) from all other fixes.

    The held-out values are dropped before anything else happens, so their
    content never reaches a method.  Returns ``{method: (pred, sd)}``.
    """
    positions = list(positions)
    if not positions or min(positions) < 1 or max(positions) > y.K - 2:
        raise ValidationError("only interior fixes can be held out")
    t_out = y.indices[positions]
    train = y.drop(positions)
    out = {}
    for m in methods:
        if m == "bm":
            mean, sd = posterior_at(x, train, t_out, basis, config)
            out[m] = (mean, sd)
        elif m == "conventional":
            out[m] = (conventional_correct(x, train).values[t_out - 1], np.full(len(t_out), np.nan))
        else:
            out[m] = (linear_interp(train, x.T).values[t_out - 1], np.full(len(t_out), np.nan))
    return out


def cross_validate(x: Track1D, y: GpsSeries, basis: Optional[BiasBasis] = None,
                   config: Optional[MeldConfig] = None, methods: Sequence[str] = METHODS,
                   block_size: int = 1, threads: int = 1) -> list:
    """Hold out each block of interior fixes in turn; one :class:`CvReport` per method.

    Hyperparameters are refitted in every fold.  A fold whose fit fails is
    skipped for every method and listed under ``flagged`` with the error.
    """
    config = config or MeldConfig()
    basis = basis or BiasBasis(config.q_order)
    methods = _check_methods(methods)
    validate_inputs(x, y)
    blocks = holdout_blocks(y.K, block_size)

    def work(item):
        i, block = item
        try:
            return i, block, run_fold(x, y, block, basis, config, methods), None
        except (MeldError, np.linalg.LinAlgError) as exc:
            return i, block, None, exc

    items = list(enumerate(blocks))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(it) for it in items]

    records = {m: [] for m in methods}
    flagged = []
    for i, block, preds, exc in sorted(results, key=lambda r: r[0]):
        if exc is not None:
            flagged.append({"fold": i, "t_index": [int(t) for t in y.indices[block]],
                            "error": type(exc).__name__, "message": str(exc)})
            continue
        for m in methods:
            mean, sd = preds[m]
            for j, pos in enumerate(block):
                obs = float(y.values[pos])
                s = float(sd[j])
                covered = bool(abs(obs - mean[j]) <= Z95 * s) if m == "bm" else None
                records[m].append(PointRecord(int(y.indices[pos]), obs, float(mean[j]), s, covered))
    return [CvReport.from_records(m, records[m], flagged) for m in methods]


def loocv(x, y, basis=None, config=None, methods=METHODS, threads: int = 1) -> list:
    """Leave-one-out over interior fixes."""
    if y.K < 4:
        raise ValidationError(f"leave-one-out needs K >= 4 fixes, got {y.K}")
    return cross_validate(x, y, basis, config, methods, 1, threads)


def l5ocv(x, y, basis=None, config=None, methods=METHODS, threads: int = 1) -> list:
    """Leave-five-out over consecutive disjoint blocks of interior fixes."""
    if y.K < 8:
        raise ValidationError(f"leave-five-out needs K >= 8 fixes, got {y.K}")
    return cross_validate(x, y, basis, config, methods, 5, threads)


@dataclass(frozen=True)
class SweepRow:
    Q: int
    sigma2_H_hat: float
    sigma2_D_hat: float
    apse_km: float
    cv_rmse: float
    coverage: Optional[float]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def order_sweep(x: Track1D, y: GpsSeries, config: Optional[MeldConfig] = None,
                q_range: Iterable[int] = range(7), scheme: str = "loo", threads: int = 1):
    """Refit, meld and cross-validate for each bias order.

    Returns ``(rows, flagged)``; a failing order is left out of ``rows`` and
    recorded in ``flagged``.
    """
    config = config or MeldConfig()
    block = {"loo": 1, "l5o": 5}.get(scheme)
    if block is None:
        raise ValidationError(f"unknown CV scheme {scheme!r}")
    rows, flagged = [], []
    for q in q_range:
        cfg = replace(config, q_order=int(q))
        basis = BiasBasis(int(q))
        try:
            track = meld(x, y, basis, cfg)
            rep = cross_validate(x, y, basis, cfg, ("bm",), block, threads)[0]
        except MeldError as exc:
            flagged.append({"Q": int(q), "error": type(exc).__name__, "message": str(exc)})
            continue
        rows.append(SweepRow(int(q), track.phi_hat.sigma2_H, track.phi_hat.sigma2_D, track.apse,
                             rep.cv_rmse_km, rep.coverage_95))
    return rows, flagged
