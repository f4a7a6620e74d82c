"""Sensitivity sweeps, loss surfaces and the consistency metric.

A sweep varies one thing about a predicted box relative to a fixed base
box and tabulates the exact SkewIoU next to the approximate IoUs
(``3 * KFIoU`` and MKIoU at each requested alpha).  Tables serialize to
CSV or JSON with the same column names.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import InvalidArgumentError
from .gaussian import _check_alpha, _kfiou_raw, _mkiou_raw
from .geometry import HALF_PI, OrientedBox, _skew_iou_raw
from .losses import LossConfig, _ga_raw

DEFAULT_ALPHAS = (3.0, 2.5, 2.0, 1.5, 1.0)
DEFAULT_WH_BASE = OrientedBox(0.0, 0.0, 4.0, 2.0, 0.0)
DEFAULT_ANGLE_BASES = {
    1: OrientedBox(0.0, 0.0, 2.0, 2.0, 0.0),
    2: OrientedBox(0.0, 0.0, 4.0, 2.0, 0.0),
    4: OrientedBox(0.0, 0.0, 4.0, 1.0, 0.0),
}


def mkiou_column(alpha: float) -> str:
    return f"mkiou_a{alpha:g}"


@dataclass
class SweepTable:
    control: str
    unit: str
    columns: List[str]
    rows: np.ndarray
    metadata: Dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.rows[:, self.columns.index(name)]
        except ValueError:
            raise InvalidArgumentError(
                f"unknown column {name!r}; have {', '.join(self.columns)}") from None

    def variant_columns(self) -> List[str]:
        return list(self.columns[2:])

    def to_records(self) -> List[dict]:
        return [dict(zip(self.columns, map(float, r))) for r in self.rows]


@dataclass
class SurfaceTable:
    loss_name: str
    aspect_ratios: np.ndarray
    dtheta_deg: np.ndarray
    values: np.ndarray  # shape (len(aspect_ratios), len(dtheta_deg))
    metadata: Dict = field(default_factory=dict)

    columns = ("aspect_ratio", "dtheta_deg", "loss")

    def triples(self):
        for i, ar in enumerate(self.aspect_ratios):
            for j, d in enumerate(self.dtheta_deg):
                yield float(ar), float(d), float(self.values[i, j])

    def to_records(self) -> List[dict]:
        return [dict(zip(self.columns, t)) for t in self.triples()]


def _check_steps(steps):
    if int(steps) != steps or steps < 2:
        raise InvalidArgumentError(f"steps must be an integer >= 2, got {steps!r}")


def _check_alphas(alphas):
    if len(alphas) == 0:
        raise InvalidArgumentError("need at least one alpha")
    for a in alphas:
        _check_alpha(a)


def _iou_row(pred: Tuple, base: Tuple, alphas) -> List[float]:
    row = [_skew_iou_raw(pred, base), 3.0 * _kfiou_raw(pred[2], pred[3], pred[4], base[2], base[3], base[4])]
    row += [_mkiou_raw(pred[2], pred[3], pred[4], base[2], base[3], base[4], a) for a in alphas]
    return row


def sweep_wh(base: OrientedBox = DEFAULT_WH_BASE, scale_range=(0.5, 2.0), steps: int = 151,
             alphas: Sequence[float] = DEFAULT_ALPHAS) -> SweepTable:
    """Scale both extents of ``base`` by a common factor; same center and angle."""
    lo, hi = map(float, scale_range)
    if not (0 < lo < hi and math.isfinite(hi)):
        raise InvalidArgumentError(f"scale range must satisfy 0 < lo < hi, got {scale_range!r}")
    _check_steps(steps)
    _check_alphas(alphas)
    b = base.as_tuple()
    rows = []
    for s in np.linspace(lo, hi, int(steps)):
        pred = (b[0], b[1], b[2] * s, b[3] * s, b[4])
        rows.append([float(s)] + _iou_row(pred, b, alphas))
    return SweepTable(
        control="scale", unit="ratio",
        columns=["scale", "skew_iou", "kfiou3"] + [mkiou_column(a) for a in alphas],
        rows=np.array(rows),
        metadata={"base": b, "alphas": list(alphas), "kind": "wh"},
    )


def sweep_angle(base: OrientedBox = DEFAULT_ANGLE_BASES[4], theta_range=(-HALF_PI, HALF_PI),
                steps: int = 181, alphas: Sequence[float] = DEFAULT_ALPHAS) -> SweepTable:
    """Rotate ``base`` by each angle offset in ``theta_range`` (radians).

    The control column is reported in degrees.
    """
    lo, hi = map(float, theta_range)
    eps = 1e-12
    if not (-HALF_PI - eps <= lo < hi <= HALF_PI + eps):
        raise InvalidArgumentError(f"theta range must lie within [-pi/2, pi/2], got {theta_range!r}")
    _check_steps(steps)
    _check_alphas(alphas)
    b = base.as_tuple()
    rows = []
    for d in np.linspace(lo, hi, int(steps)):
        pred = (b[0], b[1], b[2], b[3], b[4] + d)
        rows.append([math.degrees(d)] + _iou_row(pred, b, alphas))
    return SweepTable(
        control="dtheta_deg", unit="deg",
        columns=["dtheta_deg", "skew_iou", "kfiou3"] + [mkiou_column(a) for a in alphas],
        rows=np.array(rows),
        metadata={"base": b, "alphas": list(alphas), "kind": "angle"},
    )


SURFACE_LOSSES = ("mk", "ga")


def surface(loss_name: str = "ga", ar_range=(1.0, 5.0), dtheta_range=(0.0, math.pi),
            grid=(41, 181), cfg: LossConfig = LossConfig()) -> SurfaceTable:
    """Loss over (target aspect ratio, angle offset).

    The target is ``(0, 0, sqrt(AR), 1/sqrt(AR), 0)`` (unit area) and the
    prediction is the same box rotated by the offset.  ``mk`` is
    ``1 - MKIoU`` at ``cfg.alpha``; ``ga`` is the Gaussian Angle loss.
    """
    if loss_name not in SURFACE_LOSSES:
        raise InvalidArgumentError(f"unknown surface loss {loss_name!r}; expected one of {SURFACE_LOSSES}")
    ar_lo, ar_hi = map(float, ar_range)
    if not (1.0 <= ar_lo <= ar_hi and math.isfinite(ar_hi)):
        raise InvalidArgumentError(f"aspect-ratio range must lie in [1, inf), got {ar_range!r}")
    d_lo, d_hi = map(float, dtheta_range)
    if not (math.isfinite(d_lo) and math.isfinite(d_hi) and d_lo <= d_hi):
        raise InvalidArgumentError(f"bad angle range {dtheta_range!r}")
    n_ar, n_th = grid
    if n_ar < 1 or n_th < 1:
        raise InvalidArgumentError(f"grid must be at least 1x1, got {grid!r}")
    ars = np.linspace(ar_lo, ar_hi, int(n_ar))
    dths = np.linspace(d_lo, d_hi, int(n_th))
    values = np.empty((len(ars), len(dths)))
    for i, ar in enumerate(ars):
        w, h = math.sqrt(ar), 1.0 / math.sqrt(ar)
        for j, d in enumerate(dths):
            if loss_name == "mk":
                values[i, j] = 1.0 - _mkiou_raw(w, h, d, w, h, 0.0, cfg.alpha)
            else:
                values[i, j] = _ga_raw(d, w, h, 0.0, cfg.beta, cfg.lam)
    return SurfaceTable(loss_name, ars, np.degrees(dths), values,
                        metadata={"alpha": cfg.alpha, "beta": cfg.beta, "lambda": cfg.lam})


def consistency_metric(table: SweepTable, variant_column: str) -> float:
    """Mean absolute gap between ``variant_column`` and the exact SkewIoU column."""
    col = table.column(variant_column)
    return float(np.mean(np.abs(col - table.column("skew_iou"))))


def consistency_summary(table: SweepTable) -> Dict[str, float]:
    return {c: consistency_metric(table, c) for c in table.columns[2:]}


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(f, columns: Sequence[str], rows) -> None:
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(v) for v in r])


def write_json(f, columns: Sequence[str], rows, metadata=None) -> None:
    doc = {"columns": list(columns), "rows": [dict(zip(columns, map(float, r))) for r in rows]}
    if metadata is not None:
        doc["metadata"] = metadata
    json.dump(doc, f, indent=1, sort_keys=False)
    f.write("\n")
