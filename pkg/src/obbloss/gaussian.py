"""Gaussian box model, Kalman covariance intersection, KFIoU and MKIoU.

A box ``(cx, cy, w, h, theta)`` maps to N(mu, Sigma) with
``Sigma = R diag(w^2/4, h^2/4) R^T``.  Covariances are handled as
``(s11, s12, s22)`` triples; every 2x2 operation is written out in closed
form.

Two independent routes lead to KFIoU:

* the matrix route (:func:`kfiou`): intersect covariances with the Kalman
  update, turn determinants into areas and form the IoU ratio;
* the closed form (:func:`ab_terms`): ``1 / (A + B - 1)`` with A and B
  written directly in extents and the angle difference.

:func:`mkiou` uses the matrix route's A and B (``S_p / S_pt`` and
``S_t / S_pt``), leaving :func:`ab_terms` as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple, Union

from .errors import DegenerateCovarianceError, InvalidArgumentError
from .geometry import OrientedBox, canonicalize

Cov = Tuple[float, float, float]

DEFAULT_ALPHA = 3.0
_DET_FLOOR = 1e-300


@dataclass(frozen=True)
class GaussianBox:
    mu: Tuple[float, float]
    sigma: Cov

    @property
    def det(self) -> float:
        s11, s12, s22 = self.sigma
        return s11 * s22 - s12 * s12


@dataclass(frozen=True)
class ModulationParams:
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        _check_alpha(self.alpha)


def _check_alpha(alpha):
    if not math.isfinite(alpha) or alpha >= 4.0:
        raise InvalidArgumentError(f"alpha must be finite and < 4, got {alpha!r}")


def _cov(w, h, theta) -> Cov:
    c, s = math.cos(theta), math.sin(theta)
    w2, h2 = w * w, h * h
    return (
        0.25 * (w2 * c * c + h2 * s * s),
        0.25 * (w2 - h2) * s * c,
        0.25 * (w2 * s * s + h2 * c * c),
    )


def to_gaussian(box: OrientedBox) -> GaussianBox:
    return GaussianBox((box.cx, box.cy), _cov(box.w, box.h, box.theta))


def _det(s: Cov) -> float:
    return s[0] * s[2] - s[1] * s[1]


def _check_pd(s: Cov, what="covariance"):
    d = _det(s)
    if not (s[0] > 0.0 and d > _DET_FLOOR) or not math.isfinite(d):
        raise DegenerateCovarianceError(f"{what} is not positive definite: {s!r}")
    return d


def gauss_area(g: Union[GaussianBox, Cov]) -> float:
    """Box area recovered from a covariance: ``4 sqrt(det Sigma)``."""
    s = g.sigma if isinstance(g, GaussianBox) else g
    return 4.0 * math.sqrt(_check_pd(s))


def kalman_intersection(sp: Cov, st: Cov) -> Cov:
    """``Sp - Sp (Sp + St)^-1 Sp`` for 2x2 symmetric covariances."""
    a, b, d = sp[0] + st[0], sp[1] + st[1], sp[2] + st[2]
    det = a * d - b * b
    if not det > _DET_FLOOR or not math.isfinite(det):
        raise DegenerateCovarianceError(f"singular covariance sum: {(a, b, d)!r}")
    # (Sp+St)^-1 = [[d, -b], [-b, a]] / det
    i11, i12, i22 = d / det, -b / det, a / det
    p11, p12, p22 = sp
    # M = (Sp+St)^-1 Sp
    m11 = i11 * p11 + i12 * p12
    m12 = i11 * p12 + i12 * p22
    m21 = i12 * p11 + i22 * p12
    m22 = i12 * p12 + i22 * p22
    # Sp M, symmetrised
    q11 = p11 * m11 + p12 * m21
    q12 = 0.5 * ((p11 * m12 + p12 * m22) + (p12 * m11 + p22 * m21))
    q22 = p12 * m12 + p22 * m22
    return (p11 - q11, p12 - q12, p22 - q22)


def _areas(pw, ph, pth, tw, th, tth):
    sp = _cov(pw, ph, pth)
    st = _cov(tw, th, tth)
    spt = kalman_intersection(sp, st)
    return gauss_area(sp), gauss_area(st), gauss_area(spt)


def _kfiou_raw(pw, ph, pth, tw, th, tth) -> float:
    s_p, s_t, s_pt = _areas(pw, ph, pth, tw, th, tth)
    return s_pt / (s_p + s_t - s_pt)


def _mkiou_raw(pw, ph, pth, tw, th, tth, alpha) -> float:
    s_p, s_t, s_pt = _areas(pw, ph, pth, tw, th, tth)
    return (4.0 - alpha) / (s_p / s_pt + s_t / s_pt - alpha)


def kfiou(p: OrientedBox, t: OrientedBox) -> float:
    """Kalman-filter IoU of the covariances alone; centers are ignored.

    Peaks at 1/3 when the boxes describe the same rectangle.
    """
    return _kfiou_raw(p.w, p.h, p.theta, t.w, t.h, t.theta)


def ab_terms(p: OrientedBox, t: OrientedBox) -> Tuple[float, float]:
    """Closed-form A and B with ``KFIoU = 1 / (A + B - 1)``.

    Both boxes are canonicalized first; the angle enters only through
    cos^2 and sin^2 of the difference, so the pi-period is harmless.
    """
    p, t = canonicalize(p), canonicalize(t)
    dth = p.theta - t.theta
    c2, s2 = math.cos(dth) ** 2, math.sin(dth) ** 2
    wp2, hp2, wt2, ht2 = p.w ** 2, p.h ** 2, t.w ** 2, t.h ** 2
    a = math.sqrt(1.0 + (wp2 * hp2) / (wt2 * ht2)
                  + (wp2 / wt2 + hp2 / ht2) * c2
                  + (wp2 / ht2 + hp2 / wt2) * s2)
    b = math.sqrt(1.0 + (wt2 * ht2) / (wp2 * hp2)
                  + (wt2 / wp2 + ht2 / hp2) * c2
                  + (wt2 / hp2 + ht2 / wp2) * s2)
    return a, b


def kfiou_closed_form(p: OrientedBox, t: OrientedBox) -> float:
    a, b = ab_terms(p, t)
    return 1.0 / (a + b - 1.0)


def mkiou(p: OrientedBox, t: OrientedBox,
          params: Union[ModulationParams, float] = DEFAULT_ALPHA) -> float:
    """Modulated KFIoU, ``(4 - alpha) / (A + B - alpha)``, valued in (0, 1]."""
    alpha = params.alpha if isinstance(params, ModulationParams) else float(params)
    _check_alpha(alpha)
    return _mkiou_raw(p.w, p.h, p.theta, t.w, t.h, t.theta, alpha)
