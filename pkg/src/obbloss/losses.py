"""Regression losses for oriented boxes.

``reg_loss`` combines Smooth L1 on the center offset, an IoU-style term
picked by ``LossConfig.variant`` and, for ``mk_ga``, the Gaussian Angle
correction.  Losses take boxes directly rather than anchor-encoded deltas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Union

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .gaussian import DEFAULT_ALPHA, _check_alpha, _kfiou_raw, _mkiou_raw
from .geometry import OrientedBox


class Variant(str, Enum):
    KF_LINEAR = "kf_linear"
    KF_EXP = "kf_exp"
    KF_NEGLOG = "kf_neglog"
    MK = "mk"
    MK_GA = "mk_ga"

    def __str__(self):
        return self.value


VARIANTS = tuple(v.value for v in Variant)


@dataclass(frozen=True)
class LossConfig:
    alpha: float = DEFAULT_ALPHA
    beta: float = 0.3
    lam: float = 3.0
    sl1_delta: float = 1.0
    variant: Variant = Variant.MK_GA

    def __post_init__(self):
        try:
            object.__setattr__(self, "variant", Variant(self.variant))
        except ValueError:
            raise InvalidArgumentError(
                f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}") from None
        _check_alpha(self.alpha)
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise InvalidArgumentError(f"beta must be >= 0, got {self.beta!r}")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise InvalidArgumentError(f"lambda must be > 0, got {self.lam!r}")
        if not (math.isfinite(self.sl1_delta) and self.sl1_delta > 0):
            raise InvalidArgumentError(f"sl1_delta must be > 0, got {self.sl1_delta!r}")

    def with_variant(self, variant) -> "LossConfig":
        return LossConfig(self.alpha, self.beta, self.lam, self.sl1_delta, Variant(variant))


@dataclass(frozen=True)
class LossBreakdown:
    center_term: float
    iou_term: float
    angle_term: float
    total: float


def smooth_l1(x: float, delta: float = 1.0) -> float:
    if not delta > 0:
        raise InvalidArgumentError(f"delta must be > 0, got {delta!r}")
    ax = abs(x)
    if ax < delta:
        return 0.5 * x * x / delta
    return ax - 0.5 * delta


def _ga_weight(tw, th, lam):
    r = tw / th
    q = r + 1.0 / r
    return math.exp(4.0 * lam - lam * q * q)


def _ga_raw(pth, tw, th, tth, beta, lam):
    return beta * _ga_weight(tw, th, lam) * math.sin(2.0 * (pth - tth)) ** 2


def ga_loss(p: OrientedBox, t: OrientedBox, cfg: LossConfig = LossConfig()) -> float:
    """Gaussian Angle loss.

    ``beta * exp(4 lam - lam (r + 1/r)^2) * sin^2(2 dtheta)`` with ``r`` the
    target's w/h.  The weight is 1 for a square target and vanishes quickly
    as the target elongates.  The raw angle difference is used: the loss
    has period pi/2 in it, so canonicalizing either box cannot change it.
    """
    return _ga_raw(p.theta, t.w, t.h, t.theta, cfg.beta, cfg.lam)


def ga_grad_theta(p: OrientedBox, t: OrientedBox, cfg: LossConfig = LossConfig()) -> float:
    """d ga_loss / d theta_p, including the beta factor."""
    return 2.0 * cfg.beta * _ga_weight(t.w, t.h, cfg.lam) * math.sin(4.0 * (p.theta - t.theta))


def _iou_term_raw(p, t, cfg: LossConfig) -> float:
    v = cfg.variant
    if v is Variant.MK or v is Variant.MK_GA:
        return 1.0 - _mkiou_raw(p[2], p[3], p[4], t[2], t[3], t[4], cfg.alpha)
    k = _kfiou_raw(p[2], p[3], p[4], t[2], t[3], t[4])
    if v is Variant.KF_LINEAR:
        return 1.0 - k
    if v is Variant.KF_EXP:
        return math.exp(1.0 - k) - 1.0
    if v is Variant.KF_NEGLOG:
        return -math.log(k)
    raise InvalidArgumentError(f"unknown variant {v!r}")


def iou_loss(p: OrientedBox, t: OrientedBox, cfg: LossConfig = LossConfig()) -> float:
    """IoU-style loss term for the configured variant.

    The ``kf_*`` variants act on raw KFIoU (max 1/3), so their minima are
    2/3, e^(2/3) - 1 and ln 3 rather than 0.
    """
    return _iou_term_raw(p.as_tuple(), t.as_tuple(), cfg)


def _reg_raw(p, t, cfg: LossConfig):
    d = cfg.sl1_delta
    center = smooth_l1(p[0] - t[0], d) + smooth_l1(p[1] - t[1], d)
    iou = _iou_term_raw(p, t, cfg)
    angle = _ga_raw(p[4], t[2], t[3], t[4], cfg.beta, cfg.lam) if cfg.variant is Variant.MK_GA else 0.0
    return center, iou, angle


def _reg_total_raw(p, t, cfg: LossConfig) -> float:
    c, i, a = _reg_raw(p, t, cfg)
    return c + i + a


def reg_loss(p: OrientedBox, t: OrientedBox, cfg: LossConfig = LossConfig()) -> LossBreakdown:
    c, i, a = _reg_raw(p.as_tuple(), t.as_tuple(), cfg)
    return LossBreakdown(c, i, a, c + i + a)


LossFn = Callable[[OrientedBox, OrientedBox, LossConfig], Union[float, LossBreakdown]]


def _scalar(value) -> float:
    return value.total if isinstance(value, LossBreakdown) else float(value)


def _central_diff(f, x0, step, relative=False) -> np.ndarray:
    # f takes a 5-tuple (cx, cy, w, h, theta)
    grad = np.empty(5)
    for i in range(5):
        hi = step * max(1.0, abs(x0[i])) if relative else step
        up, down = list(x0), list(x0)
        up[i] = x0[i] + hi
        down[i] = x0[i] - hi
        if i == 2 or i == 3:
            down[i] = max(down[i], 0.5 * x0[i])
        f_up, f_down = f(tuple(up)), f(tuple(down))
        if not (math.isfinite(f_up) and math.isfinite(f_down)):
            raise NumericalFailureError(f"loss is not finite near {x0!r} (coordinate {i})")
        grad[i] = (f_up - f_down) / (up[i] - down[i])
    return grad


def numeric_grad(loss: LossFn, p: OrientedBox, t: OrientedBox, cfg: LossConfig = LossConfig(),
                 step: float = 1e-6, relative: bool = False) -> np.ndarray:
    """Central-difference gradient of ``loss`` w.r.t. ``(cx, cy, w, h, theta)`` of ``p``.

    With ``relative=True`` each coordinate uses ``step * max(1, |x|)``.
    The lower w/h probe never drops below half the current extent.
    """
    if not step > 0:
        raise InvalidArgumentError(f"step must be > 0, got {step!r}")
    if not math.isfinite(_scalar(loss(p, t, cfg))):
        raise NumericalFailureError(f"loss is not finite at {p!r}")
    return _central_diff(lambda x: _scalar(loss(OrientedBox(*x), t, cfg)), p.as_tuple(), step, relative)
