"""Gaussian-model IoU approximations and losses for oriented boxes.

KFIoU, MKIoU and the Gaussian Angle loss, checked against an exact
polygon-clipping SkewIoU, plus a box-fitting harness and sweep tools.
"""

from .errors import (DegenerateCovarianceError, DivergedError, InvalidArgumentError, InvalidBoxError,
                     NumericalFailureError, ObbLossError)
from .geometry import OrientedBox, area, canonicalize, clip_convex, corners, monte_carlo_iou, skew_iou
from .gaussian import (GaussianBox, ModulationParams, ab_terms, gauss_area, kalman_intersection, kfiou,
                       kfiou_closed_form, mkiou, to_gaussian)
from .losses import (LossBreakdown, LossConfig, Variant, ga_grad_theta, ga_loss, iou_loss, numeric_grad,
                     reg_loss, smooth_l1)
from .fitting import BatchSummary, FitSpec, FitTrace, batch_fit, fit
from .analysis import (SurfaceTable, SweepTable, consistency_metric, surface, sweep_angle, sweep_wh)

__version__ = "0.1.0"
