"""Gradient-descent box fitting against a fixed target.

The optimizer works on ``(cx, cy, log w, log h, theta)`` so extents stay
positive.  Theta is never wrapped here; any canonicalization happens inside
the losses, which is what makes boundary continuity observable.  Every
step records the exact SkewIoU, although the objective never looks at it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import DivergedError, InvalidArgumentError, InvalidBoxError, NumericalFailureError
from .geometry import HALF_PI, OrientedBox, _skew_iou_raw, canonicalize, wrap_half_pi
from .losses import LossConfig, _central_diff, _reg_total_raw

SCENARIOS = ("random", "boundary", "square")
TRACE_COLUMNS = ("step", "cx", "cy", "w", "h", "theta", "loss", "skew_iou")

MAX_HALVINGS = 10


@dataclass(frozen=True)
class FitSpec:
    target: OrientedBox
    init: Optional[OrientedBox] = None
    loss_cfg: LossConfig = LossConfig()
    max_steps: int = 2000
    learning_rate: float = 0.05
    momentum: float = 0.9
    stop_iou: float = 0.99
    seed: int = 0
    grad_step: float = 1e-6

    def __post_init__(self):
        if self.max_steps < 1:
            raise InvalidArgumentError("max_steps must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise InvalidArgumentError("momentum must lie in [0, 1)")
        if not 0 < self.stop_iou <= 1:
            raise InvalidArgumentError("stop_iou must lie in (0, 1]")
        if self.init is None:
            # draw a perturbed init from the seed
            init = perturb(self.target, np.random.default_rng(self.seed))
            object.__setattr__(self, "init", init)


@dataclass
class StepRecord:
    step: int
    box: Tuple[float, float, float, float, float]
    loss: float
    skew_iou: float
    grad: Optional[Tuple[float, ...]] = None  # w.r.t. (cx, cy, w, h, theta); None on the final record
    halvings: int = 0


@dataclass
class FitTrace:
    steps: List[StepRecord] = field(default_factory=list)
    converged: bool = False
    final_iou: float = 0.0
    final_angle_residual: float = 0.0

    @property
    def final_box(self) -> OrientedBox:
        return OrientedBox(*self.steps[-1].box)

    @property
    def max_theta_grad(self) -> float:
        g = [abs(r.grad[4]) for r in self.steps if r.grad is not None]
        return max(g) if g else 0.0

    def rows(self, degrees=False):
        for r in self.steps:
            cx, cy, w, h, th = r.box
            yield (r.step, cx, cy, w, h, math.degrees(th) if degrees else th, r.loss, r.skew_iou)

    def write_csv(self, path_or_file, degrees=False):
        """Write ``step,cx,cy,w,h,theta,loss,skew_iou`` rows."""
        _with_text(path_or_file, lambda f: _write_csv(f, self.rows(degrees)))

    def write_jsonl(self, path_or_file, degrees=False):
        def emit(f):
            for row in self.rows(degrees):
                f.write(json.dumps(dict(zip(TRACE_COLUMNS, row))) + "\n")
        _with_text(path_or_file, emit)


def _write_csv(f, rows):
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for row in rows:
        writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def _with_text(path_or_file, fn):
    if hasattr(path_or_file, "write"):
        fn(path_or_file)
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="") as f:
            fn(f)


def is_square(box: OrientedBox, rtol=1e-9) -> bool:
    return abs(box.w - box.h) <= rtol * max(box.w, box.h)


def angle_residual(box: OrientedBox, target: OrientedBox) -> float:
    """Angle error folded by the target's symmetry: modulo pi/2 for squares, pi otherwise."""
    period = HALF_PI if is_square(target) else math.pi
    d = (canonicalize(box).theta - canonicalize(target).theta) % period
    return min(d, period - d)


def perturb(target: OrientedBox, rng: np.random.Generator, scale: float = 1.0,
            center=0.5, extent=0.3, angle=0.5) -> OrientedBox:
    """Random init near ``target``: +-center offset, +-extent fraction, +-angle rad."""
    u = rng.uniform(-1.0, 1.0, size=5) * scale
    return OrientedBox(target.cx + center * u[0], target.cy + center * u[1],
                       target.w * (1 + extent * u[2]), target.h * (1 + extent * u[3]),
                       target.theta + angle * u[4])


def _box_from_params(x) -> Tuple[float, float, float, float, float]:
    return (x[0], x[1], math.exp(x[2]), math.exp(x[3]), x[4])


def fit(spec: FitSpec) -> FitTrace:
    """Minimize ``reg_loss`` of a moving box against ``spec.target``.

    Momentum gradient descent with step halving: a step that raises the
    loss is halved up to ten times and then taken anyway.  Stops once the
    exact SkewIoU reaches ``stop_iou`` or after ``max_steps`` updates.
    """
    cfg = spec.loss_cfg
    t = spec.target.as_tuple()
    init = spec.init
    x = np.array([init.cx, init.cy, math.log(init.w), math.log(init.h), init.theta])
    v = np.zeros(5)
    trace = FitTrace()

    def objective(box):
        return _reg_total_raw(box, t, cfg)

    def finish(converged):
        trace.converged = converged
        last = trace.steps[-1]
        trace.final_iou = last.skew_iou
        trace.final_angle_residual = angle_residual(OrientedBox(*last.box), spec.target)
        return trace

    def diverged(msg):
        if trace.steps:
            finish(False)
        return DivergedError(msg, trace)

    box = _box_from_params(x)
    loss = objective(box)
    halvings = 0
    for k in range(spec.max_steps + 1):
        if not math.isfinite(loss):
            raise diverged(f"non-finite loss at step {k}")
        iou = _skew_iou_raw(box, t)
        rec = StepRecord(k, box, loss, iou, halvings=halvings)
        trace.steps.append(rec)
        if iou >= spec.stop_iou:
            return finish(True)
        if k == spec.max_steps:
            break
        try:
            g_box = _central_diff(objective, box, spec.grad_step, relative=True)
        except NumericalFailureError as exc:
            raise diverged(str(exc)) from exc
        rec.grad = tuple(g_box)
        # chain rule for the log extents
        g = g_box.copy()
        g[2] *= box[2]
        g[3] *= box[3]
        v_new = spec.momentum * v - spec.learning_rate * g
        halvings = 0
        while True:
            x_new = x + v_new
            try:
                box_new = _box_from_params(x_new)
                loss_new = objective(box_new)
            except (OverflowError, InvalidBoxError):
                box_new, loss_new = None, math.inf
            if loss_new <= loss or halvings >= MAX_HALVINGS:
                break
            v_new = 0.5 * v_new
            halvings += 1
        if box_new is None:
            raise diverged(f"parameters overflowed at step {k + 1}")
        x, v, box, loss = x_new, v_new, box_new, loss_new
    return finish(False)


@dataclass
class FitOutcome:
    final_iou: float
    converged: bool
    steps: int
    angle_residual: float
    max_theta_grad: float
    initial_iou: float
    diverged: bool = False


@dataclass
class BatchSummary:
    scenario: str
    n: int
    convergence_rate: float
    mean_final_iou: float
    mean_angle_residual: float
    diverged: int
    outcomes: List[FitOutcome]

    def success_rate(self, iou_threshold: float) -> float:
        return sum(o.final_iou >= iou_threshold for o in self.outcomes) / self.n


def scenario_pair(scenario: str, rng: np.random.Generator, perturbation: float = 1.0):
    """Draw a (target, init) pair for one of the batch scenarios."""
    cx, cy = rng.uniform(-2.0, 2.0, size=2)
    g = rng.uniform(1.0, 4.0)
    if scenario == "square":
        target = OrientedBox(cx, cy, g, g, rng.uniform(-HALF_PI, HALF_PI))
        return target, perturb(target, rng, perturbation)
    ar = rng.uniform(1.2, 6.0)
    w, h = g * math.sqrt(ar), g / math.sqrt(ar)
    if scenario == "random":
        target = OrientedBox(cx, cy, w, h, rng.uniform(-HALF_PI, HALF_PI))
        return target, perturb(target, rng, perturbation)
    if scenario == "boundary":
        side = 1.0 if rng.random() < 0.5 else -1.0
        target = OrientedBox(cx, cy, w, h, side * (HALF_PI - rng.uniform(0.0, 0.1)))
        init = perturb(target, rng, perturbation, angle=0.0)
        # push the init across +-pi/2, then hand it over in wrapped form
        cross = side * rng.uniform(0.1, 0.5) * perturbation
        init = init.replace(theta=wrap_half_pi(target.theta + cross))
        return target, init
    raise InvalidArgumentError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")


def _run_one(args):
    scenario, cfg, seq, perturbation, fit_kwargs = args
    rng = np.random.default_rng(seq)
    target, init = scenario_pair(scenario, rng, perturbation)
    spec = FitSpec(target, init, cfg, **fit_kwargs)
    initial_iou = _skew_iou_raw(init.as_tuple(), target.as_tuple())
    try:
        tr = fit(spec)
    except DivergedError as exc:
        tr = exc.trace
        return FitOutcome(tr.final_iou, False, len(tr.steps) - 1, tr.final_angle_residual,
                          tr.max_theta_grad, initial_iou, diverged=True)
    return FitOutcome(tr.final_iou, tr.converged, len(tr.steps) - 1, tr.final_angle_residual,
                      tr.max_theta_grad, initial_iou)


def batch_fit(n: int, scenario: str, loss_cfg: LossConfig = LossConfig(), seed: int = 0,
              perturbation: float = 1.0, workers: int = 1, **fit_kwargs) -> BatchSummary:
    """Run ``n`` independent fits drawn from ``scenario`` and summarize them.

    Per-fit seeds are spawned from ``seed``, so results do not depend on
    ``workers``.  ``perturbation=0`` starts every fit at its target.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    if scenario not in SCENARIOS:
        raise InvalidArgumentError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    seqs = np.random.SeedSequence(seed).spawn(n)
    jobs = [(scenario, loss_cfg, s, perturbation, fit_kwargs) for s in seqs]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_one, jobs))
    else:
        outcomes = [_run_one(j) for j in jobs]
    return BatchSummary(
        scenario=scenario,
        n=n,
        convergence_rate=sum(o.converged for o in outcomes) / n,
        mean_final_iou=float(np.mean([o.final_iou for o in outcomes])),
        mean_angle_residual=float(np.mean([o.angle_residual for o in outcomes])),
        diverged=sum(o.diverged for o in outcomes),
        outcomes=outcomes,
    )
