"""Command-line front end.

Subcommands: ``iou``, ``sweep``, ``surface``, ``fit``, ``batch``.  Angles
are in degrees everywhere on the command line and in files written here.

Exit codes: 0 success, 1 usage error, 2 data / I/O error, 3 numerical
failure or divergence.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import sys
from typing import List, Optional

from . import analysis
from .errors import DivergedError, InvalidArgumentError, InvalidBoxError, NumericalFailureError, ObbLossError
from .fitting import FitSpec, fit
from .gaussian import kfiou, mkiou
from .geometry import OrientedBox, skew_iou
from .losses import VARIANTS, LossConfig, ga_loss, iou_loss, reg_loss

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

BOX_FIELDS = ("cx", "cy", "w", "h", "theta_deg")
BATCH_CSV_COLUMNS = ("id",) + tuple(f"pred_{k}" for k in BOX_FIELDS) + tuple(f"target_{k}" for k in BOX_FIELDS)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def fmt(x: float) -> str:
    """Number formatting for human-readable output: rounded to 10 decimals."""
    return repr(round(float(x), 10))


def parse_box_literal(text: str) -> OrientedBox:
    """``"cx,cy,w,h,theta_deg"`` -> box.  Malformed text is a usage error,
    a well-formed but invalid box (e.g. w <= 0) a data error."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 5:
        raise UsageError(f"box literal needs 5 comma-separated numbers (cx,cy,w,h,theta_deg), got {text!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"box literal has a non-numeric field: {text!r}") from None
    try:
        return OrientedBox.from_degrees(*vals)
    except InvalidBoxError as exc:
        raise DataError(f"invalid box {text!r}: {exc}") from None


def _parse_pair(text: str, what: str, conv=float):
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"{what} must be 'lo,hi', got {text!r}")
    try:
        return tuple(conv(p) for p in parts)
    except ValueError:
        raise UsageError(f"{what} must be numeric, got {text!r}") from None


def _parse_grid(text: str):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise UsageError(f"grid must look like 41x181, got {text!r}")
    try:
        n = tuple(int(p) for p in parts)
    except ValueError:
        raise UsageError(f"grid must look like 41x181, got {text!r}") from None
    if min(n) < 1:
        raise UsageError("grid dimensions must be >= 1")
    return n


def _loss_cfg(args, variant=None) -> LossConfig:
    alphas = args.alpha or [3.0]
    return LossConfig(alpha=alphas[0], beta=args.beta, lam=args.lam, sl1_delta=args.sl1_delta,
                      variant=variant or args.variant)


def _add_loss_flags(p, repeatable_alpha=True):
    p.add_argument("--alpha", type=float, action="append",
                   help="modulation factor (< 4); repeatable%s. Default 3" %
                        (", the first one drives the losses" if repeatable_alpha else ""))
    p.add_argument("--beta", type=float, default=0.3, help="GA loss weight (default 0.3)")
    p.add_argument("--lambda", dest="lam", type=float, default=3.0, help="GA sharpness (default 3)")
    p.add_argument("--sl1-delta", type=float, default=1.0, help="Smooth L1 transition point (default 1)")
    p.add_argument("--variant", choices=VARIANTS, default="mk_ga", help="loss variant (default mk_ga)")


@contextlib.contextmanager
def _open_out(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
        return
    try:
        f = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None
    with f:
        yield f


# -- iou -------------------------------------------------------------------

def pair_report(pred: OrientedBox, target: OrientedBox, cfg: LossConfig, alphas) -> dict:
    """Every IoU and loss value for one pair, keyed by output column name."""
    out = {"skew_iou": skew_iou(pred, target)}
    k = kfiou(pred, target)
    out["kfiou"] = k
    out["kfiou3"] = 3.0 * k
    for a in alphas:
        out[analysis.mkiou_column(a)] = mkiou(pred, target, a)
    for v in VARIANTS:
        out[f"loss_{v}"] = iou_loss(pred, target, cfg.with_variant(v))
    out["ga_loss"] = ga_loss(pred, target, cfg)
    br = reg_loss(pred, target, cfg)
    out["center_loss"] = br.center_term
    out["reg_loss"] = br.total
    return out


def cmd_iou(args) -> int:
    pred = parse_box_literal(args.pred)
    target = parse_box_literal(args.target)
    cfg = _loss_cfg(args)
    rep = pair_report(pred, target, cfg, args.alpha or [3.0])
    if args.format == "json":
        json.dump(rep, sys.stdout, indent=1)
        sys.stdout.write("\n")
    else:
        width = max(map(len, rep))
        for key, val in rep.items():
            print(f"{key:<{width}}  {fmt(val)}")
    return EXIT_OK


# -- sweep / surface -------------------------------------------------------

def cmd_sweep(args) -> int:
    alphas = args.alpha or list(analysis.DEFAULT_ALPHAS)
    if args.steps is None:
        args.steps = 151 if args.kind == "wh" else 181
    if args.kind == "wh":
        base = parse_box_literal(args.base or "0,0,4,2,0")
        lo, hi = _parse_pair(args.range or "0.5,2.0", "--range")
        table = analysis.sweep_wh(base, (lo, hi), args.steps, alphas)
    else:
        base = parse_box_literal(args.base or "0,0,4,1,0")
        lo, hi = _parse_pair(args.range or "-90,90", "--range")
        table = analysis.sweep_angle(base, (math.radians(lo), math.radians(hi)), args.steps, alphas)
    with _open_out(args.out) as f:
        if args.format == "json":
            analysis.write_json(f, table.columns, table.rows)
        else:
            analysis.write_csv(f, table.columns, table.rows)
    report = sys.stdout if args.out not in (None, "-") else sys.stderr
    for col, val in analysis.consistency_summary(table).items():
        print(f"consistency {col} {fmt(val)}", file=report)
    return EXIT_OK


def cmd_surface(args) -> int:
    cfg = _loss_cfg(args)
    ar = _parse_pair(args.ar_range, "--ar-range")
    d_lo, d_hi = _parse_pair(args.dtheta_range, "--dtheta-range")
    table = analysis.surface(args.loss, ar, (math.radians(d_lo), math.radians(d_hi)),
                             _parse_grid(args.grid), cfg)
    with _open_out(args.out) as f:
        if args.format == "json":
            analysis.write_json(f, table.columns, table.triples())
        else:
            analysis.write_csv(f, table.columns, table.triples())
    report = sys.stdout if args.out not in (None, "-") else sys.stderr
    print(f"surface {args.loss} cells={table.values.size} min={fmt(table.values.min())} "
          f"max={fmt(table.values.max())}", file=report)
    return EXIT_OK


# -- fit -------------------------------------------------------------------

def cmd_fit(args) -> int:
    target = parse_box_literal(args.target)
    init = parse_box_literal(args.init) if args.init else None
    spec = FitSpec(target, init, _loss_cfg(args), max_steps=args.max_steps, learning_rate=args.lr,
                   momentum=args.momentum, stop_iou=args.stop_iou, seed=args.seed)
    code = EXIT_OK
    try:
        trace = fit(spec)
    except DivergedError as exc:
        trace, code = exc.trace, EXIT_NUMERIC
    if args.trace:
        with _open_out(args.trace) as f:
            if args.format == "json":
                trace.write_jsonl(f, degrees=True)
            else:
                trace.write_csv(f, degrees=True)
    if not trace.steps:
        print("diverged step=0", file=sys.stderr)
        return code
    status = "diverged" if code else ("converged" if trace.converged else "not-converged")
    print(f"{status} step={len(trace.steps) - 1} iou={fmt(trace.final_iou)} "
          f"angle_residual_deg={fmt(math.degrees(trace.final_angle_residual))}")
    return code


# -- batch -----------------------------------------------------------------

def _box_from_mapping(d, where):
    if not isinstance(d, dict):
        raise ValueError(f"{where} must be an object with keys {', '.join(BOX_FIELDS)}")
    missing = [k for k in BOX_FIELDS if k not in d]
    if missing:
        raise ValueError(f"{where} missing {', '.join(missing)}")
    vals = []
    for k in BOX_FIELDS:
        v = d[k]
        if isinstance(v, bool) or not isinstance(v, (int, float, str)):
            raise ValueError(f"{where}.{k} is not a number")
        vals.append(float(v))
    return OrientedBox.from_degrees(*vals)


def read_records(path: str, input_format: str = "auto"):
    """Parse a BoxPairRecord file.

    Returns ``(records, errors, total)`` where records are
    ``(line_no, id, pred, target)`` and errors ``(line_no, message)``.
    """
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    if input_format == "auto":
        input_format = "csv" if path.lower().endswith(".csv") else "jsonl"
    records, errors = [], []
    seen = set()

    def accept(line_no, rid, make):
        try:
            if not isinstance(rid, str) or not rid:
                raise ValueError("id must be a non-empty string")
            if rid in seen:
                raise ValueError(f"duplicate id {rid!r}")
            pred, target = make()
        except (ValueError, InvalidBoxError) as exc:
            errors.append((line_no, str(exc)))
            return
        seen.add(rid)
        records.append((line_no, rid, pred, target))

    if input_format == "jsonl":
        lines = [(i, ln) for i, ln in enumerate(text.splitlines(), 1) if ln.strip()]
        for line_no, ln in lines:
            try:
                obj = json.loads(ln)
            except json.JSONDecodeError as exc:
                errors.append((line_no, f"bad JSON: {exc.msg}"))
                continue
            if not isinstance(obj, dict):
                errors.append((line_no, "record must be a JSON object"))
                continue
            accept(line_no, obj.get("id"),
                   lambda: (_box_from_mapping(obj.get("pred"), "pred"),
                            _box_from_mapping(obj.get("target"), "target")))
        total = len(lines)
    else:
        reader = csv.reader(io.StringIO(text))
        rows = [(reader.line_num, r) for r in reader if any(c.strip() for c in r)]
        if not rows:
            return [], [], 0
        header = [c.strip() for c in rows[0][1]]
        if tuple(header) != BATCH_CSV_COLUMNS:
            raise UsageError(f"CSV header must be: {','.join(BATCH_CSV_COLUMNS)}")
        for line_no, r in rows[1:]:
            if len(r) != len(header):
                errors.append((line_no, f"expected {len(header)} fields, got {len(r)}"))
                continue
            d = dict(zip(header, (c.strip() for c in r)))
            accept(line_no, d["id"],
                   lambda: (_box_from_mapping({k: d[f"pred_{k}"] for k in BOX_FIELDS}, "pred"),
                            _box_from_mapping({k: d[f"target_{k}"] for k in BOX_FIELDS}, "target")))
        total = len(rows) - 1
    return records, errors, total


def cmd_batch(args) -> int:
    records, errors, total = read_records(args.input, args.input_format)
    if total == 0:
        raise UsageError(f"{args.input}: no records")
    for line_no, msg in errors:
        print(f"{args.input}:{line_no}: {msg}", file=sys.stderr)
    if len(errors) * 2 > total:
        print(f"{args.input}: {len(errors)} of {total} records failed to parse", file=sys.stderr)
        return EXIT_DATA
    cfg = _loss_cfg(args)
    alphas = args.alpha or [3.0]
    rows = [dict(id=rid, **pair_report(p, t, cfg, alphas)) for _, rid, p, t in records]
    columns = list(rows[0]) if rows else ["id"]
    with _open_out(args.out) as f:
        if args.format == "json":
            json.dump({"columns": columns, "rows": rows}, f, indent=1)
            f.write("\n")
        else:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([r["id"]] + [repr(float(r[c])) for c in columns[1:]])
    report = sys.stdout if args.out not in (None, "-") else sys.stderr
    print(f"records {len(rows)} failed {len(errors)}", file=report)
    approx = ["kfiou3"] + [analysis.mkiou_column(a) for a in alphas]
    for col in approx:
        gap = sum(abs(r[col] - r["skew_iou"]) for r in rows) / len(rows)
        print(f"consistency {col} {fmt(gap)}", file=report)
    return EXIT_OK


# -- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="obbloss", description="Oriented-box IoU approximations, losses, sweeps and fits. "
                "Box literals are 'cx,cy,w,h,theta_deg'; put '--' before literals that start with '-'.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    q = sub.add_parser("iou", help="evaluate every IoU and loss for one box pair")
    q.add_argument("pred")
    q.add_argument("target")
    _add_loss_flags(q)
    q.add_argument("--format", choices=("text", "json"), default="text")
    q.set_defaults(func=cmd_iou)

    q = sub.add_parser("sweep", help="width-height or angle sensitivity sweep",
                       description="CSV columns: <control>,skew_iou,kfiou3,mkiou_a<alpha>... where the "
                       "control is 'scale' (wh) or 'dtheta_deg' (angle). Consistency metrics are printed "
                       "to stdout (stderr when the table goes to stdout).")
    q.add_argument("kind", choices=("wh", "angle"))
    q.add_argument("--base", help="base box literal (default 0,0,4,2,0 for wh, 0,0,4,1,0 for angle)")
    q.add_argument("--range", help="lo,hi: scale factors for wh (default 0.5,2.0), degrees for angle (default -90,90)")
    q.add_argument("--steps", type=int, default=None)
    q.add_argument("--alpha", type=float, action="append",
                   help="MKIoU alpha column; repeatable (default 3,2.5,2,1.5,1)")
    q.add_argument("--format", choices=("csv", "json"), default="csv")
    q.add_argument("--out", help="output path (default stdout)")
    q.set_defaults(func=cmd_sweep)

    q = sub.add_parser("surface", help="loss over aspect ratio x angle offset",
                       description="CSV columns: aspect_ratio,dtheta_deg,loss; one row per grid cell, "
                       "aspect ratio major.")
    q.add_argument("loss", choices=analysis.SURFACE_LOSSES)
    q.add_argument("--ar-range", default="1,5")
    q.add_argument("--dtheta-range", default="0,180", help="degrees")
    q.add_argument("--grid", default="41x181", help="N_AR x N_THETA")
    _add_loss_flags(q)
    q.add_argument("--format", choices=("csv", "json"), default="csv")
    q.add_argument("--out")
    q.set_defaults(func=cmd_surface)

    q = sub.add_parser("fit", help="gradient-descent fit of a box to a target",
                       description="Trace columns: step,cx,cy,w,h,theta,loss,skew_iou (theta in degrees).")
    q.add_argument("--target", required=True)
    q.add_argument("--init", help="init box literal; drawn from --seed when omitted")
    q.add_argument("--seed", type=int, default=0)
    _add_loss_flags(q)
    q.add_argument("--lr", type=float, default=0.05)
    q.add_argument("--momentum", type=float, default=0.9)
    q.add_argument("--max-steps", type=int, default=2000)
    q.add_argument("--stop-iou", type=float, default=0.99)
    q.add_argument("--trace", help="trace output path")
    q.add_argument("--format", choices=("csv", "json"), default="csv", help="trace format (json = JSON lines)")
    q.set_defaults(func=cmd_fit)

    q = sub.add_parser("batch", help="evaluate a file of box pairs",
                       description="JSONL records: {id, pred:{cx,cy,w,h,theta_deg}, target:{...}}. "
                       "CSV header: " + ",".join(BATCH_CSV_COLUMNS))
    q.add_argument("input")
    q.add_argument("--input-format", choices=("auto", "jsonl", "csv"), default="auto")
    _add_loss_flags(q)
    q.add_argument("--format", choices=("csv", "json"), default="csv")
    q.add_argument("--out")
    q.set_defaults(func=cmd_batch)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except InvalidArgumentError as exc:
        print(f"obbloss: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, InvalidBoxError) as exc:
        print(f"obbloss: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalFailureError, ArithmeticError) as exc:
        print(f"obbloss: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ObbLossError as exc:
        print(f"obbloss: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
