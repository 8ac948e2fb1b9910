"""Command line entry point: ``heisrect <subcommand>``.

Exit codes: 0 success or verdict pass, 1 verification/domain failure,
2 configuration or parse error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import flows
from .construction import (
    DomainViolation,
    RegionRejected,
    SeedError,
    build_chart,
    estimate_B,
    lipschitz_constants,
)
from .heisenberg import CCSolveError, Point, cc_dist, gauge_dist
from .surface import DomainError, ParseError, parse
from .verify import hausdorff_box_count, verify_lipschitz

log = logging.getLogger("heisrect")

PAIR_COLUMNS = ("pair_id", "y1", "z1", "y2", "z2", "d_N", "d_gauge", "d_cc", "ratio_cc", "status")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    surface: str
    base_point: tuple[float, float, float] = (0.0, 0.0, 0.0)
    a: float = 0.5
    grid_n: int = 41
    step: float = 1e-3
    level_tol: float = 1e-9
    bisection_tol: float = 1e-12
    samples: int = 10_000
    rng_seed: int = 0
    margin: float = 1e-3
    output_dir: str = "out"
    constants_margin: float = 0.05
    b_samples: int = 10_000
    cc_tol: float = 1e-6
    scan_box: list = field(default_factory=lambda: [[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]])
    scan_grid_n: int = 64
    scan_tol: float = 1e-6
    scales: list = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        if not data.get("surface"):
            raise ConfigError("config is missing the 'surface' field")
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        try:
            bp = tuple(float(c) for c in self.base_point)
        except (TypeError, ValueError) as exc:
            raise ConfigError("base_point must be three numbers") from exc
        if len(bp) != 3 or not all(math.isfinite(c) for c in bp):
            raise ConfigError("base_point must be three finite numbers")
        self.base_point = bp
        for name in ("a", "step", "level_tol", "bisection_tol", "margin", "cc_tol", "scan_tol"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("samples", "grid_n", "b_samples", "scan_grid_n", "rng_seed"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ConfigError(f"{name} must be an integer")
        if self.samples < 0:
            raise ConfigError("samples must be >= 0")
        if self.grid_n < 2 or self.scan_grid_n < 2 or self.b_samples < 2:
            raise ConfigError("grid sizes must be >= 2 and b_samples >= 2")
        parse(self.surface)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["base_point"] = list(self.base_point)
        return d


# --- output helpers ---------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    text = json.dumps(_clean(payload), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def _emit(payload: dict) -> None:
    print(json.dumps(_clean(payload), indent=2, sort_keys=True))


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _chart(cfg: RunConfig):
    return build_chart(
        parse(cfg.surface),
        cfg.base_point,
        a=cfg.a,
        grid_n=cfg.grid_n,
        margin=cfg.constants_margin,
        step=cfg.step,
        level_tol=cfg.level_tol,
        bisection_tol=cfg.bisection_tol,
    )


# --- subcommands ------------------------------------------------------------


def cmd_constants(cfg: RunConfig) -> int:
    chart = _chart(cfg)
    B = estimate_B(samples=cfg.b_samples, rng_seed=cfg.rng_seed)
    lip = lipschitz_constants(chart.consts, B)
    payload = {
        "surface": cfg.surface,
        "normalized_surface": str(chart.surface),
        "base_point": list(chart.base),
        "rotation_angle": chart.angle,
        "region": chart.consts.as_dict(),
        "lipschitz": lip.as_dict(),
    }
    write_json(_outdir(cfg) / "constants.json", payload)
    _emit(payload)
    return 0


def cmd_param(cfg: RunConfig, y: float, z: float) -> int:
    chart = _chart(cfg)
    p = chart.psi(y, z)
    orig = chart.to_original(p)
    resid = abs(float(parse(cfg.surface)(*orig)))
    _emit({"y": y, "z": z, "psi": orig.tolist(), "psi_normalized": list(p), "abs_f": resid})
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    chart = _chart(cfg)
    report = verify_lipschitz(
        chart, cfg.samples, cfg.rng_seed, margin=cfg.margin, cc_tol=cfg.cc_tol, b_samples=cfg.b_samples
    )
    out = _outdir(cfg)
    summary = report.summary()
    summary["region"] = chart.consts.as_dict()
    summary["config"] = cfg.as_dict()
    write_json(out / "report.json", summary)
    write_csv(
        out / "pairs.csv",
        PAIR_COLUMNS,
        ((r.pair_id, r.y1, r.z1, r.y2, r.z2, r.d_N, r.d_gauge, r.d_cc, r.ratio_cc, r.status)
         for r in report.pairs),
    )
    _emit({k: summary[k] for k in ("verdict", "max_ratio_cc", "max_ratio_gauge", "failures", "constants")})
    return 0 if report.verdict == "pass" else 1


def cmd_charlocus(cfg: RunConfig) -> int:
    e = parse(cfg.surface)
    res = flows.char_locus_scan(e, cfg.scan_box, cfg.scan_grid_n, cfg.scan_tol)
    table = hausdorff_box_count(res.hits, cfg.scales)
    out = _outdir(cfg)
    write_csv(out / "charlocus.csv", ("x", "y", "z"), res.hits)
    write_csv(out / "measure.csv", ("scale", "count", "H3_estimate"), table)
    _emit({
        "hits": len(res.hits),
        "grid_spacing": res.grid_spacing,
        "tolerance": res.tolerance,
        "measure": [list(row) for row in table],
    })
    return 0


def cmd_ccdist(p: Point, q: Point, tol: float = 1e-12) -> int:
    cc = cc_dist(p, q, tol)
    gauge = gauge_dist(p, q)
    ratio = 1.0 if cc == 0 and gauge == 0 else cc / gauge
    _emit({"cc": cc, "gauge": gauge, "ratio": ratio})
    return 0


# --- argument handling ------------------------------------------------------


def _point(text: str) -> Point:
    try:
        parts = [float(t) for t in text.replace(" ", "").split(",")]
        if len(parts) != 3:
            raise ValueError
        return Point.of(*parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y,z', got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--samples", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", type=str, default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--surface", type=str, default=argparse.SUPPRESS, help="override the surface")

    parser = argparse.ArgumentParser(
        prog="heisrect", parents=[common],
        description="Lipschitz charts of level-set surfaces in the Heisenberg group.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("constants", parents=[common], help="region and Lipschitz constants")
    p = sub.add_parser("param", parents=[common], help="evaluate Psi(y, z)")
    p.add_argument("y", type=float)
    p.add_argument("z", type=float)
    sub.add_parser("verify", parents=[common], help="sampled Lipschitz verification")
    sub.add_parser("char-locus", parents=[common], help="characteristic locus scan and box counting")
    c = sub.add_parser("cc-dist", parents=[common], help="CC and gauge distance between two points")
    c.add_argument("p", type=_point)
    c.add_argument("q", type=_point)
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    data: dict[str, Any] = {}
    path = getattr(args, "config", None)
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    overrides = {"seed": "rng_seed", "samples": "samples", "out": "output_dir", "surface": "surface"}
    for flag, key in overrides.items():
        if hasattr(args, flag):
            data[key] = getattr(args, flag)
    return RunConfig.from_dict(data)


def _setup_logging() -> None:
    level = os.environ.get("HEIS_RECT_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        if args.command == "cc-dist":
            return cmd_ccdist(args.p, args.q)
        cfg = load_config(args)
        if args.command == "constants":
            return cmd_constants(cfg)
        if args.command == "param":
            return cmd_param(cfg, args.y, args.z)
        if args.command == "verify":
            return cmd_verify(cfg)
        return cmd_charlocus(cfg)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RegionRejected, DomainViolation, SeedError, flows.FlowError, CCSolveError,
            DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
