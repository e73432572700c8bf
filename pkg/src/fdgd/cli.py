"""Command line: fixtures, encode, decode, eval, roundtrip and the ablation bench.

Exit status is 0 on success, 1 on usage errors and 2 on runtime errors.
Every command prints one JSON document to standard output.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decoder import WindingMode, decode_grid
from .encoder import DirectionMode, EncodeStats, encode_mesh
from .fixtures import generate_corpus
from .grid import FormatError, deserialize, serialize
from .mesh import MeshError, TriangleMesh, load_obj, normalize_to_unit_cube, save_obj
from .metrics import EvalConfig, MetricsReport, full_report
from .qef import QefParams
from .validation import check_margin, check_resolution

logger = logging.getLogger("fdgd")

THREADS_ENV = "OVOXEL_THREADS"

# (name, direction mode, winding) in table order
VARIANTS = (
    ("fdg", DirectionMode.EXACT_RAY, WindingMode.AXIS_HARDCODED),
    ("fdgd-a", DirectionMode.VOXEL_NORMAL, WindingMode.DIRECTED),
    ("fdgd-b", DirectionMode.EXACT_RAY, WindingMode.DIRECTED),
)
METRIC_COLUMNS = ("cd", "f_score", "iou", "rmse_u", "rmse_o", "orient_correct_pct", "n_b", "n_c", "n_g", "tau_v_pct")
BENCH_COLUMNS = ("mesh", "res", "variant") + METRIC_COLUMNS + ("error",)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    resolution: int = 128
    mode: DirectionMode = DirectionMode.EXACT_RAY
    winding: WindingMode = WindingMode.DIRECTED
    qef: QefParams = field(default_factory=QefParams)
    eval: EvalConfig = field(default_factory=EvalConfig)
    margin: float | None = None

    def __post_init__(self):
        self.resolution = check_resolution(self.resolution)
        self.mode = DirectionMode(self.mode)
        self.winding = WindingMode(self.winding)
        self.margin = check_margin(self.margin, self.resolution)


def worker_count(env=None) -> int:
    """Worker cap from ``OVOXEL_THREADS``; 0 or unset means one per CPU."""
    raw = (os.environ if env is None else env).get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise UsageError(f"{THREADS_ENV} must be >= 0")
    return n or (os.cpu_count() or 1)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def _finite(x):
    return None if isinstance(x, float) and not np.isfinite(x) else x


def _report_dict(report: MetricsReport) -> dict:
    return {k: _finite(v) for k, v in report.as_dict().items()}


def _write_report(report: MetricsReport, path: Path, extra: dict | None = None) -> None:
    if path.suffix.lower() == ".csv":
        path.write_text(report.to_csv())
    else:
        path.write_text(json.dumps(_report_dict(report) | (extra or {}), indent=2) + "\n")


# argument groups -------------------------------------------------------------------


def _add_encode_args(p):
    p.add_argument("--res", type=int, default=128, help="grid resolution N (default 128)")
    p.add_argument("--mode", choices=[m.value for m in DirectionMode], default=DirectionMode.EXACT_RAY.value)
    p.add_argument("--lambda-bound", type=float, default=QefParams.lambda_bound)
    p.add_argument("--lambda-reg", type=float, default=QefParams.lambda_reg)
    p.add_argument("--margin", type=float, default=None, help="normalization margin (default max(0.05, 1/N))")


def _add_eval_args(p):
    d = EvalConfig()
    p.add_argument("--cd-samples", type=int, default=d.cd_samples)
    p.add_argument("--normal-samples", type=int, default=d.normal_samples)
    p.add_argument("--f-tau", type=float, default=d.f_tau)
    p.add_argument("--iou-res", type=int, default=d.iou_res)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--gt-seed", type=int, default=None)
    p.add_argument("--no-global-flip", action="store_true", help="do not flip predicted normals globally")


def _eval_config(a) -> EvalConfig:
    return EvalConfig(cd_samples=a.cd_samples, normal_samples=a.normal_samples, f_tau=a.f_tau,
                      iou_res=a.iou_res, seed=a.seed, gt_seed=a.gt_seed, global_flip=not a.no_global_flip)


def _run_config(a, winding=WindingMode.DIRECTED) -> RunConfig:
    try:
        return RunConfig(resolution=a.res, mode=a.mode, winding=winding,
                         qef=QefParams(a.lambda_bound, a.lambda_reg),
                         eval=_eval_config(a) if hasattr(a, "cd_samples") else EvalConfig(),
                         margin=a.margin)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


# commands ------------------------------------------------------------------------


def cmd_fixtures(a) -> int:
    paths = generate_corpus(a.out, seed=a.seed)
    _emit({"command": "fixtures", "out": str(a.out), "seed": a.seed,
           "files": [p.name for p in paths], "manifest": "manifest.json"})
    return 0


def _encode(mesh: TriangleMesh, cfg: RunConfig, mode=None):
    ref = normalize_to_unit_cube(mesh, cfg.margin)
    stats = EncodeStats()
    grid = encode_mesh(ref, cfg.resolution, mode or cfg.mode, cfg.qef, stats=stats)
    return ref, grid, stats


def cmd_encode(a) -> int:
    cfg = _run_config(a)
    mesh = load_obj(a.input)
    t0 = time.perf_counter()
    _, grid, stats = _encode(mesh, cfg)
    serialize(grid, a.out)
    _emit({"command": "encode", "resolution": cfg.resolution, "mode": cfg.mode.value, "out": str(a.out),
           **stats.as_dict(), "seconds": time.perf_counter() - t0})
    return 0


def cmd_decode(a) -> int:
    grid = deserialize(a.input)
    mesh = decode_grid(grid, a.winding)
    save_obj(mesh, a.out)
    _emit({"command": "decode", "winding": a.winding, "out": str(a.out), "resolution": grid.resolution,
           "vertices": mesh.n_vertices, "triangles": mesh.n_triangles})
    return 0


def cmd_eval(a) -> int:
    cfg = _eval_config(a)
    report = full_report(load_obj(a.pred), load_obj(a.gt), cfg)
    if a.out:
        _write_report(report, Path(a.out))
    _emit({"command": "eval", "report": _report_dict(report)})
    return 0


def cmd_roundtrip(a) -> int:
    cfg = _run_config(a, a.winding)
    ref, grid, stats = _encode(load_obj(a.input), cfg)
    pred = decode_grid(grid, cfg.winding)
    report = full_report(pred, ref, cfg.eval)
    combined = {"resolution": cfg.resolution, "mode": cfg.mode.value, "winding": cfg.winding.value,
                "margin": cfg.margin, "encode": stats.as_dict()}
    if a.report:
        _write_report(report, Path(a.report), combined)
    _emit({"command": "roundtrip", **combined, "report": _report_dict(report)})
    return 0


# bench -------------------------------------------------------------------------------


def _bench_cell(name: str, path: Path, res: int, cfg: RunConfig) -> list[dict]:
    """All three variants for one (mesh, resolution); failures become error rows."""
    rows = []
    try:
        cell = RunConfig(resolution=res, qef=cfg.qef, eval=cfg.eval)
        mesh = load_obj(path)
        ref = normalize_to_unit_cube(mesh, cell.margin)
        grids = {}
        for variant, mode, winding in VARIANTS:
            if mode not in grids:
                grids[mode] = encode_mesh(ref, res, mode, cell.qef)
            rep = full_report(decode_grid(grids[mode], winding), ref, cell.eval)
            rows.append({"mesh": name, "res": res, "variant": variant,
                         **{k: getattr(rep, k) for k in METRIC_COLUMNS}, "error": ""})
    except (MeshError, FormatError, OSError, ValueError, KeyError) as exc:
        logger.error("bench %s at N=%d failed: %s", name, res, exc)
        done = {r["variant"] for r in rows}
        rows += [{"mesh": name, "res": res, "variant": v, **{k: "" for k in METRIC_COLUMNS},
                  "error": f"{type(exc).__name__}: {exc}".replace("\n", " ")}
                 for v, _, _ in VARIANTS if v not in done]
    return rows


def _summary(rows: list[dict], resolutions) -> list[dict]:
    out = []
    for res in resolutions:
        for variant, _, _ in VARIANTS:
            ok = [r for r in rows if r["res"] == res and r["variant"] == variant and not r["error"]]
            row = {"mesh": "mean", "res": res, "variant": variant, "error": ""}
            for k in METRIC_COLUMNS:
                row[k] = float(np.mean([r[k] for r in ok])) if ok else ""
            if len(ok) < sum(1 for r in rows if r["res"] == res and r["variant"] == variant):
                row["error"] = "mean over successful meshes only"
            out.append(row)
    return out


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in header])


def run_bench(corpus: Path, resolutions, cfg: RunConfig, workers: int = 1) -> tuple[list[dict], list[dict]]:
    manifest_path = corpus / "manifest.json"
    if manifest_path.exists():
        entries = json.loads(manifest_path.read_text())["fixtures"]
        meshes = sorted((name, corpus / e["file"]) for name, e in entries.items())
    else:
        meshes = sorted((p.stem, p) for p in corpus.glob("*.obj"))
    if not meshes:
        raise MeshError(f"no meshes found in {corpus}")
    cells = [(name, path, res) for name, path in meshes for res in resolutions]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda c: _bench_cell(c[0], c[1], c[2], cfg), cells))
    order = {v: i for i, (v, _, _) in enumerate(VARIANTS)}
    rows = sorted((r for rs in results for r in rs), key=lambda r: (r["mesh"], r["res"], order[r["variant"]]))
    return rows, _summary(rows, resolutions)


PIVOT_COLUMNS = ("res", "variant") + METRIC_COLUMNS


def cmd_bench(a) -> int:
    try:
        resolutions = sorted({check_resolution(int(x)) for x in a.res.split(",") if x.strip()})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"--res: {exc}") from None
    if not resolutions:
        raise UsageError("--res needs at least one resolution")
    cfg = RunConfig(resolution=resolutions[0], qef=QefParams(a.lambda_bound, a.lambda_reg), eval=_eval_config(a))
    workers = worker_count()
    t0 = time.perf_counter()
    rows, summary = run_bench(Path(a.corpus), resolutions, cfg, workers)
    _write_csv(Path(a.out), BENCH_COLUMNS, rows + summary)
    if a.pivot:
        _write_csv(Path(a.pivot), PIVOT_COLUMNS, summary)
    _emit({"command": "bench", "out": str(a.out), "pivot": a.pivot, "resolutions": resolutions,
           "rows": len(rows), "summary_rows": len(summary), "failed_rows": sum(bool(r["error"]) for r in rows),
           "workers": workers, "seconds": time.perf_counter() - t0,
           "summary": [{k: _finite(r[k]) if r[k] != "" else None for k in PIVOT_COLUMNS} for r in summary]})
    return 0


# entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fdgd", description="Directed-edge dual grid encoding of triangle meshes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("fixtures", help="write the synthetic fixture corpus")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_fixtures)

    s = sub.add_parser("encode", help="mesh to .fdgd")
    s.add_argument("--in", dest="input", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    _add_encode_args(s)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("decode", help=".fdgd to mesh")
    s.add_argument("--in", dest="input", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--winding", choices=[w.value for w in WindingMode], default=WindingMode.DIRECTED.value)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("eval", help="metrics of a predicted mesh against ground truth")
    s.add_argument("--pred", type=Path, required=True)
    s.add_argument("--gt", type=Path, required=True)
    s.add_argument("--out", type=Path, default=None, help="report file, .json or .csv")
    _add_eval_args(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("roundtrip", help="encode, decode and evaluate against the normalized input")
    s.add_argument("--in", dest="input", type=Path, required=True)
    s.add_argument("--winding", choices=[w.value for w in WindingMode], default=WindingMode.DIRECTED.value)
    s.add_argument("--report", type=Path, default=None)
    _add_encode_args(s)
    _add_eval_args(s)
    s.set_defaults(func=cmd_roundtrip)

    s = sub.add_parser("bench", help="three-variant ablation over a corpus")
    s.add_argument("--corpus", type=Path, required=True)
    s.add_argument("--res", default="128", help="comma separated resolutions (default 128)")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--pivot", default=None, help="also write the mean summary as a wide CSV")
    s.add_argument("--lambda-bound", type=float, default=QefParams.lambda_bound)
    s.add_argument("--lambda-reg", type=float, default=QefParams.lambda_reg)
    _add_eval_args(s)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except UsageError as exc:
        print(f"fdgd {a.command}: {exc}", file=sys.stderr)
        return 1
    except (MeshError, FormatError, OSError, ValueError, KeyError) as exc:
        print(f"fdgd {a.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
