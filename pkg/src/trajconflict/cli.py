"""Command line entry point: ``trajconflict {track,detect,evaluate,simulate,sweep}``.

Exit codes: 0 success, 1 input error (bad stream, scenario, or truth
manifest), 2 config error (bad config, override, or calibration).
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import time
from typing import Dict, List, Optional, Sequence

from .config import ConfigError, PipelineConfig, check_paths, load_config, with_overrides
from .evaluation import combine, evaluate_scenario, match_events, scenario_seed, sweep
from .geometry import CalibrationError, Homography, read_calibration
from .ingest import StreamError, read_stream
from .pipeline import Pipeline, prefetch, track_rows
from .scenario import (Scenario, ScenarioError, builtin_suite, get_builtin, load_scenario,
                       manifest_events, synthetic_homography, truth_manifest)

logger = logging.getLogger("trajconflict")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2


class InputError(ValueError):
    pass


# -- argument handling -------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_set(items: Sequence[str]) -> Dict[str, object]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = _parse_value(value)
    return out


def build_config(args) -> PipelineConfig:
    """Config file, then ``--set`` overrides, then the dedicated flags."""
    for flag in ("input", "truth"):
        path = getattr(args, flag, None)
        if path is not None and path != "-" and not os.path.exists(path):
            raise InputError(f"--{flag}: file not found: {path}")
    cfg = load_config(args.config)
    overrides = _parse_set(getattr(args, "set", None))
    for flag, key in (("input", "io.input"), ("output", "io.output"), ("calibration", "io.calibration"),
                      ("truth", "io.truth"), ("seed", "seed"), ("min_confidence", "min_confidence")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        cfg = with_overrides(cfg, overrides)
        check_paths(cfg)
    return cfg


@contextlib.contextmanager
def _open_out(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
    else:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w") as fh:
            yield fh


@contextlib.contextmanager
def _open_in(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdin
    else:
        if not os.path.exists(path):
            raise InputError(f"input file not found: {path}")
        with open(path, "rb") as fh:
            yield fh


def _homography(cfg: PipelineConfig, required: bool) -> Homography:
    if cfg.io.calibration is None:
        if required:
            raise ConfigError("a calibration is required (--calibration or io.calibration)")
        return Homography.identity()
    return read_calibration(cfg.io.calibration)


def _frames(cfg: PipelineConfig, fh):
    reader = read_stream(fh, cfg.min_confidence, cfg.hist_bins)
    return reader, prefetch(reader, cfg.queue_size)


def _report_drops(reader) -> None:
    if reader.dropped:
        logger.warning("dropped %d record(s): %d unknown class, %d invalid, %d below confidence",
                       reader.dropped, reader.dropped_class, reader.dropped_invalid, reader.dropped_confidence)
    for lineno, problem in reader.violations[:5]:
        logger.info("line %d: %s", lineno, problem)


def _dump(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"), sort_keys=True)


# -- subcommands ---------------------------------------------------------------

def cmd_track(args) -> int:
    cfg = build_config(args)
    pipe = Pipeline(cfg, tracking_only=True)
    n = 0
    t0 = time.perf_counter()
    with _open_in(cfg.io.input) as fin, _open_out(cfg.io.output) as out:
        reader, frames = _frames(cfg, fin)
        for fd in frames:
            for res in pipe.process(fd):
                n += 1
                for row in track_rows(res):
                    out.write(_dump(row) + "\n")
    dt = time.perf_counter() - t0
    _report_drops(reader)
    rate = n / dt if dt > 0 else float("inf")
    print(f"tracked {n} frames in {dt:.3f} s ({rate:.1f} frames/s), "
          f"{pipe.tracker.started} track ids issued", file=sys.stderr)
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = build_config(args)
    pipe = Pipeline(cfg, _homography(cfg, required=True))
    count: Dict[str, int] = {}
    n = 0
    with _open_in(cfg.io.input) as fin, _open_out(cfg.io.output) as out:
        reader, frames = _frames(cfg, fin)
        for fd in frames:
            for res in pipe.process(fd):
                n += 1
                for ev in res.events:
                    out.write(_dump(ev.to_record()) + "\n")
                    out.flush()
                    logger.info("%s", ev.summary())
                    count[ev.type] = count.get(ev.type, 0) + 1
    _report_drops(reader)
    kinds = ", ".join(f"{k} {v}" for k, v in sorted(count.items())) or "none"
    print(f"processed {n} frames, {sum(count.values())} conflict event(s): {kinds}", file=sys.stderr)
    return EXIT_OK


def _load_truth(path: str):
    if not os.path.exists(path):
        raise InputError(f"truth manifest not found: {path}")
    try:
        with open(path) as fh:
            manifest = json.load(fh)
        return manifest, manifest_events(manifest)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: invalid truth manifest ({exc})") from None


def _resolve_scenarios(which: str) -> List[Scenario]:
    if which == "all":
        return builtin_suite()
    if os.path.exists(which):
        return [load_scenario(which)]
    return [get_builtin(which)]


def _write_report(cfg: PipelineConfig, report: dict, summary: str) -> None:
    if cfg.io.output is not None and cfg.io.output != "-":
        with _open_out(cfg.io.output) as out:
            json.dump(report, out, indent=2, sort_keys=True)
            out.write("\n")
        print(summary)
    else:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
        print(summary, file=sys.stderr)


def cmd_evaluate(args) -> int:
    cfg = build_config(args)
    if args.scenario is not None:
        per = {}
        for s in _resolve_scenarios(args.scenario):
            per[s.name] = evaluate_scenario(s, cfg)
            logger.info("%s: %s", s.name, per[s.name].summary())
        overall = combine(per.values())
        report = {"overall": overall.to_dict(), "scenarios": {k: v.to_dict() for k, v in per.items()}}
    else:
        if cfg.io.truth is None:
            raise ConfigError("evaluate needs --scenario or a truth manifest (--truth)")
        manifest, truth = _load_truth(cfg.io.truth)
        duration = manifest.get("duration")
        pipe = Pipeline(cfg, _homography(cfg, required=True))
        events = []
        with _open_in(cfg.io.input) as fin:
            reader, frames = _frames(cfg, fin)
            for fd in frames:
                if duration is not None and fd.frame >= duration:
                    raise InputError(f"stream frame {fd.frame} lies beyond the manifest duration {duration}")
                for res in pipe.process(fd):
                    events.extend(res.events)
        _report_drops(reader)
        overall = match_events(events, truth, cfg.evaluation.t_tol, manifest.get("scenario", ""))
        report = {"overall": overall.to_dict()}
    _write_report(cfg, report, overall.summary())
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = build_config(args)
    out_dir = cfg.io.output or "."
    scenarios = _resolve_scenarios(args.scenario)
    os.makedirs(out_dir, exist_ok=True)
    calib = synthetic_homography().to_dict()
    for s in scenarios:
        frames, _ = s.render(scenario_seed(s, cfg))
        base = os.path.join(out_dir, s.name)
        with open(base + ".jsonl", "w") as fh:
            n = 0
            for fd in frames:
                for det in fd.detections:
                    fh.write(_dump(det.to_record()) + "\n")
                    n += 1
        with open(base + ".truth.json", "w") as fh:
            json.dump(truth_manifest(s), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(base + ".calib.json", "w") as fh:
            json.dump(calib, fh, indent=2)
            fh.write("\n")
        print(f"{s.name}: {n} detections over {s.duration} frames, {len(s.truth)} true conflict(s) -> {base}.*",
              file=sys.stderr)
    return EXIT_OK


def _load_grid(args) -> Dict[str, list]:
    grid: Dict[str, list] = {}
    if args.grid is not None:
        if not os.path.exists(args.grid):
            raise ConfigError(f"grid file not found: {args.grid}")
        try:
            with open(args.grid) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.grid}: invalid JSON ({exc.msg})") from None
        if not isinstance(data, dict) or not all(isinstance(v, list) and v for v in data.values()):
            raise ConfigError("grid must map config keys to non-empty lists of values")
        grid.update(data)
    for item in args.param or ():
        key, sep, values = item.partition("=")
        if not sep or not values:
            raise ConfigError(f"--param expects key=v1,v2,..., got {item!r}")
        grid[key.strip()] = [_parse_value(v) for v in values.split(",")]
    if not grid:
        raise ConfigError("sweep needs --grid or at least one --param")
    return grid


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    grid = _load_grid(args)
    suite = _resolve_scenarios(args.scenario)
    rows = sweep(grid, suite, cfg, jobs=args.jobs)
    table = []
    for r in rows:
        dr = "n/a" if r["DR"] is None else f"{100 * r['DR']:6.2f}%"
        params = " ".join(f"{k}={v}" for k, v in r["params"].items())
        table.append(f"DR {dr}  FAR {100 * r['FAR']:6.2f}%  {params}")
    if cfg.io.output is not None and cfg.io.output != "-":
        with _open_out(cfg.io.output) as out:
            for r in rows:
                out.write(_dump(r) + "\n")
        print("\n".join(table))
    else:
        for r in rows:
            sys.stdout.write(_dump(r) + "\n")
        print("\n".join(table), file=sys.stderr)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--input", help="detection stream (JSON lines); '-' or omitted reads stdin")
    p.add_argument("--calibration", help="calibration JSON ({'H': [...]} or {'points': [...]})")
    p.add_argument("--output", help="output path; omitted writes stdout")
    p.add_argument("--seed", type=int, help="seed offset added to each scenario's own seed")
    p.add_argument("--min-confidence", type=float, dest="min_confidence",
                   help="drop detections below this confidence")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key, e.g. conflict.theta_min=40 (repeatable)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajconflict",
                                     description="Track road users and flag trajectory conflicts.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="run the tracker and write a per-frame track dump")
    _common(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("detect", help="run the full pipeline and stream conflict events")
    _common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="compute DR/FAR against ground truth")
    _common(p)
    p.add_argument("--truth", help="truth manifest for --input")
    p.add_argument("--scenario", help="builtin scenario name, 'all', or a scenario JSON file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="render scenarios to stream, truth and calibration files")
    _common(p)
    p.add_argument("scenario", nargs="?", default="all", help="builtin name, 'all' (default), or a scenario file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="evaluate a parameter grid on a scenario suite")
    _common(p)
    p.add_argument("--grid", help="JSON object mapping dotted config keys to value lists")
    p.add_argument("--param", action="append", metavar="KEY=V1,V2",
                   help="grid axis, e.g. conflict.theta_min=25,35,45 (repeatable)")
    p.add_argument("--scenario", default="all", help="builtin name, 'all' (default), or a scenario file")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, CalibrationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StreamError, ScenarioError, InputError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
