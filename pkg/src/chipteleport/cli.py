"""Command line entry point: ``chipteleport <experiment|tool> [flags]``.

Log verbosity comes from ``CHIPTELEPORT_LOG`` (DEBUG, INFO, WARNING, ...).
Failures print one JSON object ``{"error": {...}}`` on stderr and exit
nonzero: 2 for an invalid config, 1 for a run that could not complete.
"""
from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .channel import NoiseConfig
from .netlab import Coordinator, Node, NodeCrash, OrderingError, SessionConfig
from .photonics import circuit_unitary, load_circuit
from .qcore import matrix_to_json

LOG_ENV = "CHIPTELEPORT_LOG"

log = logging.getLogger("chipteleport")


class RunFailed(RuntimeError):
    def __init__(self, message: str, detail: dict | None = None):
        super().__init__(message)
        self.detail = detail or {}


def _emit(obj, out: Path | None = None, name: str = "result.json") -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def _error(kind: str, message: str, code: int, detail: dict | None = None) -> int:
    err = {"error": {"type": kind, "message": message, "exit_code": code}}
    if detail:
        err["error"]["detail"] = detail
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return code


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ex.ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ex.ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ex.ConfigError(f"{path} must hold a JSON object")
    return obj


def _options(pairs) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ex.ConfigError(f"--option expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


# -- experiments -------------------------------------------------------------------------------

def _experiment_config(args, experiment: str | None) -> ex.ExperimentConfig:
    base = _read_json(args.config) if args.config else {}
    if experiment is not None:
        if base.get("experiment", experiment) != experiment:
            raise ex.ConfigError(f"config is for {base['experiment']!r}, not {experiment!r}")
        base["experiment"] = experiment
    opts = {**base.get("options", {}), **_options(args.option)}
    overrides = {"seed": args.seed, "shots": args.shots, "preset": args.preset, "fiber_km": args.fiber_km,
                 "mode": args.mode, "out": str(args.out) if args.out else None}
    if args.preset and "noise" in base:
        base.pop("noise")
    return ex.ExperimentConfig.from_json({**base, "options": opts}, overrides)


def cmd_experiment(args) -> int:
    cfg = _experiment_config(args, getattr(args, "experiment", None))
    res = ex.run_experiment(cfg)
    ex.validate_report(res.report)
    out = Path(cfg.out or args.out or f"out/{cfg.experiment}")
    ex.write_outputs(res, out)
    summary = {"experiment": cfg.experiment, "out": str(out),
               "metrics": {k: v["value"] for k, v in res.report["metrics"].items()}}
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    if cfg.experiment == "netlab-session":
        rep = res.report
        if rep["manifest"]["status"] != "complete" or not rep["replay_identical"]:
            raise RunFailed("netlab session did not reproduce the in-process run", rep["manifest"])
    return 0


# -- noise calibration ---------------------------------------------------------------------

def cmd_calibrate_noise(args) -> int:
    if args.write_presets:
        fits = ex.write_presets(Path(args.write_presets))
        _emit({k: f.provenance() for k, f in fits.items()})
        return 0
    if args.preset:
        fit = ex.fit_preset(args.preset)
    else:
        if not args.targets:
            raise ex.ConfigError("give --targets FILE, --preset NAME or --write-presets DIR")
        spec = _read_json(args.targets)
        targets = spec.get("targets", spec)
        fixed = {**spec.get("fixed", {}), **_options(args.fixed)} if "targets" in spec else _options(args.fixed)
        base = NoiseConfig.ideal(fiber_km=args.fiber_km if args.fiber_km is not None else 0.005)
        try:
            fit = ex.calibrate_noise(targets, fixed, base, tolerance=args.tolerance)
        except (TypeError, ValueError) as exc:
            raise ex.ConfigError(str(exc)) from exc
    doc = {"noise": fit.noise.to_json(), "provenance": fit.provenance()}
    if not fit.feasible:
        raise RunFailed(f"no noise parameters within {fit.tolerance} of every target", doc)
    _emit(doc, Path(args.out) if args.out else None, "noise.json")
    return 0


# -- netlab processes ----------------------------------------------------------------------

def _session_config(path: str, args) -> SessionConfig:
    obj = _read_json(path)
    noise = obj.get("noise")
    if isinstance(noise, str):
        obj["noise"] = ex.load_preset(noise).to_json() if noise in ex.PRESETS else _read_json(noise)
    if args.trials is not None:
        obj["trials"] = args.trials
    if args.seed is not None:
        obj["seed"] = args.seed
    try:
        return SessionConfig.from_json(obj)
    except (TypeError, ValueError) as exc:
        raise ex.ConfigError(f"invalid session config: {exc}") from exc


def cmd_coordinator(args) -> int:
    cfg = _session_config(args.config, args)
    coord = Coordinator(cfg, args.host, args.port)

    async def main():
        port = await coord.start()
        sys.stdout.write(json.dumps({"listening": {"host": args.host, "port": port}}) + "\n")
        sys.stdout.flush()
        return await coord.run()

    manifest = asyncio.run(main())
    if args.log:
        Path(args.log).parent.mkdir(parents=True, exist_ok=True)
        Path(args.log).write_text(coord.log.text())
    out = Path(args.out) if args.out else None
    _emit(manifest, out, "manifest.json")
    if manifest["status"] != "complete":
        raise RunFailed("session aborted", {k: v for k, v in manifest.items() if k != "records"})
    return 0


def cmd_node(args) -> int:
    node = Node(args.role, args.host, args.port, latency=args.latency, crash_after=args.crash_after,
                connect_timeout=args.connect_timeout)
    done = node.run()
    sys.stdout.write(json.dumps({"role": args.role, "trials": done}) + "\n")
    return 0


# -- circuit files -------------------------------------------------------------------------

def cmd_circuit(args) -> int:
    try:
        elements = load_circuit(args.file)
    except OSError as exc:
        raise ex.ConfigError(f"cannot read {args.file}: {exc.strerror}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ex.ConfigError(f"invalid circuit file: {exc}") from exc
    u = circuit_unitary(elements)
    doc = {
        "elements": len(elements),
        "unitary": matrix_to_json(u),
        "unitarity_error": float(np.linalg.norm(u.conj().T @ u - np.eye(len(u)))),
    }
    _emit(doc, Path(args.out) if args.out else None, "circuit.json")
    return 0


# -- parser ----------------------------------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    p.add_argument("--shots", help="recorded events per setting, or 'exact'")
    p.add_argument("--out", type=Path, help="output directory (default out/<experiment>)")
    p.add_argument("--preset", choices=ex.PRESETS, help="calibrated noise preset")
    p.add_argument("--fiber-km", type=float, help="fibre length override")
    p.add_argument("--mode", choices=("post_selected", "corrected"))
    p.add_argument("--option", action="append", metavar="KEY=VALUE", help="experiment option (JSON value)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chipteleport", description="Chip-to-chip CNOT gate teleportation simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ex.EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _add_run_flags(p)
        p.set_defaults(func=cmd_experiment, experiment=name)
    p = sub.add_parser("run", help="run whichever experiment the config names")
    _add_run_flags(p)
    p.set_defaults(func=cmd_experiment, experiment=None)

    p = sub.add_parser("calibrate-noise", help="fit a noise model to target fidelities")
    p.add_argument("--targets", help='JSON {"targets": {...}, "fixed": {...}} or a bare target map')
    p.add_argument("--preset", choices=ex.PRESETS, help="refit a shipped preset from its targets")
    p.add_argument("--write-presets", metavar="DIR", help="refit both presets into DIR")
    p.add_argument("--fixed", action="append", metavar="KEY=VALUE")
    p.add_argument("--fiber-km", type=float)
    p.add_argument("--tolerance", type=float, default=ex.FIT_TOLERANCE)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate_noise)

    p = sub.add_parser("coordinator", help="host the backplane for a two-node session")
    p.add_argument("--config", required=True, help="session config JSON")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--log", help="write the JSONL message log here")
    p.add_argument("--out", help="directory for manifest.json")
    p.set_defaults(func=cmd_coordinator)

    p = sub.add_parser("node", help="run chip node A or B")
    p.add_argument("--role", required=True, choices=("A", "B"))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--latency", type=float, default=0.0, help="max random delay per frame, seconds")
    p.add_argument("--crash-after", type=int, help="drop the connection after this many trials")
    p.add_argument("--connect-timeout", type=float, default=10.0)
    p.set_defaults(func=cmd_node)

    p = sub.add_parser("circuit", help="compose a circuit file into its mode unitary")
    p.add_argument("file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_circuit)
    return parser


def main(argv=None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ex.ConfigError as exc:
        return _error("config", str(exc), 2)
    except RunFailed as exc:
        return _error("run", str(exc), 1, exc.detail)
    except (NodeCrash, OrderingError) as exc:
        return _error("protocol", str(exc), 1)
    except (ConnectionError, OSError) as exc:
        return _error("transport", str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
