"""``fblab`` command line.

Every subcommand writes its artifacts and a ``manifest.json`` into one
directory: ``--out`` when given, otherwise ``$FBLAB_OUT/<experiment>-<id>``
(``./fblab-out`` without the variable).  Errors go to stderr as one JSON
record and set a nonzero exit status.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import shutil
import sys
import traceback
import warnings

from .. import __version__
from ..fields import DomainError
from .experiments import REGISTRY, MissingArtifact, RunContext
from .manifest import OutputCollision, RunManifest, output_root, prepare_directory
from .params import ParameterError, effective_config, read_config, resolve, write_config

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_COLLISION, EXIT_MISSING = 0, 1, 2, 3, 4
RUN_KEYS = {"seed"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParameterError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fblab", description="Numerical experiments on twisted cones and oscillating graphs.")
    parser.add_argument("--version", action="version", version=f"fblab {__version__}")
    sub = parser.add_subparsers(dest="experiment", metavar="experiment")
    for exp in REGISTRY.values():
        p = sub.add_parser(exp.name, help=exp.help, description=exp.help)
        p.add_argument("--config", help="INI file; [run] seed and a section per experiment")
        p.add_argument("--seed", help="master seed (default 0)")
        p.add_argument("--out", help="output directory (default $FBLAB_OUT/<experiment>-<id>)")
        p.add_argument("--force", action="store_true", help="replace a non-empty output directory")
        for prm in exp.params:
            default = prm.text(prm.default) if prm.default is not None else "none"
            choices = f" {{{', '.join(map(str, prm.choices))}}}" if prm.choices else ""
            p.add_argument(prm.flag, dest=prm.name, default=None, metavar=prm.kind.upper(),
                           help=f"{prm.help}{choices} [default {default}]")
    return parser


def _seed(flag, config) -> int:
    raw = flag
    if raw is None and config is not None and config.has_section("run"):
        extra = set(config.options("run")) - RUN_KEYS
        if extra:
            raise ParameterError(f"unknown [run] keys: {sorted(extra)}")
        raw = config.get("run", "seed", fallback=None)
    if raw is None:
        return 0
    try:
        seed = int(str(raw), 0)
    except ValueError as exc:
        raise ParameterError(f"seed must be an integer, got {raw!r}") from exc
    if not 0 <= seed < 2**63:
        raise ParameterError("seed must lie in [0, 2^63)")
    return seed


def run(argv=None) -> tuple[int, dict]:
    """Parse, run one experiment and return ``(exit status, record)``."""
    args = build_parser().parse_args(argv)
    if not args.experiment:
        raise ParameterError("no experiment given; see fblab --help")
    exp = REGISTRY[args.experiment]
    config = None
    if args.config:
        try:
            config = read_config(args.config)
        except OSError as exc:
            raise ParameterError(f"cannot read config: {exc}") from exc
        except Exception as exc:  # configparser errors
            raise ParameterError(f"malformed config: {exc}") from exc
    flags = {p.name: getattr(args, p.name) for p in exp.params}
    values = resolve(exp.name, exp.params, flags, config)
    seed = _seed(args.seed, config)
    canonical = {p.name: p.text(values[p.name]) for p in exp.params}
    manifest = RunManifest(exp.name, canonical, seed)
    directory = args.out or output_root() / f"{exp.name}-{manifest.short_id}"
    directory = prepare_directory(directory, args.force)
    write_config(directory / "config.ini", effective_config(exp.name, exp.params, values, seed))
    ctx = RunContext(directory, manifest)
    try:
        summary = _plain(exp.run(ctx, **values) or {})
    except BaseException:
        # partial outputs without a manifest would only block the retry
        shutil.rmtree(directory, ignore_errors=True)
        raise
    manifest.summary = summary
    for path in sorted(directory.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            manifest.record(path, directory)
    manifest.write(directory)
    failed = bool(summary.get("hard_failures"))
    record = {"status": "failed" if failed else "ok", "experiment": exp.name, "id": manifest.id,
              "directory": str(directory), "summary": summary}
    return (EXIT_FAILED if failed else EXIT_OK), record


def _plain(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _error(kind: str, message: str, code: int, argv) -> dict:
    return {"status": "error", "error": kind, "message": message, "exit_code": code,
            "argv": list(argv) if argv is not None else sys.argv[1:]}


def main(argv=None) -> int:
    warnings.filterwarnings("ignore", message=".*TBB.*")
    try:
        code, record = run(argv)
    except (ParameterError, DomainError) as exc:
        code, record = EXIT_USAGE, _error(type(exc).__name__, str(exc), EXIT_USAGE, argv)
    except OutputCollision as exc:
        code, record = EXIT_COLLISION, _error("OutputCollision", str(exc), EXIT_COLLISION, argv)
    except MissingArtifact as exc:
        code, record = EXIT_MISSING, _error("MissingArtifact", str(exc), EXIT_MISSING, argv)
    except Exception as exc:  # anything else is a failed run, reported in the same format
        code, record = EXIT_FAILED, _error(type(exc).__name__, str(exc), EXIT_FAILED, argv)
        if os.environ.get("FBLAB_DEBUG"):
            traceback.print_exc()
    if code in (EXIT_OK, EXIT_FAILED) and record.get("status") != "error":
        lines = record["summary"].pop("lines", None)
        if lines:
            print("\n".join(lines))
        print(json.dumps(record, default=str, sort_keys=True))
    else:
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
