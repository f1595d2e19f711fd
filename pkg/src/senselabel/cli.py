"""``senselabel <subcommand> --config <file> [overrides]``.

Precedence, lowest first: built-in defaults, the config file, ``--set``
overrides, then the dedicated flags (``--backend``, ``--out``, ``--run-id``).

Exit codes: 0 ok, 2 configuration error, 3 stage failure, 4 terminal backend
error. Failures print one JSON line on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import AuthError, ConfigError, SenseLabelError, TerminalTransportError
from .pipeline import BACKENDS, STAGES, Pipeline, RunConfig, StageFailed

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_BACKEND = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="senselabel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage (and any stale upstream stage)")
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. --set project.dim=5 (repeatable)")
        p.add_argument("--backend", choices=BACKENDS, help="annotation backend")
        p.add_argument("--out", help="output root directory")
        p.add_argument("--run-id", help="run directory name under the output root")
        p.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    return parser


def _error_line(code: int, exc: BaseException, stage: str | None) -> str:
    cause = exc.cause if isinstance(exc, StageFailed) else exc
    return json.dumps({"exit_code": code, "stage": stage, "error": type(cause).__name__,
                       "message": " ".join(str(cause).split())}, sort_keys=True)


def run(command: str, config: RunConfig) -> dict:
    pipe = Pipeline(config)
    try:
        result = getattr(pipe, command)()
    finally:
        if pipe.stages:
            pipe.write_manifest()
    return {"command": command, "run_dir": str(config.run_dir), "stage_dir": str(result.directory),
            "reused": result.reused}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.backend:
        overrides.append((["annotate", "backend"], args.backend))
    if args.out:
        overrides.append((["out"], str(Path(args.out).resolve())))
    if args.run_id:
        overrides.append((["run_id"], args.run_id))
    try:
        config = RunConfig.load(args.config, overrides)
    except ConfigError as exc:
        print(_error_line(EXIT_CONFIG, exc, None), file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run(args.command, config)
    except ConfigError as exc:
        print(_error_line(EXIT_CONFIG, exc, args.command), file=sys.stderr)
        return EXIT_CONFIG
    except StageFailed as exc:
        print(_error_line(exc.exit_code, exc, exc.stage), file=sys.stderr)
        return exc.exit_code
    except (AuthError, TerminalTransportError) as exc:
        print(_error_line(EXIT_BACKEND, exc, args.command), file=sys.stderr)
        return EXIT_BACKEND
    except (SenseLabelError, ValueError, OSError) as exc:
        print(_error_line(EXIT_STAGE, exc, args.command), file=sys.stderr)
        return EXIT_STAGE
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
