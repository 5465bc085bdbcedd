"""
atwist CLI: check a manifest from the command line.

Usage:
    atwist validate example_1_1_5             # shipped manifest, by name
    atwist prequant path/to/structure.atw --seed 3 --json out.json
    atwist report section_6 --samples 128 --timings
    atwist doctor                             # environment preflight
    atwist list                               # shipped manifests

Exit codes: 0 every check passed (warnings allowed), 1 a check failed,
2 the input could not be read or lacks a block the subcommand needs.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from atwist import __version__

logger = logging.getLogger("atwist")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _load_env() -> None:
    """Load .env from the working directory, then the project root.

    utf-8-sig strips the BOM some Windows editors write, which would otherwise
    end up in the first variable's name.
    """
    try:
        from dotenv import load_dotenv
    except ImportError:
        return
    for env_path in (Path.cwd() / ".env", Path(__file__).resolve().parent.parent / ".env"):
        if env_path.exists():
            load_dotenv(env_path, encoding="utf-8-sig")


def _make_stdout_unicode_safe() -> None:
    """Reports print sub- and superscripts; a cp1252 pipe must not crash the run."""
    for stream in (sys.stdout, sys.stderr):
        try:
            stream.reconfigure(encoding="utf-8", errors="replace")
        except Exception:
            pass  # not a real TTY / already wrapped


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
        stream=sys.stderr,
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--samples", type=int, default=None, help="Sample points per identity check (default: 64)")
    common.add_argument("--tol", type=float, default=None, help="Relative tolerance (default: 1e-9)")
    common.add_argument("--seed", type=int, default=None, help="Seed for every sampled check (default: 0)")
    common.add_argument("--grid", type=int, default=None,
                        help="Quadrature points per axis (default: the manifest's, else 17)")
    common.add_argument("--trials", type=int, default=None, help="Random instances per property check (default: 3)")
    common.add_argument("--workers", type=int, default=None, help="Threads running independent checks (default: 1)")
    common.add_argument("--json", type=Path, default=None, metavar="PATH", help="Also write the reports as JSON")
    common.add_argument("--timings", action="store_true", default=None, help="Record wall time per check")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(
        prog="atwist",
        description="Symbolic verification of theta-almost twisted Poisson structures and their quantization.",
    )
    parser.add_argument("--version", action="version", version=f"atwist {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("validate", "Structure axioms, coboundary and Jacobiator identities"),
        ("prequant", "Prequantization certificate, curvature and operator identities"),
        ("polarize", "Polarization checks and quantizable observables"),
        ("hilbert", "Quantization space, operator invariance and anti-hermiticity"),
        ("report", "Every subcommand whose blocks the manifest provides"),
    ):
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        p.add_argument("manifest", help="Manifest path, or the name of a shipped manifest")
    sub.add_parser("doctor", parents=[common], help="Diagnose the environment")
    sub.add_parser("list", parents=[common], help="List shipped manifests")
    return parser


def _settings(args: argparse.Namespace):
    from atwist.settings import RunSettings

    return RunSettings.from_env(
        samples=args.samples,
        tol=args.tol,
        seed=args.seed,
        grid=args.grid,
        trials=args.trials,
        workers=args.workers,
        timings=args.timings,
        log_level="DEBUG" if args.verbose else None,
    )


def _check(command: str, args: argparse.Namespace, settings) -> int:
    from atwist.manifest.errors import ManifestError
    from atwist.manifest.models import reports_to_json
    from atwist.manifest.parser import load_manifest
    from atwist.manifest.runner import run

    try:
        manifest = load_manifest(args.manifest)
        reports, code = run(command, manifest, settings)
    except (OSError, UnicodeDecodeError) as exc:
        logger.error(f"cannot read manifest: {exc}")
        return EXIT_INPUT
    except ManifestError as exc:
        logger.error(f"{args.manifest}: {exc.render()}")
        return EXIT_INPUT

    for report in reports:
        print(report.render())
    failed = sum(r.status.value == "fail" for r in reports)
    print(f"\n{len(reports)} check(s), {failed} failed")
    if args.json is not None:
        try:
            args.json.write_text(reports_to_json(reports), encoding="utf-8")
        except OSError as exc:
            logger.error(f"cannot write {args.json}: {exc}")
            return EXIT_INPUT
    return code


def main(argv: list[str] | None = None) -> int:
    _make_stdout_unicode_safe()
    _load_env()
    args = build_parser().parse_args(argv)

    try:
        settings = _settings(args)
    except ValidationError as exc:
        print(f"invalid settings: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _configure_logging(settings.log_level)

    if args.command == "doctor":
        from atwist.diagnostics import main as doctor_main

        return doctor_main()
    if args.command == "list":
        from atwist.manifest.parser import golden_manifests

        for name in golden_manifests():
            print(name)
        return EXIT_OK
    return _check(args.command, args, settings)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
