"""
Preflight diagnostics: find out why checks cannot run before running them.

Each layer is probed on its own: interpreter, packages, environment settings,
the sampled-evaluation pipeline and the shipped manifests. Nothing here runs a
full verification, so the doctor stays fast even when a manifest is huge.

Run with:  atwist doctor
"""
from __future__ import annotations

import importlib.metadata
import importlib.util
import logging
import sys
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)

# Status values, ordered by severity.
OK = "OK"
WARN = "WARN"
FAIL = "FAIL"

_ICON = {OK: "[ OK ]", WARN: "[WARN]", FAIL: "[FAIL]"}


@dataclass
class Check:
    name: str
    status: str
    detail: str = ""
    fix: str = ""

    def render(self) -> str:
        line = f"{_ICON[self.status]} {self.name}"
        if self.detail:
            line += f"\n        {self.detail}"
        if self.fix and self.status != OK:
            line += f"\n        -> {self.fix}"
        return line


# ── Individual checks ─────────────────────────────────────────────────────────

def check_python() -> Check:
    v = sys.version_info
    version = f"{v.major}.{v.minor}.{v.micro}"
    if v < (3, 10):
        return Check("Python version", FAIL, f"found {version}", "Install Python 3.10 or newer.")
    return Check("Python version", OK, version)


def _module_present(name: str) -> bool:
    """True if importable without importing it."""
    try:
        return importlib.util.find_spec(name) is not None
    except (ImportError, ValueError):
        return False


def _version(dist: str) -> str:
    try:
        return importlib.metadata.version(dist)
    except importlib.metadata.PackageNotFoundError:
        return "unknown"


def check_required_packages() -> list[Check]:
    required = {"sympy": "sympy", "numpy": "numpy", "pydantic": "pydantic"}
    checks = []
    for module, dist in required.items():
        if _module_present(module):
            checks.append(Check(f"package: {module}", OK, _version(dist)))
        else:
            checks.append(Check(f"package: {module}", FAIL, "not installed", f"pip install {dist}"))
    if _module_present("pydantic") and _version("pydantic").split(".")[0] == "1":
        found = _version("pydantic")
        checks.append(Check("pydantic major version", FAIL, f"found {found}", "pip install 'pydantic>=2'"))
    return checks


def check_optional_packages() -> list[Check]:
    optional = {
        "dotenv": ("python-dotenv", ".env files are ignored"),
        "hypothesis": ("hypothesis", "parser property tests will not run"),
        "pytest": ("pytest", "the test suite will not run"),
    }
    checks = []
    for module, (dist, effect) in optional.items():
        if _module_present(module):
            checks.append(Check(f"package: {module}", OK, _version(dist)))
        else:
            checks.append(Check(f"package: {module}", WARN, f"not installed - {effect}", f"pip install {dist}"))
    return checks


def check_env_file() -> Check:
    """A UTF-16 .env loads nothing; a BOM is tolerated."""
    env_path = Path.cwd() / ".env"
    if not env_path.exists():
        return Check(".env file", OK, "none - using shell environment and defaults")
    try:
        head = env_path.read_bytes()[:3]
    except OSError as e:
        return Check(".env file", WARN, f"{env_path} - could not read: {e}")
    if head[:2] in (b"\xff\xfe", b"\xfe\xff"):
        return Check(".env file", FAIL, f"{env_path} - is UTF-16 encoded; none of its settings will load",
                     "Rewrite it as UTF-8.")
    return Check(".env file", OK, str(env_path))


def check_settings() -> Check:
    from pydantic import ValidationError

    from atwist.settings import RunSettings

    try:
        settings = RunSettings.from_env()
    except ValidationError as e:
        return Check("ATWIST_* settings", FAIL, str(e).splitlines()[0], "Fix or unset the offending variable.")
    return Check("ATWIST_* settings", OK,
                 f"samples={settings.samples} tol={settings.tol:g} seed={settings.seed} trials={settings.trials}")


def check_sampling() -> Check:
    """One sampled identity end to end: sympy -> lambdify -> numpy."""
    import sympy as sp

    from atwist.algebra.symexpr import Chart, Sampler, equiv

    chart = Chart.standard(2)
    x1, x2 = chart.symbols
    report = equiv(sp.exp(x1 + x2), sp.exp(x1) * sp.exp(x2), Sampler(seed=0, n_samples=8), chart, "doctor")
    if not report.passed:
        return Check("sampled evaluation", FAIL, f"exp(x1 + x2) != exp(x1) exp(x2), residual {report.max_residual:.3e}",
                     "Reinstall numpy and sympy; the evaluation backend is broken.")
    return Check("sampled evaluation", OK, f"{report.points_used} points")


def check_manifests() -> list[Check]:
    from atwist.manifest.errors import ManifestError
    from atwist.manifest.parser import golden_manifests, load_manifest

    names = golden_manifests()
    if not names:
        return [Check("shipped manifests", WARN, "none found", "Reinstall atwist; package data is missing.")]
    checks = []
    for name in names:
        try:
            manifest = load_manifest(name)
        except (ManifestError, OSError) as e:
            checks.append(Check(f"manifest: {name}", FAIL, str(e), "The shipped file is damaged; reinstall atwist."))
            continue
        checks.append(Check(f"manifest: {name}", OK, f"dim {manifest.chart.dim}"))
    return checks


# ── Runner ────────────────────────────────────────────────────────────────────

def run_all() -> list[Check]:
    """Run every check. Never raises."""
    checks: list[Check] = []
    steps: list[tuple[str, Callable[[], list[Check]]]] = [
        ("python", lambda: [check_python()]),
        ("required packages", check_required_packages),
        ("optional packages", check_optional_packages),
        (".env", lambda: [check_env_file()]),
        ("settings", lambda: [check_settings()]),
        ("sampling", lambda: [check_sampling()]),
        ("manifests", check_manifests),
    ]
    for label, step in steps:
        try:
            checks.extend(step())
        except Exception as e:
            logger.debug(f"doctor step {label} raised", exc_info=True)
            checks.append(Check(f"check failed: {label}", FAIL, f"{type(e).__name__}: {e}",
                                "Run atwist doctor --verbose for the traceback."))
    return checks


def report(checks: list[Check]) -> int:
    """Print the report. Returns a process exit code (0 = usable)."""
    fails = [c for c in checks if c.status == FAIL]
    warns = [c for c in checks if c.status == WARN]

    print("=" * 68)
    print(" atwist preflight diagnostics")
    print("=" * 68)
    for c in checks:
        print(c.render())
    print("-" * 68)

    if fails:
        print(f"{len(fails)} blocking problem(s), {len(warns)} warning(s).")
        return 1
    if warns:
        print(f"No blocking problems. {len(warns)} warning(s).")
    else:
        print("All checks passed.")
    print("\nNext: atwist validate example_1_1_5")
    return 0


def main() -> int:
    return report(run_all())
