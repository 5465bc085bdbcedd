"""Subcommand orchestration: check lists, exit codes, skipped blocks and reproducible reports."""
from __future__ import annotations

import pytest

from atwist.manifest.errors import MissingBlock
from atwist.manifest.models import CheckStatus, reports_to_json
from atwist.manifest.runner import SUBCOMMANDS, exit_code, run
from atwist.settings import RunSettings


@pytest.fixture(scope="module")
def quick() -> RunSettings:
    return RunSettings(samples=16, trials=1)


def _by_name(reports):
    return {r.check: r for r in reports}


def test_example_structure_validates(example_manifest, quick):
    reports, code = run("validate", example_manifest, quick)
    assert code == 0
    names = [r.check for r in reports]
    assert "validate: d(theta) = 0" in names
    assert "validate: coboundary squares to zero" in names
    assert all(r.status is CheckStatus.PASS for r in reports)
    assert all(r.seed == 0 and r.wall_ms is None for r in reports)


def test_non_poisson_structure_fails_validation(non_poisson_manifest, quick):
    reports, code = run("validate", non_poisson_manifest, quick)
    assert code == 1
    assert _by_name(reports)["validate: [L,L]/2 = anchor(phi)"].status is CheckStatus.FAIL


def test_shipped_certificate_prequantizes(remark_manifest, quick):
    reports, code = run("prequant", remark_manifest, quick)
    assert code == 0, [r.check for r in reports if r.status is CheckStatus.FAIL]
    assert "prequant: P + 2*pi*i*L = 0" in _by_name(reports)


def test_doubled_eta_fails_prequantization(remark_manifest, quick):
    broken = remark_manifest.model_copy(update={"eta": remark_manifest.eta * 2})
    reports, code = run("prequant", broken, quick)
    assert code == 1
    assert any(r.status is CheckStatus.FAIL and "certificate" in r.check for r in reports)


def test_missing_block_fails_fast(non_poisson_manifest, quick):
    with pytest.raises(MissingBlock) as info:
        run("prequant", non_poisson_manifest, quick)
    assert info.value.block == "Z"


def test_report_skips_subcommands_without_their_blocks(non_poisson_manifest, quick):
    reports, code = run("report", non_poisson_manifest, quick)
    skipped = {r.check: r.status for r in reports if r.check.endswith(": skipped")}
    assert skipped == {
        "prequant: skipped": CheckStatus.WARN,
        "polarize: skipped": CheckStatus.WARN,
        "hilbert: skipped": CheckStatus.WARN,
    }
    assert code == 1


def test_observables_are_quantizable(section6_manifest, quick):
    reports, code = run("polarize", section6_manifest, quick)
    assert code == 0
    for name in ("z1", "z2", "t"):
        assert _by_name(reports)[f"polarize: {name} is quantizable"].status is CheckStatus.PASS


def test_hilbert_probe_only_warns(section6_manifest, quick):
    m = section6_manifest.model_copy(update={"real_observables": {}})
    reports, code = run("hilbert", m, quick)
    checks = _by_name(reports)
    assert checks["hilbert: u is in H0"].status is CheckStatus.PASS
    assert checks["hilbert: probe u_half_f"].status is CheckStatus.WARN
    assert checks["hilbert: t preserves H0 on u"].status is CheckStatus.PASS
    assert code == 0


def test_same_seed_gives_identical_json(example_manifest, quick):
    first, _ = run("validate", example_manifest, quick)
    second, _ = run("validate", example_manifest, quick)
    assert reports_to_json(first) == reports_to_json(second)


def test_threaded_run_keeps_declaration_order(example_manifest, quick):
    serial, _ = run("validate", example_manifest, quick)
    threaded, _ = run("validate", example_manifest, quick.model_copy(update={"workers": 2}))
    assert reports_to_json(threaded) == reports_to_json(serial)


def test_timings_are_recorded_on_request(example_manifest):
    reports, _ = run("validate", example_manifest, RunSettings(samples=8, trials=1, timings=True))
    assert all(r.wall_ms is not None and r.wall_ms >= 0 for r in reports)


def test_unknown_subcommand(example_manifest):
    assert "doctor" not in SUBCOMMANDS
    with pytest.raises(ValueError):
        run("doctor", example_manifest)


def test_exit_code_ignores_warnings(example_manifest, quick):
    reports, _ = run("validate", example_manifest, quick)
    warned = [r.model_copy(update={"status": CheckStatus.WARN}) for r in reports]
    assert exit_code(warned) == 0
    assert exit_code(warned + [reports[0].model_copy(update={"status": CheckStatus.FAIL})]) == 1
