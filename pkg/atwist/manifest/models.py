"""
Manifest and report models.

A Manifest is the fully resolved content of a manifest file: scalars are
already substituted into every coefficient, so two manifests compare equal
exactly when their structures do.
"""
from __future__ import annotations

from enum import Enum
from typing import Any

import sympy as sp
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter

from atwist.algebra.symexpr import Chart
from atwist.algebra.tensorcalc import FormField, MultiVectorField
from atwist.geometry.polarize import Polarization, QuadratureGrid, QuantSection
from atwist.geometry.prequantum import ContravariantD, PrequantCertificate, build_derivative
from atwist.geometry.twisted_core import AtpStructure
from atwist.manifest.errors import MissingBlock, UnknownIdentifier


class DerivativeChoice(str, Enum):
    PLAIN = "plain"
    CERTIFICATE = "certificate"


class Manifest(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    chart: Chart
    scalars: dict[str, Any] = Field(default_factory=dict, description="Named scalars, fully resolved")
    bivector: MultiVectorField | None = None
    phi: FormField | None = None
    theta: FormField | None = None
    Z: MultiVectorField | None = None
    eta: FormField | None = None
    vartheta: FormField | None = None
    omega: FormField | None = None
    polarizations: dict[str, Polarization] = Field(default_factory=dict)
    sections: dict[str, Any] = Field(default_factory=dict, description="Expected members of H0")
    probes: dict[str, Any] = Field(default_factory=dict, description="Sections whose H0 residuals are only reported")
    observables: dict[str, Any] = Field(default_factory=dict, description="Expected members of Q(P)")
    real_observables: dict[str, Any] = Field(default_factory=dict, description="Observables for anti-Hermiticity")
    bump_sections: dict[str, Any] = Field(default_factory=dict, description="Compactly supported sections")
    quadrature: QuadratureGrid = Field(default_factory=QuadratureGrid)
    hilbert_derivative: DerivativeChoice = DerivativeChoice.PLAIN

    # ── Derived objects ──────────────────────────────────────────────────────

    def structure(self, needed_by: str = "") -> AtpStructure:
        if self.bivector is None:
            raise MissingBlock("Lambda", needed_by)
        return AtpStructure(
            self.bivector,
            self.phi if self.phi is not None else FormField.zero(self.chart, 3),
            self.theta if self.theta is not None else FormField.zero(self.chart, 1),
        )

    def certificate(self, needed_by: str = "") -> PrequantCertificate:
        if self.Z is None:
            raise MissingBlock("Z", needed_by)
        if self.eta is None:
            raise MissingBlock("eta", needed_by)
        return PrequantCertificate(self.Z, self.eta, self.vartheta)

    def certificate_derivative(self, needed_by: str = "") -> ContravariantD:
        certificate = self.certificate(needed_by)
        if certificate.potential is None:
            raise MissingBlock("vartheta", needed_by)
        return build_derivative(self.structure(needed_by), certificate)

    def hilbert_D(self, needed_by: str = "") -> ContravariantD:
        if self.hilbert_derivative is DerivativeChoice.CERTIFICATE:
            return self.certificate_derivative(needed_by)
        return ContravariantD.plain(self.structure(needed_by))

    def polarization(self, needed_by: str = "") -> Polarization:
        if not self.polarizations:
            raise MissingBlock("polarization.<name>", needed_by)
        return next(iter(self.polarizations.values()))

    def section(self, name: str) -> QuantSection:
        for block in (self.sections, self.bump_sections, self.probes):
            if name in block:
                return QuantSection(self.chart, block[name])
        raise UnknownIdentifier(f"no section {name!r}", token=name)

    def symbol(self, k: int) -> sp.Symbol:
        return self.chart.coord(k)


# ── Reports ──────────────────────────────────────────────────────────────────

class CheckStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    WARN = "warn"


_ICON = {CheckStatus.PASS: "[ OK ]", CheckStatus.WARN: "[WARN]", CheckStatus.FAIL: "[FAIL]"}


class CheckReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    check: str
    status: CheckStatus
    max_residual: float | None = None
    samples: int = 0
    seed: int = 0
    wall_ms: float | None = None

    def render(self) -> str:
        line = f"{_ICON[self.status]} {self.check}"
        if self.max_residual is not None:
            line += f"  (max residual {self.max_residual:.3e}, {self.samples} samples)"
        return line


_REPORTS = TypeAdapter(list[CheckReport])


def reports_to_json(reports: list[CheckReport]) -> str:
    return _REPORTS.dump_json(reports, indent=2).decode("utf-8") + "\n"


def reports_from_json(text: str) -> list[CheckReport]:
    return _REPORTS.validate_json(text)
