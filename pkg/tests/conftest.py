"""Shared charts, samplers and the shipped structures."""
from __future__ import annotations

import pytest

from atwist.algebra.symexpr import Chart, Sampler
from atwist.manifest.parser import load_manifest


@pytest.fixture
def sampler() -> Sampler:
    return Sampler(seed=0, n_samples=32)


@pytest.fixture
def chart2() -> Chart:
    return Chart.standard(2)


@pytest.fixture
def chart4() -> Chart:
    return Chart.standard(4)


@pytest.fixture
def chart5() -> Chart:
    return Chart.standard(5, complex_pairs=((1, 2), (3, 4)))


@pytest.fixture(scope="session")
def example_manifest():
    return load_manifest("example_1_1_5")


@pytest.fixture(scope="session")
def remark_manifest():
    return load_manifest("remark_nb3_4")


@pytest.fixture(scope="session")
def section6_manifest():
    return load_manifest("section_6")


@pytest.fixture(scope="session")
def non_poisson_manifest():
    return load_manifest("non_poisson")
