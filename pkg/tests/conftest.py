"""Shared fixtures: parsed corpus and staged optimization levels."""

import pytest

from helpers import corpus_text

from loopforge.bench.driver import build_levels, lower_corpus
from loopforge.frontend import parse_source


@pytest.fixture(scope="session")
def corpus_unit_s():
    return parse_source(corpus_text())


@pytest.fixture(scope="session")
def corpus_kernels_s():
    return lower_corpus()


@pytest.fixture(scope="session")
def staged_nq2():
    """Kernel state after each optimization level, built at Nq=2."""
    return build_levels(2, up_to=8)


@pytest.fixture(scope="session")
def staged_nq8():
    """Kernel state after each optimization level, built at Nq=8."""
    return build_levels(8, up_to=8)
