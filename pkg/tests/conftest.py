import numpy as np
import pytest

from assetembed.sampler import build_tables
from assetembed.similarity import WindowConfig, build_cooccurrence
from assetembed.testkit import FactorModelSpec, generate_factor_panel


@pytest.fixture(scope="session")
def block_panel():
    return generate_factor_panel(FactorModelSpec())


@pytest.fixture(scope="session")
def block_tables(block_panel):
    return build_tables(build_cooccurrence(block_panel, WindowConfig()))


def block_gap(vectors, blocks):
    """Mean within-block cosine minus mean cross-block cosine, diagonal excluded."""
    unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    cos = unit @ unit.T
    same = blocks[:, None] == blocks[None, :]
    off = ~np.eye(len(blocks), dtype=bool)
    return cos[same & off].mean() - cos[~same].mean()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
