import csv
import json
import os

import numpy as np
import pytest

from chiral_decoherence.electron import ElectronParams
from chiral_decoherence.materials import default_material
from chiral_decoherence.response import ResponseConfig
from chiral_decoherence.slab import Geometry

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def load_golden(name):
    """Rows of ``golden/<name>.csv`` as a float array, plus the sidecar metadata."""
    with open(os.path.join(GOLDEN_DIR, name + ".csv"), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in r] for r in reader])
    with open(os.path.join(GOLDEN_DIR, name + ".meta.json")) as fh:
        meta = json.load(fh)
    return header, rows, meta


@pytest.fixture(scope="session")
def material():
    return default_material()


@pytest.fixture(scope="session")
def geometry():
    return Geometry()


@pytest.fixture(scope="session")
def cfg(material, geometry):
    return ResponseConfig(material, geometry, beta=0.5)


@pytest.fixture(scope="session")
def electron():
    return ElectronParams(0.5)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
