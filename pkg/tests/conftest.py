import csv
import json
import sys
from pathlib import Path

import numpy as np
import pytest

from pf2admm.cli.main import WALL_CLOCK_FIELDS
from pf2admm.tensor import Parafac2Model


def random_model(rng, I=6, J=(5, 7, 6), R=2, nonneg=False):
    draw = (lambda s: rng.uniform(0.1, 1.0, s)) if nonneg else rng.standard_normal
    return Parafac2Model(draw((I, R)), [draw((Jk, R)) for Jk in J], rng.uniform(0.5, 1.5, (len(J), R)))


def feasible_model(rng, I=6, J=(5, 7, 6), R=2):
    """Model whose B_k share one Gram matrix (B_k = P_k Delta)."""
    Delta = rng.standard_normal((R, R))
    B = [np.linalg.qr(rng.standard_normal((Jk, R)))[0] @ Delta for Jk in J]
    return Parafac2Model(rng.standard_normal((I, R)), B, rng.uniform(0.5, 1.5, (len(J), R)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def tree_bytes(root, skip=("manifest.json",)):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file() and p.name not in skip}


def _strip_clock(obj):
    if isinstance(obj, dict):
        return {k: _strip_clock(v) for k, v in obj.items() if k not in WALL_CLOCK_FIELDS}
    if isinstance(obj, list):
        return [_strip_clock(v) for v in obj]
    return obj


def comparable_outputs(root):
    """File contents with wall-clock fields removed from JSON and CSV outputs."""
    out = {}
    for name, raw in tree_bytes(root).items():
        if name.endswith(".json"):
            out[name] = _strip_clock(json.loads(raw))
        elif name.endswith(".csv"):
            rows = list(csv.reader(raw.decode().splitlines()))
            keep = [i for i, c in enumerate(rows[0]) if c not in WALL_CLOCK_FIELDS]
            out[name] = [[r[i] for i in keep] for r in rows]
        else:
            out[name] = raw
    return out


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)
