import warnings

import numpy as np
import pytest

from dftk.fields import CoarseGridWarning


@pytest.fixture(autouse=True)
def _quiet_coarse_grids():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseGridWarning)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[cid]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name} {'ok' if good else 'FAILED'}: {d}" for name, good, d in parts)
        terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'}  {detail}")
