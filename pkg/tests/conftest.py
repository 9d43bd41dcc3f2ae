from pathlib import Path

import numpy as np
import pytest

import osr
from osr.model import RnnModel
from osr.patching import PatchGeometry

DATA = Path(osr.__file__).parent / "data"
CONFIGS = Path(__file__).resolve().parent.parent / "configs"

_criteria: dict[int, str] = {}


@pytest.fixture
def report():
    """Record a one-line verdict for an acceptance criterion and print it."""
    def _report(number: int, name: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        _criteria[number] = line
        print(line)
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        terminalreporter.write_line(_criteria[n])


def identity_model(L_t=9, N_x=9, mode="p2p", blur_sigma=1.6, noise_sigma=0.0, decimation=1):
    """A model that passes its input through: x = ReLU(y) - ReLU(-y)."""
    geom = PatchGeometry(L_t, N_x, mode=mode)
    eye = np.eye(N_x)
    W_zy = np.hstack([eye, -eye])
    W_xz = np.vstack([eye, -eye])
    if mode == "p2x":
        W_xz = W_xz[:, geom.n_L:geom.n_L + 1]
    meta = {"degradation": {"blur_sigma": blur_sigma, "noise_sigma": noise_sigma,
                            "decimation": decimation, "kernel_size": 25},
            "decimation": decimation}
    return RnnModel(W_zy, np.zeros((2 * N_x, 2 * N_x)), np.zeros(2 * N_x), W_xz, geom,
                    residual=False, meta=meta)
