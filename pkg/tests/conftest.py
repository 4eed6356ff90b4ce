import numpy as np
import pytest

from adaptive_mhe.disturbance import NoiseSpec, corrupt, make_rng
from adaptive_mhe.mhe import EstimationWindow
from adaptive_mhe.robust_loss import ALPHA_MAX
from adaptive_mhe.vehicle import output, reference_path, simulate


@pytest.fixture(scope="session")
def trajectory():
    qs, us = simulate(reference_path(), 600)
    return qs, us


def make_window(qs, us, start, n, ys=None, prior=None, weight=10.0, alpha=ALPHA_MAX):
    ys = output(qs) if ys is None else ys
    return EstimationWindow(ys[start:start + n], us[start:start + n - 1],
                            qs[start] if prior is None else prior,
                            np.full((4, n), alpha), weight * np.eye(7), horizon=n - 1)


def noisy_outputs(qs, seed, prob=0.1, kind="uniform"):
    return corrupt(output(qs), NoiseSpec(kind, outlier_prob=prob), make_rng(seed))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
