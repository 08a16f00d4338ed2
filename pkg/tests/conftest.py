import numpy as np
import pytest

from trotterbench import _accel
from trotterbench.model import LayeredSystem


@pytest.fixture(params=["jit", "numpy"])
def path(request, monkeypatch):
    """Run a test once per kernel path."""
    if request.param == "jit" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    monkeypatch.setattr(_accel, "USE_JIT", request.param == "jit")
    return request.param


@pytest.fixture
def numpy_path(monkeypatch):
    monkeypatch.setattr(_accel, "USE_JIT", False)


def make_system(g, sites, layers, density=0.7, jperp=None):
    ii, jj = np.triu_indices(sites, k=1)
    keep = g.random(ii.size) < density
    spins = g.choice([-1, 1], size=(layers, sites)).astype(np.int32)
    return LayeredSystem(layers, sites, spins, ii[keep].astype(np.int32), jj[keep].astype(np.int32),
                         g.normal(size=int(keep.sum())), g.normal(size=sites),
                         float(g.uniform(0.0, 2.0)) if jperp is None else jperp)


# -- acceptance summary ---------------------------------------------------------------

_criteria: dict[int, tuple[str, bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    if report.failed:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else detail
    _criteria[number] = (title, report.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, passed, detail = _criteria[number]
        terminalreporter.write_line(
            f"criterion {number} {title}: {'PASS' if passed else 'FAIL'} ({detail})")
