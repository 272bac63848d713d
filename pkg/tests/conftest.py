import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number k")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for k in getattr(report, "criteria", ()):
        _criteria.setdefault(k, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    report.criteria = [m.args[0] for m in item.iter_markers("criterion")]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_criteria):
        ok = all(o == "passed" for o in _criteria[k])
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}")


_history_cache: dict = {}


@pytest.fixture(scope="session")
def history_run():
    """Memoized history construction plus spectral verification per DIMACS text."""
    from entspec.cnf import parse_dimacs
    from entspec.history import (
        build_history_hamiltonian,
        build_history_state,
        intermediate_spectra,
        verify_spectrum,
    )

    def run(dimacs: str):
        if dimacs not in _history_cache:
            start = time.perf_counter()
            f = parse_dimacs(dimacs)
            state = build_history_state(f)
            hh = build_history_hamiltonian(f, state.circuit)
            report = verify_spectrum(hh, state)
            tau, steps, rhos = intermediate_spectra(f, state)
            _history_cache[dimacs] = dict(f=f, state=state, hh=hh, report=report,
                                          tau=tau, steps=steps, rhos=rhos,
                                          elapsed=time.perf_counter() - start)
        return _history_cache[dimacs]

    return run
