import pytest

from modmpc import _admm_py, qp


@pytest.fixture(params=["compiled", "python"])
def admm_backend(request, monkeypatch):
    """Run a test once per ADMM backend (compiled one skipped if not built)."""
    if request.param == "compiled":
        if qp.KERNEL != "compiled":
            pytest.skip("compiled kernel not available")
    else:
        monkeypatch.setattr(qp, "_admm_loop", _admm_py.admm_loop)
    return request.param


_GATE: dict[str, str] = {}


@pytest.fixture
def gate(request):
    """Record the one-line outcome of an acceptance criterion."""
    def report(label: str, ok: bool, detail: str, status: str | None = None) -> None:
        _GATE[request.node.nodeid] = f"{status or ('PASS' if ok else 'FAIL')}  {label}: {detail}"
    return report


def pytest_terminal_summary(terminalreporter):
    failed = {r.nodeid for r in terminalreporter.stats.get("failed", [])}
    ids = sorted(set(_GATE) | {n for n in failed if "test_acceptance" in n})
    if not ids:
        return
    terminalreporter.section("acceptance gate")
    for nodeid in ids:
        line = _GATE.get(nodeid, f"FAIL  {nodeid.split('::')[-1]}: raised before reporting")
        if nodeid in failed and line.startswith("PASS"):
            line = "FAIL" + line[4:]
        terminalreporter.write_line(line)
