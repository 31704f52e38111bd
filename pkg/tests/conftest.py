import numpy as np
import pytest

ACCEPTANCE_TITLES = {
    1: "combinatorial-sum oracle equivalence",
    2: "runs decomposition identity and path reconstruction",
    3: "graph regression identities",
    4: "covariance matching Y vs D",
    5: "graph limit closed-form covariances",
    6: "bound dominance",
    7: "rate behaviour",
    8: "PSD square-root round trip",
    9: "interior-block equivalence",
    10: "determinism across thread counts",
}
_RESULTS: dict = {}


@pytest.fixture
def record():
    """record(k, passed, detail) stores the verdict of acceptance criterion k."""

    def _record(k: int, passed: bool, detail: str = ""):
        prev = _RESULTS.get(k)
        ok = bool(passed) and (prev is None or prev[0])
        details = [d for d in ((prev[1] if prev else ""), detail) if d]
        _RESULTS[k] = (ok, "; ".join(details))

    return _record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    ran = any("test_acceptance" in str(r.nodeid) for rs in terminalreporter.stats.values() for r in rs
              if hasattr(r, "nodeid"))
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for k, title in ACCEPTANCE_TITLES.items():
        if k in _RESULTS:
            ok, detail = _RESULTS[k]
            status = "PASS" if ok else "FAIL"
        else:
            status, detail = "FAIL", "not evaluated (test errored or was deselected)"
        terminalreporter.write_line(f"ACCEPTANCE [{k}] {status}: {title} -- {detail}")
