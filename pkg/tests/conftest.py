import pytest

from polyblend.dynamics import ModelParams
from polyblend.potential import PotentialParams

# reference potential and model used throughout (mild coupling)
REF_POTENTIAL = PotentialParams(1.0, 2.0, 1.0, 2.0, 0.1, 0.05, 0.05, 1e-3)


@pytest.fixture
def ref_potential():
    return REF_POTENTIAL


@pytest.fixture
def ref_model():
    return ModelParams(1e-3, 1e-3, 0.5, 0.0, "conserved", REF_POTENTIAL)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Record one PASS/FAIL line for an acceptance criterion and fail the test if it did not pass."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} [{number:2d}] {title}: {detail}"
        lines.append((number, line))
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda x: x[0]):
            terminalreporter.write_line(line)
