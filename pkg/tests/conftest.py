import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

_ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def criterion():
    """Record a named check under an acceptance criterion number."""

    def record(number: int, label: str, ok: bool, detail: str = "") -> bool:
        _ACCEPTANCE.setdefault(number, []).append((label, bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        checks = _ACCEPTANCE[number]
        ok = all(c[1] for c in checks)
        detail = "; ".join(f"{label}: {'ok' if good else 'FAILED'} ({info})"
                           for label, good, info in checks)
        tr.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'} | {detail}")
