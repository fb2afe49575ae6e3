import json
import os
from pathlib import Path

import pytest

# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def record(number: int, title: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE[number] = ("PASS" if ok else "FAIL", title, detail)
    return ok


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory) -> Path:
    """Directory for acceptance CSV/JSON outputs (MNLS_ARTIFACTS overrides)."""
    root = os.environ.get("MNLS_ARTIFACTS")
    path = Path(root) if root else tmp_path_factory.mktemp("acceptance")
    path.mkdir(parents=True, exist_ok=True)
    return path


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, title, detail = ACCEPTANCE[n]
        tr.write_line(f"[{status}] {n:2d}. {title}: {detail}")
    out = os.environ.get("MNLS_ARTIFACTS")
    if out:
        summary = {str(n): {"status": s, "title": t, "detail": d} for n, (s, t, d) in ACCEPTANCE.items()}
        Path(out, "acceptance_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
