"""Shared pytest hooks: per-criterion summary lines for the acceptance suite."""

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_criterion(cid: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((cid, bool(ok), detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, ok, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{cid} {status} - {detail}")
