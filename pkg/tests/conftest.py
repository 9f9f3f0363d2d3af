from collections import defaultdict

# (criterion, passed, detail) tuples appended by the acceptance tests
ACCEPTANCE = []


def record(criterion: str, passed: bool, detail: str):
    ACCEPTANCE.append((criterion, bool(passed), detail))
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    groups = defaultdict(list)
    for crit, ok, detail in ACCEPTANCE:
        groups[int("".join(ch for ch in crit if ch.isdigit()))].append((crit, ok, detail))
    terminalreporter.section("acceptance criteria")
    for num in sorted(groups):
        entries = groups[num]
        ok = all(e[1] for e in entries)
        detail = "; ".join(f"{c}: {'ok' if p else 'FAILED'} ({d})" if len(entries) > 1 else d for c, p, d in entries)
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} | {detail}")
