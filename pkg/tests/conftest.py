import re

CRITERIA = {
    1: "exact field identities",
    2: "sampler exactness",
    3: "compact bound domination",
    4: "global bound domination",
    5: "example formula reproduction",
    6: "consistency chain",
    7: "covering sanity",
    8: "series truncation soundness",
    9: "certify determinism",
}

_NAME = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter):
    seen = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            m = _NAME.search(getattr(rep, "nodeid", ""))
            if not m or getattr(rep, "when", "call") not in ("call", "setup"):
                continue
            n = int(m.group(1))
            ok = key == "passed"
            seen[n] = seen.get(n, True) and ok
    if not seen:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        if n in seen:
            status = "PASS" if seen[n] else "FAIL"
        else:
            status = "NOT RUN"
        terminalreporter.write_line(f"criterion {n} ({CRITERIA[n]}): {status}")
