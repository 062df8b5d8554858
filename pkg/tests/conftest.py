"""Shared pytest wiring: the acceptance checklist summary.

Acceptance tests are named test_c<NN>_* (one test per numbered criterion).
After a run that includes any of them, one PASS/FAIL line per criterion is
printed so the checklist can be read off a full-suite run directly.
"""

from __future__ import annotations

import re

CRITERIA = {
    1: "analytic loss gradients match central finite differences",
    2: "preference loss reduces to the pairwise sequence baseline",
    3: "inversion counting matches the quadratic oracle",
    4: "wait-k schedules hit the closed-form lag exactly",
    5: "worst-case lag stays under its linear bound",
    6: "enumerated optimal policy round-trips its rewards",
    7: "prefix extraction matches the brute-force condition",
    8: "policy loop reproduces scripted traces and monotonicity",
    9: "latency pressure lowers confidence and raises lag",
    10: "preference tuning holds quality at the lowest latency",
    11: "seeded commands emit byte-identical outputs",
}

_PATTERN = re.compile(r"test_c(\d{2})_")


def _criterion_of(nodeid: str) -> int | None:
    m = _PATTERN.search(nodeid)
    return int(m.group(1)) if m else None


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes: dict[int, str] = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            num = _criterion_of(getattr(report, "nodeid", ""))
            if num is not None:
                verdict = "PASS" if status == "passed" else "FAIL"
                # a failure anywhere outranks an earlier pass for the same line
                if outcomes.get(num) != "FAIL":
                    outcomes[num] = verdict
    if not outcomes:
        return
    terminalreporter.section("acceptance checklist")
    for num in sorted(outcomes):
        label = CRITERIA.get(num, "unknown criterion")
        terminalreporter.write_line(f"[{outcomes[num]}] criterion {num:2d}: {label}")
