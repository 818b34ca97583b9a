"""Shared pytest hooks: one summary line per acceptance criterion."""

from __future__ import annotations

import re

_TITLES = {
    1: "dark-state algebra",
    2: "displacement-overlap oracle",
    3: "exact-propagator agreement",
    4: "collective ground-state capture",
    5: "noise robustness and blockade",
    6: "ramp hysteresis",
    7: "criterion-simulation consistency",
    8: "emission statistics",
    9: "conservation and determinism",
}

_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcome: dict[int, dict] = {}
    for reports in terminalreporter.stats.values():
        for rep in reports:
            found = _PATTERN.search(getattr(rep, "nodeid", ""))
            if found is None:
                continue
            n = int(found.group(1))
            slot = outcome.setdefault(n, {"passed": False, "bad": False})
            if getattr(rep, "failed", False) or getattr(rep, "skipped", False):
                slot["bad"] = True
            elif (getattr(rep, "when", "") == "call"
                  and getattr(rep, "passed", False)):
                slot["passed"] = True
    if not outcome:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(outcome):
        ok = outcome[n]["passed"] and not outcome[n]["bad"]
        title = _TITLES.get(n, "unnamed")
        terminalreporter.write_line(
            f"ACCEPTANCE {n} ({title}): {'PASS' if ok else 'FAIL'}")
