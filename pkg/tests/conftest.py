"""Emit one PASS/FAIL summary line per acceptance criterion after the run."""

_LABELS = {
    "test_criterion_1": "1 schedule correctness",
    "test_criterion_2": "2 forward-process moments",
    "test_criterion_3": "3 sampler identities (bit-exact)",
    "test_criterion_4": "4 Gaussian-oracle generation",
    "test_criterion_5": "5 gradient checks",
    "test_criterion_6": "6 RVQ properties",
    "test_criterion_7": "7 toy end-to-end direction check",
    "test_criterion_8": "8 ablation-grid structure",
    "test_criterion_9": "9 determinism",
}

_outcomes = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.split("::")[-1].split("[")[0]
    for key in _LABELS:
        if name.startswith(key) and report.when == "call":
            _outcomes[key] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_LABELS):
        outcome = _outcomes.get(name)
        if outcome is None:
            continue
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  criterion {_LABELS[name]}")
