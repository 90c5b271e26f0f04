import pytest

from storyplan.automata import Dfa
from storyplan.event_model import EventModel, ObservationModel

_acceptance: dict = {}


@pytest.fixture
def geometric():
    """Two-state chain: stay in s0 or move to the absorbing s1 (which emits e) with probability 1/2."""
    model = EventModel(
        ("s0", "s1"),
        {"s0": {"s0": 0.5, "s1": 0.5}, "s1": {"s1": 1.0}},
        "s0",
        ("e",),
        {"s1": {"e"}},
    )
    spec = Dfa((0, 1), ("e",), {(0, "e"): 1, (1, "e"): 1}, 0, {1})
    channel = ObservationModel(("quiet", "busy"), {"s0": {"quiet": 0.8, "busy": 0.2}, "s1": {"quiet": 0.2, "busy": 0.8}})
    return model, spec, channel


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    label = getattr(item.function, "criterion", None)
    if label is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[label] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_acceptance, key=lambda s: int(s.split()[0])):
        verdict = "PASS" if _acceptance[label] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {label}: {verdict}")
