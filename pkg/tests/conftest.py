import sys
from datetime import datetime, timezone

import pytest

from pollstrat import synth
from pollstrat.core import Election, PollRecord, default_registry
from pollstrat.pipeline import prepare


@pytest.fixture(scope="session")
def registry():
    return default_registry()


def make_poll(options, poll_id="p1", election=Election.Y2020, when=None, **kw):
    when = when or datetime(2020, 10, 1, 12, tzinfo=timezone.utc)
    return PollRecord(poll_id, "a1", when, election, tuple(options), **kw)


@pytest.fixture(scope="session")
def exact_corpus():
    """Zero-noise corpus with huge vote totals so integer rounding is negligible."""
    spec = synth.default_spec(11, 400, votes_low=10**8, votes_high=10**9)
    corpus = synth.generate(spec)
    rows = prepare(corpus.bundle.polls, corpus.bundle.attributes, spec.registry, color_map=corpus.color_map).rows
    return corpus, rows


@pytest.fixture(scope="session")
def noisy_corpus():
    spec = synth.default_spec(5, 400, noise_sd=0.05, missingness=0.2)
    corpus = synth.generate(spec)
    rows = prepare(corpus.bundle.polls, corpus.bundle.attributes, spec.registry, color_map=corpus.color_map).rows
    return corpus, rows


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion that ran."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.format_result(n))
