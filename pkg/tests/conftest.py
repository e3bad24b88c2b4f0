import re

import pytest


def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.fixture
def record(request):
    """Record the verdict of an acceptance criterion; printed again in the terminal summary."""

    def rec(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.acceptance_lines[n] = line
        print(line)
        return ok

    return rec


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # an acceptance test that errors before recording still gets a FAIL line
    outcome = yield
    rep = outcome.get_result()
    m = re.match(r"test_c(\d+)_", item.name)
    if m and rep.when == "call" and rep.failed:
        lines = item.config.acceptance_lines
        n = int(m.group(1))
        if n not in lines:
            lines[n] = f"criterion {n:>2}: FAIL  {call.excinfo.typename}: {call.excinfo.value}"


@pytest.fixture(autouse=True, scope="module")
def _release_compiled():
    # every module compiles its own training loops; drop them afterwards so a
    # full run stays within a few GB
    yield
    import gc

    import jax

    from icann import trainer

    trainer._CHUNK_CACHE.clear()
    jax.clear_caches()
    gc.collect()
