from pathlib import Path

import pytest

from knobrag.knobspace import KnobRegistry, KnobSpec, KnobValue, load_registry

FIXTURES = Path(__file__).parent / "fixtures"
SLOW_INSERT = FIXTURES / "slow_insert"


@pytest.fixture(scope="session")
def mysql_registry():
    return load_registry(FIXTURES / "mysql57.registry")


@pytest.fixture
def small_registry():
    return KnobRegistry([
        KnobSpec("autocommit", "boolean", default=KnobValue("1", True)),
        KnobSpec("foreign_key_checks", "boolean"),
        KnobSpec("unique_checks", "boolean"),
        KnobSpec("innodb_buffer_pool_size", "integer", 5 << 20, 1 << 40),
        KnobSpec("innodb_log_buffer_size", "integer", 1 << 20, (1 << 32) - 1),
        KnobSpec("innodb_flush_method", "enumeration", choices=("fsync", "O_DSYNC", "O_DIRECT")),
        KnobSpec("long_query_time", "real", 0.0, 31536000.0),
        KnobSpec("init_connect", "enumeration", choices=("*",)),
    ], "test-db")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
