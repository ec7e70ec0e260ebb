import os
import sys

import pytest

from boundedgauss import oracles

FIXTURES = os.path.join(os.path.dirname(__file__), 'fixtures')


class GoldenTable:
    def __init__(self, rows):
        self._rows = {(r.name, r.parameters): r for r in rows}

    def rows(self):
        return list(self._rows.values())

    def __call__(self, name, parameters):
        return self._rows[(name, parameters)]


@pytest.fixture(scope='session')
def golden():
    return GoldenTable(oracles.read_golden_table(os.path.join(FIXTURES, 'golden_values.tsv')))


def pytest_terminal_summary(terminalreporter):
    # one line per acceptance criterion that ran, in criterion order
    module = sys.modules.get('test_acceptance')
    results = getattr(module, 'RESULTS', None)
    if results:
        terminalreporter.section('acceptance criteria')
        for number in sorted(results):
            terminalreporter.write_line(results[number][1])
