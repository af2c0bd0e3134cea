import numpy as np
import pytest

from retro_opt.oracle import StochasticOracle

_CRITERIA = []


class TableOracle(StochasticOracle):
    """Finite oracle with tabulated per-sample values and constant gradients."""

    def __init__(self, values, gradients):
        self.values = np.asarray(values, dtype=np.float64)
        self.gradients = np.atleast_2d(np.asarray(gradients, dtype=np.float64))
        super().__init__(self.gradients.shape[1], len(self.values))

    def _values_and_grads(self, x, idx, stream_seed):
        i = idx.astype(np.intp)
        return self.values[i].copy(), self.gradients[i].copy()

    def lipschitz_bound(self, idx, stream_seed):
        return np.zeros(idx.size)


@pytest.fixture
def table_oracle():
    return TableOracle


@pytest.fixture
def criterion():
    """Record one acceptance line; printed in the terminal summary."""

    def report(number, passed, detail):
        _CRITERIA.append((number, bool(passed), detail))
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
