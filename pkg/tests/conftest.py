import numpy as np
import pytest

from bayescr.data import CovariateEntry, CovariateSchema, Dataset
from bayescr.hazard import CauseModel, ParameterVector, PiecewiseConstantBaseline, WeibullBaseline

# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


def const(rate):
    return WeibullBaseline(shape=1.0, scale=rate)


def theta_const(*rates):
    """Constant-hazard causes without covariates."""
    return ParameterVector(tuple(CauseModel(const(r), np.zeros(0)) for r in rates))


def make_dataset(time, cause, X=None, names=None, labels=None):
    time = np.asarray(time, dtype=float)
    X = np.zeros((len(time), 0)) if X is None else np.asarray(X, dtype=float).reshape(len(time), -1)
    names = names or [f"x{j + 1}" for j in range(X.shape[1])]
    schema = CovariateSchema(tuple(CovariateEntry(n) for n in names))
    K = max(int(np.max(cause)) if len(cause) else 1, 1)
    labels = labels or [f"c{k}" for k in range(1, K + 1)]
    return Dataset(ids=tuple(str(i + 1) for i in range(len(time))), time=time,
                   cause=np.asarray(cause, dtype=int), X=X, schema=schema, cause_labels=labels)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def pw_theta():
    return ParameterVector((
        CauseModel(PiecewiseConstantBaseline((0.0, 1.0, 2.5), (0.3, 0.6, 0.2)), np.array([0.4])),
        CauseModel(WeibullBaseline(0.8, 0.25), np.array([-0.3])),
    ))
