import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from diary_forecast.dataset import DEFAULT_COLUMNS, Cohort, SubjectSeries
from diary_forecast.synth import SynthConfig, generate_cohort

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled in by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def make_series(sid, days, features, labels, columns=None, start="2021-03-01"):
    """Series from 1-based day numbers; ``features`` rows may contain nan."""
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    columns = columns or tuple(f"diary_{i + 1:02d}" for i in range(features.shape[1]))
    dates = np.datetime64(start, "D") + np.asarray(days) - 1
    return SubjectSeries(sid, dates, features, np.asarray(labels, dtype=float), tuple(columns))


@pytest.fixture(scope="session")
def small_cohort() -> Cohort:
    return generate_cohort(SynthConfig(n_subjects=6, n_days=40, seed=3))


@pytest.fixture(scope="session")
def ten_subject_cohort() -> Cohort:
    return generate_cohort(SynthConfig(n_subjects=10, n_days=60, seed=11))


@pytest.fixture(scope="session")
def full_columns():
    return DEFAULT_COLUMNS
