import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

import pytest

from respdx.dataset_io import write_dataset
from respdx.synth import CohortSpec, generate_cohort

SMALL_COHORT = {"n_treated": 7, "n_control": 8, "seed": 3}


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    return write_dataset(generate_cohort(CohortSpec(**SMALL_COHORT)), tmp_path_factory.mktemp("data"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
