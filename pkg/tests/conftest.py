import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_dataset():
    """120-row synthetic feature set from 24 clean 64x64 crops."""
    from corpus import natural_crops
    from distortion_triage.synth import build_dataset

    return build_dataset(natural_crops(24, size=64, seed=3), per_class=20, seed=11)


@pytest.fixture(scope="session")
def small_ensemble(small_dataset):
    from distortion_triage.gbdt import DEFAULT_CONFIGS, train_ensemble, with_overrides

    quick = {name: with_overrides(cfg, rounds=15) for name, cfg in DEFAULT_CONFIGS.items()}
    return train_ensemble(small_dataset.features, small_dataset.labels, seed=0, configs=quick)


@pytest.fixture(scope="session")
def model_file(small_ensemble, tmp_path_factory):
    from distortion_triage.gbdt import save_model

    path = tmp_path_factory.mktemp("model") / "ensemble.json"
    save_model(small_ensemble, path)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = sorted(getattr(module, "RESULTS", []), key=lambda l: int(l.split("criterion ")[1].split(":")[0]))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
