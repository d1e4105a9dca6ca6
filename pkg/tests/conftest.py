import numpy as np
import pytest

from csifeedback import channel, pipeline
from csifeedback.config import PROFILES, ScenarioConfig

TINY = ScenarioConfig(n_x=2, n_y=2, n_c=8, n_paths=6)


def random_normalized(rng, shape):
    h = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return channel.normalize_channel(h)


@pytest.fixture(scope="session")
def desk_data():
    """Desk-scale noisy UL training set plus noiseless and noisy DL test sets."""
    sc = PROFILES["desk"].scenario
    ul, dl = channel.generate_dataset(sc, 700)
    train = channel.noisy_normalized(ul[:600], 10.0, 11)
    test_true = dl[600:]
    test_obs = channel.noisy_normalized(test_true, 10.0, 12)
    return sc, train, test_true, test_obs


@pytest.fixture(scope="session")
def desk_system(desk_data):
    sc, train, _, _ = desk_data
    cfg = pipeline.TrainConfig((0, 64, 256, 1024), 16, "analytic", "per_component")
    return pipeline.train(train, sc.dims, cfg)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        ok, title, elapsed, note = results[num]
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {title}  ({elapsed:.2f} s)"
        terminalreporter.write_line(line + (f"  [{note}]" if note else ""))
