import numpy as np
import pytest
from hypothesis import settings

from vistakaap.predictor import InputSpec

settings.register_profile("repo", derandomize=True, deadline=None, max_examples=100)
settings.load_profile("repo")

SMALL = InputSpec(image_shape=(8, 8, 3), speech_shape=(8, 8), text_length=6, vocab_size=10)


@pytest.fixture
def spec():
    return SMALL


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def sample(spec, rng):
    return spec.random_sample(rng)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the assertion stays in the test."""

    def record(number: int, name: str, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
