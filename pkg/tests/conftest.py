import numpy as np
import pytest

from dfcdit import lossnet as ln
from dfcdit.synthetic import synthetic_corpus

# Desk-scale fixture settings shared by the training tests and the
# acceptance suite.
FIXTURE_LR = 0.002
FIXTURE_BATCH = 8
FIXTURE_ITERATIONS = 200
FIXTURE_SEED = 0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_lossnet():
    return ln.random_lossnet("tiny", widths=(4, 4), seed=7)


@pytest.fixture(scope="session")
def narrow_lossnet():
    return ln.random_lossnet("vgg19-narrow", widths=(8, 16, 32, 64, 64), seed=FIXTURE_SEED)


@pytest.fixture(scope="session")
def corpus():
    return synthetic_corpus(20, 64, seed=FIXTURE_SEED)


@pytest.fixture(scope="session")
def tiny_archive(tmp_path_factory, tiny_lossnet):
    path = tmp_path_factory.mktemp("weights") / "tiny.dfcw"
    ln.save_weights(tiny_lossnet, path)
    return path


@pytest.fixture(scope="session")
def narrow_archive(tmp_path_factory, narrow_lossnet):
    path = tmp_path_factory.mktemp("weights") / "narrow.dfcw"
    ln.save_weights(narrow_lossnet, path)
    return path


# --- acceptance reporting ------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[list]()


class _Criterion:
    def __init__(self, config, number, title):
        self.config, self.number, self.title = config, number, title
        self.details = []

    def note(self, text):
        self.details.append(str(text))

    def check(self, ok, text):
        self.note(text)
        assert ok, text

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.details)
        if exc_type is not None and not (exc_type is AssertionError and self.details):
            detail = f"{detail}; {exc_type.__name__}: {exc}" if detail else f"{exc_type.__name__}: {exc}"
        line = f"[{status}] criterion {self.number:>2}: {self.title} ({detail})"
        print(line)
        self.config.stash.setdefault(_ACCEPTANCE, []).append((self.number, line))
        return False


@pytest.fixture
def criterion(request):
    """``with criterion(n, title) as c:`` records one PASS/FAIL line."""
    return lambda number, title: _Criterion(request.config, number, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
