from contextlib import contextmanager

import numpy as np
import pytest

from egattack.data import Dataset, FeatureSchema
from egattack.models import train
from egattack.synthetic import SyntheticSpec, generate_synthetic


def make_dataset(rows, labels, names=None, non_negative=None, label="label"):
    rows = np.asarray(rows, dtype=float)
    d = rows.shape[1]
    names = tuple(names or (f"f{j}" for j in range(d)))
    flags = tuple(non_negative if non_negative is not None else (False,) * d)
    return Dataset(FeatureSchema(names, flags, label), rows, np.asarray(labels, dtype=np.int64))


class FnModel:
    """Stand-in classifier wrapping a vectorised p1 function."""

    def __init__(self, fn, n_features):
        self.fn = fn
        self.n_features = n_features

    def positive_proba(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return float(self.fn(X[None, :])[0])
        return np.asarray(self.fn(X), dtype=float)

    def predict_proba(self, X):
        p1 = np.asarray(self.positive_proba(X))
        return np.stack([1.0 - p1, p1], axis=-1)

    def predict(self, X):
        return (np.asarray(self.positive_proba(X)) >= 0.5).astype(np.int64)


@pytest.fixture(scope="session")
def small_synth():
    return generate_synthetic(SyntheticSpec(n_samples=400, n_features=6, n_informative=3, seed=3))


@pytest.fixture(scope="session")
def fitted_zoo(small_synth):
    hp = {
        "LR": {},
        "DT": {"max_depth": 5},
        "RF": {"n_estimators": 10, "max_depth": 6},
        "BAG": {"n_estimators": 5, "max_depth": 6},
        "ADA": {"n_estimators": 20},
        "GBC": {"n_estimators": 20},
        "MLP": {"hidden_layer_sizes": [8], "max_iter": 200},
    }
    return {k: train(k, v, small_synth, seed=1) for k, v in hp.items()}


# acceptance outcomes, printed as one line per criterion at the end of the run
ACCEPTANCE = {}


@contextmanager
def criterion(number, title):
    """Record PASS or FAIL for an acceptance criterion; ``note`` holds a detail string."""
    note = {"detail": ""}
    try:
        yield note
    except BaseException:
        ACCEPTANCE[number] = (title, "FAIL", note["detail"])
        raise
    ACCEPTANCE[number] = (title, "PASS", note["detail"])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, verdict, detail = ACCEPTANCE[number]
        line = f"criterion {number:>2} {verdict}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
