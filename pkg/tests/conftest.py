import csv
import sys

import numpy as np
import pytest
from hypothesis import settings

from p2prisk.data_model import Dataset, FeatureSchema

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


def make_dataset(X, y, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    names = names or [f"f{i}" for i in range(X.shape[1])]
    return Dataset(FeatureSchema.numeric(names), X, np.asarray(y))


def blobs(n_major, n_minor, d=2, sep=3.0, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(sep / 2, 1, (n_major, d)), rng.normal(-sep / 2, 1, (n_minor, d))])
    y = np.r_[np.ones(n_major, int), np.zeros(n_minor, int)]
    return make_dataset(X, y)


@pytest.fixture
def imbalanced():
    return blobs(400, 100, d=3, sep=2.0, seed=3)


LC_HEADER = [
    "id", "loan_amnt", "funded_amnt", "term", "int_rate", "installment", "grade",
    "emp_length", "home_ownership", "annual_inc", "verification_status", "issue_d",
    "loan_status", "purpose", "dti", "revol_bal", "revol_util", "total_pymnt",
    "recoveries", "mostly_empty", "desc",
]


def write_lc_csv(path, n=400, seed=0):
    """Small Lending-Club-shaped file for pipeline tests."""
    rng = np.random.default_rng(seed)
    statuses = ["Fully Paid"] * 8 + ["Charged Off", "Default", "Current", "Late (16-30 days)"]
    purposes = ["debt_consolidation", "credit_card", "car", "other"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LC_HEADER)
        for i in range(n):
            inc = float(rng.lognormal(11, 0.4))
            amount = float(rng.integers(1000, 30000))
            inst = round(amount / 36 * 1.1, 2)
            w.writerow([
                i, amount, amount, rng.choice([" 36 months", " 60 months"]),
                f"{rng.uniform(5, 25):.2f}%", inst, rng.choice(list("ABCDEFG")),
                rng.choice(["< 1 year", "3 years", "10+ years"]),
                rng.choice(["RENT", "OWN", "MORTGAGE"]), f"{inc:.0f}",
                rng.choice(["Verified", "Not Verified", "Source Verified"]), "Dec-2016",
                statuses[i % len(statuses)], purposes[i % 4], f"{rng.uniform(0, 35):.2f}",
                int(rng.integers(1, 40000)), f"{rng.uniform(0, 100):.1f}%",
                f"{amount * 1.1:.2f}", "0.0", "" if i % 20 else "x",
                "free text" if i % 3 else "",
            ])


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "ACCEPTANCE_LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
