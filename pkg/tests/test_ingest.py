import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from p2prisk import ingest
from p2prisk.data_model import ColumnStats, label_counts
from p2prisk.errors import (
    ConstantColumn,
    EmptyResult,
    NoTerminalLoans,
    NonPositiveIncome,
    NonPositiveInstallment,
    ParseError,
    TooFewSamples,
)
from p2prisk.ingest import (
    DEFAULT_LEAKS,
    NormalizationParams,
    correlation_with_target,
    derive_ratios,
    drop_leakage,
    drop_missing,
    filter_and_label,
    iqr_bounds,
    load_csv,
    log_transform,
    minmax_apply,
    minmax_fit_transform,
    one_hot,
    remove_outliers,
    train_test_split,
)

from conftest import make_dataset, write_lc_csv


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ------------------------------------------------------------------ load


def test_load_csv_rows_and_missing(tmp_path):
    raw = load_csv(write(tmp_path, "a,b\n1,x\n,NA\n"))
    assert raw.n_rows == 2
    assert raw.missing["a"].tolist() == [False, True]
    assert raw.missing["b"].tolist() == [False, True]
    assert raw.cells["b"][1] == "NA"


def test_load_csv_quoting(tmp_path):
    raw = load_csv(write(tmp_path, 'a,b\n"1,5","say ""hi"""\n'))
    assert raw.cells["a"][0] == "1,5" and raw.cells["b"][0] == 'say "hi"'


def test_load_csv_ragged_row(tmp_path):
    with pytest.raises(ParseError) as err:
        load_csv(write(tmp_path, "a,b\n1,2\n3\n"))
    assert err.value.row == 3
    assert "row 3" in str(err.value)


def test_load_csv_unreadable(tmp_path):
    with pytest.raises(ParseError):
        load_csv(tmp_path / "missing.csv")


# ------------------------------------------------------------- filtering


def status_table(tmp_path, statuses):
    body = "\n".join(f"{i},{s}" for i, s in enumerate(statuses))
    return load_csv(write(tmp_path, "x,loan_status\n" + body + "\n"))


def test_filter_and_label(tmp_path):
    out = filter_and_label(status_table(tmp_path, ["Fully Paid", "Current", "Charged Off"]))
    assert out.n_rows == 2
    assert out.labels.tolist() == [1, 0]
    assert "loan_status" not in out.columns


def test_filter_and_label_unknown_status_dropped(tmp_path):
    out = filter_and_label(status_table(tmp_path, ["Fully Paid", "Mystery", "Default"]))
    assert out.labels.tolist() == [1, 0]


def test_filter_and_label_all_current(tmp_path):
    with pytest.raises(NoTerminalLoans):
        filter_and_label(status_table(tmp_path, ["Current", "Current"]))


def test_drop_leakage(tmp_path):
    raw = load_csv(write(tmp_path, "int_rate,grade,keep\n5%,A,1\n"))
    out = drop_leakage(raw)
    assert out.columns == ("keep",)
    same = drop_leakage(load_csv(write(tmp_path, "u,v\n1,2\n", "b.csv")))
    assert same.columns == ("u", "v")


def test_default_leak_list_has_thirteen_entries():
    assert len(DEFAULT_LEAKS) == 13 == len(set(DEFAULT_LEAKS))


def test_drop_missing_row_and_column(tmp_path):
    raw = load_csv(write(tmp_path, "a,b\n1,2\n,3\n4,5\n6,7\n"))
    out = drop_missing(raw)
    assert out.n_rows == 3 and out.cells["a"].tolist() == ["1", "4", "6"]

    # 19 of 20 cells missing in column "sparse": over threshold, dropped; rows kept
    lines = ["dense,sparse"] + [f"{i},{'7' if i == 0 else ''}" for i in range(20)]
    out = drop_missing(load_csv(write(tmp_path, "\n".join(lines) + "\n", "c.csv")))
    assert out.columns == ("dense",) and out.n_rows == 20

    dense = load_csv(write(tmp_path, "a\n1\n2\n", "d.csv"))
    assert drop_missing(dense).n_rows == 2


def test_drop_missing_empty(tmp_path):
    with pytest.raises(EmptyResult):
        drop_missing(load_csv(write(tmp_path, "a,b\n1,\n,2\n1,\n,2\n")), max_missing_fraction=0.5)


# ------------------------------------------------------ numeric transforms


def test_iqr_bounds():
    assert iqr_bounds(ColumnStats(2, 6, 0, 10, 4)) == (-4, 12)
    assert iqr_bounds(ColumnStats(5, 5, 5, 5, 5)) == (5, 5)
    assert iqr_bounds(ColumnStats(0, 1, 0, 1, 0.5)) == (-1.5, 2.5)


def test_remove_outliers_hand_computed():
    ds = make_dataset([1, 2, 3, 4, 100], [1, 0, 1, 0, 1], names=["v"])
    # Q1 = 2, Q3 = 4 -> fences (-1, 7)
    out = remove_outliers(ds, ["v"])
    assert out.column("v").tolist() == [1, 2, 3, 4]
    inside = make_dataset([1, 2, 3, 4, 5], [1, 0, 1, 0, 1], names=["v"])
    assert remove_outliers(inside, ["v"]).equals(inside)


def test_remove_outliers_closed_interval():
    # Q1 = 1, Q3 = 2 -> upper fence 3.5, which is present and kept
    ds = make_dataset([1, 1, 1, 2, 2, 3.5], [1, 0, 1, 0, 1, 0], names=["v"])
    assert remove_outliers(ds, ["v"]).n_samples == 6


def test_minmax():
    params, out = minmax_fit_transform([0, 5, 10])
    assert out.tolist() == [0, 0.5, 1]
    assert minmax_apply(NormalizationParams(0, 10), 15) == 1.5
    with pytest.raises(ConstantColumn):
        minmax_fit_transform([7, 7])


def test_log_transform():
    out, keep = log_transform([1, math.e, math.e**2])
    assert out == pytest.approx([0, 1, 2])
    out, keep = log_transform([0, 1, math.e])
    assert keep.tolist() == [False, True, True] and out == pytest.approx([0, 1])
    out, _ = log_transform([1e3, 1e4, 1e5])
    assert np.diff(out) == pytest.approx([math.log(10)] * 2)


def test_one_hot():
    names, M, cats = one_hot("term", ["36", "60", "36"])
    assert names == ["term_36", "term_60"] and M.sum(axis=1).tolist() == [1, 1, 1]
    purposes = [f"p{i}" for i in range(12)]
    names, M, _ = one_hot("purpose", purposes)
    assert len(names) == 12
    names, M, _ = one_hot("x", ["a", "a"])
    assert names == ["x_a"] and M[:, 0].tolist() == [1, 1]
    names, M, _ = one_hot("x", ["a", "z"], categories=["a", "b"])
    assert M.tolist() == [[1, 0], [0, 0]]


def test_derive_ratios():
    itp, rti, new_dti = derive_ratios(0.2, 60000, 500, 0, dti_is_percent=False)
    assert itp == 10
    assert new_dti == pytest.approx(0.3, abs=1e-15)
    assert rti == 0
    # percent-encoded DTI gives the same answer
    assert derive_ratios(20, 60000, 500, 0)[2] == pytest.approx(0.3, abs=1e-15)
    with pytest.raises(NonPositiveIncome):
        derive_ratios(10, 0, 500, 0)
    with pytest.raises(NonPositiveInstallment):
        derive_ratios(10, 50000, 0, 0)


def pearson_oracle(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    return cov / math.sqrt(vx * vy)


def test_correlation_examples():
    y = [0, 0, 1, 1]
    ds = make_dataset(np.column_stack([y, [1 - v for v in y], [1, 2, 3, 4], [5, 5, 5, 5]]), y,
                      names=["same", "flip", "ramp", "const"])
    rows = {r.attribute: r.correlation for r in correlation_with_target(ds)}
    assert rows["same"] == pytest.approx(1.0)
    assert rows["flip"] == pytest.approx(-1.0)
    assert rows["ramp"] == pytest.approx(pearson_oracle([1, 2, 3, 4], y), abs=1e-12)
    assert rows["ramp"] == pytest.approx(0.8944, abs=1e-4)
    assert rows["const"] == 0.0
    ranked = [abs(r.correlation) for r in correlation_with_target(ds)]
    assert ranked == sorted(ranked, reverse=True)


# ------------------------------------------------------------------ split


def test_stratified_split_counts():
    ds = make_dataset(np.arange(100), [1] * 80 + [0] * 20)
    train, test = train_test_split(ds, 0.7, seed=1)
    assert (train.n_samples, test.n_samples) == (70, 30)
    assert label_counts(train.y) == (14, 56) and label_counts(test.y) == (6, 24)
    assert set(train.row_ids) | set(test.row_ids) == set(range(100))
    assert not set(train.row_ids) & set(test.row_ids)


def test_split_deterministic_and_small():
    ds = make_dataset(np.arange(100), [1] * 80 + [0] * 20)
    a, b = train_test_split(ds, 0.7, seed=5), train_test_split(ds, 0.7, seed=5)
    assert a[0].equals(b[0]) and a[1].equals(b[1])
    four = make_dataset(np.arange(4), [0, 1, 0, 1])
    tr, te = train_test_split(four, 0.5, seed=0)
    assert sorted(tr.y) == [0, 1] and sorted(te.y) == [0, 1]
    with pytest.raises(TooFewSamples):
        train_test_split(make_dataset(np.arange(3), [0, 1, 1]), 0.7, seed=0)


@given(
    st.integers(2, 60), st.integers(0, 200), st.floats(0.1, 0.9), st.integers(0, 2**32 - 1)
)
def test_split_preserves_class_proportion(n_min, extra, frac, seed):
    n_maj = n_min + extra
    ds = make_dataset(np.arange(n_min + n_maj), [0] * n_min + [1] * n_maj)
    train, test = train_test_split(ds, frac, seed)
    full_ratio = n_min / (n_min + n_maj)
    train_ratio = label_counts(train.y)[0] / train.n_samples
    assert abs(train_ratio - full_ratio) <= 1 / n_min
    assert train.n_samples + test.n_samples == ds.n_samples


@given(
    arrays(np.float64, st.integers(4, 40), elements=st.floats(-1e3, 1e3)),
    st.floats(-100, 100).filter(lambda a: abs(a) > 1e-3),
    st.floats(-100, 100),
    st.randoms(),
)
def test_correlation_affine_invariance(x, a, b, rnd):
    y = [rnd.randint(0, 1) for _ in x]
    assume(0 < sum(y) < len(y))
    assume(np.ptp(x) > 1e-3)
    base = correlation_with_target(make_dataset(x, y))[0].correlation
    moved = correlation_with_target(make_dataset(a * x + b, y))[0].correlation
    assert abs(base) <= 1
    assert moved == pytest.approx(math.copysign(1, a) * base, abs=1e-6)


@given(arrays(np.float64, st.integers(2, 50), elements=st.floats(-1e6, 1e6)))
def test_minmax_training_range(values):
    assume(np.ptp(values) > 0)
    _, out = minmax_fit_transform(values)
    assert out.min() >= 0 and out.max() <= 1


# --------------------------------------------------------------- pipeline


def test_prepare_pipeline(tmp_path):
    path = tmp_path / "lc.csv"
    write_lc_csv(path, n=600)
    result = ingest.prepare(load_csv(path))
    ds = result.dataset
    names = set(ds.schema.names)
    assert not names & set(DEFAULT_LEAKS)
    assert "loan_status" not in names and "desc" not in names and "mostly_empty" not in names
    for col in ("income_to_payment", "revolving_to_income", "new_dti", "emp_length", "revol_util"):
        assert col in names
    onehot = [n for n in names if n.startswith(("term_", "home_ownership_", "verification_status_", "purpose_"))]
    assert len(onehot) == 2 + 3 + 3 + 4
    assert np.isfinite(ds.X).all()
    assert result.log["final"]["rows"] == ds.n_samples
    # 8 of every 10 terminal statuses are fully paid
    assert result.log["after_status_filter"]["fully_paid"] == 4 * result.log["after_status_filter"]["default"]
    train, test, scaler = ingest.split_and_scale(ds, 0.7, seed=0)
    assert train.X.min() >= 0 and train.X.max() <= 1
    assert np.isfinite(test.X).all()


def test_prepare_log_columns_are_logged(tmp_path):
    path = tmp_path / "lc.csv"
    write_lc_csv(path, n=300, seed=4)
    ds = ingest.prepare(load_csv(path)).dataset
    # raw incomes are ~e^11; logged they sit near 11
    assert 8 < ds.column("annual_inc").mean() < 14


def test_scaler_applies_train_params_unclipped():
    train = make_dataset([[0.0, 1.0], [10.0, 1.0]], [0, 1], names=["a", "c"])
    scaler = ingest.Scaler.fit(train)
    assert scaler.columns == ("a",) and scaler.dropped == ("c",)
    test = make_dataset([[15.0, 3.0]], [1], names=["a", "c"])
    assert scaler.transform(test).X.tolist() == [[1.5]]


def test_dataset_csv_roundtrip(tmp_path):
    ds = make_dataset([[0.1, 1.0], [0.25, 0.0]], [1, 0], names=["a", "b_x"])
    ingest.write_dataset_csv(ds, tmp_path / "d.csv")
    back = ingest.read_dataset_csv(tmp_path / "d.csv")
    assert np.array_equal(back.X, ds.X) and back.y.tolist() == [1, 0]
    assert back.schema.columns[1].kind == "binary"
