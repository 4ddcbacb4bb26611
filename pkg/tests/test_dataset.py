import io
import ipaddress
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wfprint.capture.decode import PacketRecord, Transport
from wfprint.dataset import (
    DATASET_CSV_COLUMNS,
    IGNORE,
    ONEHOT,
    PARTITIONS,
    TARGETED,
    UNTARGETED,
    FeatureScaler,
    LabeledDataset,
    MonitoredList,
    PreprocessPolicy,
    ScalerParams,
    import_external_csv,
    label,
    largest_remainder,
    preprocess,
    read_dataset_csv,
    read_split_csv,
    split,
    write_dataset_csv,
    write_split_csv,
)
from wfprint.errors import (
    AmbiguousMatch,
    ArityMismatch,
    ClassTooSmall,
    EmptyAfterFilter,
    EmptyFile,
    HeaderMismatch,
)
from wfprint.features import FEATURE_NAMES, featurize
from wfprint.flows import assemble


def udp_flow(src, dst):
    p = PacketRecord(0.0, ipaddress.ip_address(src), ipaddress.ip_address(dst), 5000, 443, Transport.UDP, 100, 58)
    return assemble([p])[0]


def toy(n_per=(10, 10), seed=0, missing=False):
    rng = np.random.default_rng(seed)
    X, b, s = [], [], []
    for cls, n in enumerate(n_per):
        for _ in range(n):
            X.append(rng.normal(cls * 3, 1, 8))
            b.append(TARGETED if cls == 0 else UNTARGETED)
            s.append("siteA" if cls == 0 else None)
    X = np.asarray(X)
    if missing:
        X[::4, 5] = np.nan
    return LabeledDataset(X, b, s)


# --- monitored list and labelling -------------------------------------------

def test_exact_match():
    mlist = MonitoredList.from_pairs([("siteA", "93.184.216.34")])
    flows = [udp_flow("10.0.0.5", "93.184.216.34"), udp_flow("10.0.0.5", "10.0.0.1")]
    ds = label(flows, [featurize(f) for f in flows], mlist)
    assert list(ds.binary) == [TARGETED, UNTARGETED]
    assert list(ds.site) == ["siteA", None]


def test_cidr_and_parse():
    text = "# monitored\nsiteA,198.18.0.0/24\nsiteB, 2001:db8::/32  # v6\n\n"
    mlist = MonitoredList.parse(text)
    assert mlist.matches("198.18.0.77") == {"siteA"}
    assert mlist.matches("2001:db8::9") == {"siteB"}
    assert mlist.matches("198.18.1.1") == set()
    assert MonitoredList.parse(mlist.to_text()) == mlist


def test_overlapping_list_rejected():
    with pytest.raises(AmbiguousMatch):
        MonitoredList.from_pairs([("a", "10.0.0.0/8"), ("b", "10.1.0.0/16")])


def test_ambiguous_flow_detected():
    mlist = MonitoredList((("a", (ipaddress.ip_network("10.0.0.1/32"),)),
                           ("b", (ipaddress.ip_network("10.0.0.2/32"),))))
    f = udp_flow("10.0.0.1", "10.0.0.2")
    with pytest.raises(AmbiguousMatch):
        label([f], [featurize(f)], mlist)


def test_bad_list_line():
    with pytest.raises(ValueError):
        MonitoredList.parse("just-a-label\n")


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(8))))
def test_label_order_independent(perm):
    mlist = MonitoredList.from_pairs([("s1", "10.1.0.0/16"), ("s2", "10.2.0.0/16")])
    flows = [udp_flow(f"10.{i % 3}.0.{i + 1}", "192.0.2.1") for i in range(8)]
    feats = [featurize(f) for f in flows]
    base = label(flows, feats, mlist)
    moved = label([flows[i] for i in perm], [feats[i] for i in perm], mlist)
    assert list(moved.site) == [base.site[i] for i in perm]
    assert list(label(flows, feats, mlist).site) == list(base.site)


def test_site_label_invariant():
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((1, 8)), [UNTARGETED], ["x"])
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((1, 8)), [TARGETED], [None])


# --- preprocessing ----------------------------------------------------------

def test_preprocess_identity():
    ds = toy()
    out, params = preprocess(ds, PreprocessPolicy(False, "DROP", "NONE"))
    np.testing.assert_array_equal(out.X, ds.X)
    assert list(out.binary) == list(ds.binary)


def test_dedup_and_drop():
    ds = toy(missing=True)
    doubled = LabeledDataset(np.vstack([ds.X, ds.X[:3]]), list(ds.binary) + list(ds.binary[:3]),
                             list(ds.site) + list(ds.site[:3]))
    out, _ = preprocess(doubled, PreprocessPolicy(True, "IMPUTE_MEDIAN", "NONE"))
    assert len(out) == len(ds)
    dropped, _ = preprocess(ds, PreprocessPolicy(False, "DROP", "NONE"))
    assert len(dropped) == len(ds) - 5


def test_empty_after_filter():
    ds = LabeledDataset(np.full((2, 8), np.nan), [UNTARGETED] * 2, [None] * 2)
    with pytest.raises(EmptyAfterFilter):
        preprocess(ds, PreprocessPolicy(False, "DROP", "NONE"))


def test_statistics_from_train_only():
    ds = toy((20, 20))
    sp = np.array(["TRAIN"] * 30 + ["TEST"] * 10, dtype=object)
    out, params = preprocess(ds.with_split(sp), PreprocessPolicy(False, "IMPUTE_MEDIAN", "ZSCORE"))
    np.testing.assert_allclose(params.center, ds.X[:30].mean(axis=0))
    np.testing.assert_allclose(out.X[:30].mean(axis=0), 0, atol=1e-9)


def test_median_imputation_from_train():
    X = np.array([[1.0] * 8, [3.0] * 8, [np.nan] * 8, [100.0] * 8])
    ds = LabeledDataset(X, [UNTARGETED] * 4, [None] * 4, split=["TRAIN", "TRAIN", "TRAIN", "TEST"])
    out, params = preprocess(ds, PreprocessPolicy(False, "IMPUTE_MEDIAN", "NONE"))
    assert out.X[2, 0] == 2.0
    assert params.medians[0] == 2.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 60))
def test_zscore_moments(seed, n):
    rng = np.random.default_rng(seed)
    X = rng.normal(rng.normal(0, 100, 8), rng.uniform(0.1, 50, 8), size=(n, 8))
    X[:, 3] = 7.0
    ds = LabeledDataset(X, [UNTARGETED] * n, [None] * n)
    out, params = preprocess(ds, PreprocessPolicy(False, "IMPUTE_MEDIAN", "ZSCORE"))
    Z = params.apply(X)
    np.testing.assert_array_equal(Z, out.X)
    live = [j for j in range(8) if j != 3]
    np.testing.assert_allclose(Z[:, live].mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(Z[:, live].std(axis=0), 1, atol=1e-9)
    assert np.all(Z[:, 3] == 0)


def test_minmax_scaler():
    X = np.array([[0.0, 5.0], [10.0, 5.0], [5.0, 5.0]])
    Z = FeatureScaler("MINMAX").fit_transform(X)
    np.testing.assert_allclose(Z, [[0, 0], [1, 0], [0.5, 0]])


def test_scaler_params_round_trip_and_arity():
    p = FeatureScaler().fit(np.arange(24.0).reshape(6, 4)).params_
    q = ScalerParams.from_dict(p.to_dict())
    np.testing.assert_array_equal(q.apply(np.ones((2, 4))), p.apply(np.ones((2, 4))))
    with pytest.raises(ArityMismatch):
        p.apply(np.ones((2, 3)))


# --- split ------------------------------------------------------------------

def test_split_exact_proportions():
    ds = LabeledDataset(np.zeros((100, 8)), [UNTARGETED] * 100, [None] * 100)
    out = split(ds, (0.8, 0.1, 0.1), seed=1)
    assert [int((out.split == p).sum()) for p in PARTITIONS] == [80, 10, 10]


def test_split_two_classes_remainder_tie():
    out = split(toy((50, 50)), (0.7, 0.15, 0.15), seed=3)
    for cls in (TARGETED, UNTARGETED):
        parts = out.split[out.binary == cls]
        assert [int((parts == p).sum()) for p in PARTITIONS] == [35, 8, 7]


def test_largest_remainder_ties_go_first():
    assert largest_remainder(50, (0.7, 0.15, 0.15)) == [35, 8, 7]
    assert largest_remainder(10, (1 / 3, 1 / 3, 1 / 3)) == [4, 3, 3]


def test_split_deterministic_and_seeded():
    ds = toy((40, 40))
    a = split(ds, seed=5).split
    assert list(a) == list(split(ds, seed=5).split)
    assert list(a) != list(split(ds, seed=6).split)


def test_split_small_class():
    with pytest.raises(ClassTooSmall):
        split(toy((2, 10)), seed=0)


def test_split_bad_ratios():
    with pytest.raises(ValueError):
        split(toy(), (0.5, 0.5, 0.1), seed=0)


def test_split_by_site():
    rng = np.random.default_rng(0)
    sites = ["a"] * 9 + ["b"] * 12 + [None] * 10
    b = [TARGETED if s else UNTARGETED for s in sites]
    ds = split(LabeledDataset(rng.normal(size=(31, 8)), b, sites), stratify_on="MULTICLASS", seed=2)
    for s in ("a", "b"):
        assert set(ds.split[ds.site == s]) == set(PARTITIONS)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(3, 80), min_size=1, max_size=4),
       st.tuples(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8)), st.integers(0, 1000))
def test_split_partitions_every_row(sizes, weights, seed):
    ratios = [w / sum(weights) for w in weights]
    ratios[2] = 1 - ratios[0] - ratios[1]
    sites = [f"s{i}" for i, n in enumerate(sizes) for _ in range(n)]
    n = len(sites)
    ds = LabeledDataset(np.zeros((n, 8)), [TARGETED] * n, sites)
    out = split(ds, ratios, "MULTICLASS", seed)
    assert set(out.split) <= set(PARTITIONS) and len(out.split) == n
    for i, size in enumerate(sizes):
        parts = out.split[out.site == f"s{i}"]
        counts = [int((parts == p).sum()) for p in PARTITIONS]
        assert min(counts) >= 1
        if min(r * size for r in ratios) >= 1:
            for c, r in zip(counts, ratios):
                assert abs(c - r * size) <= 1


# --- CSV --------------------------------------------------------------------

def test_dataset_csv_header_and_round_trip():
    ds = toy(missing=True)
    buf = io.StringIO()
    write_dataset_csv(buf, ds)
    text = buf.getvalue()
    assert text.split("\r\n")[0] == ",".join(DATASET_CSV_COLUMNS)
    assert DATASET_CSV_COLUMNS == FEATURE_NAMES + ("binary_label", "site_label")
    back = read_dataset_csv(io.StringIO(text))
    np.testing.assert_array_equal(back.X, ds.X)
    assert list(back.site) == list(ds.site)
    # MISSING is an empty field
    assert ",," in text.split("\r\n")[1]


def test_dataset_csv_rounding_is_presentation_only():
    ds = LabeledDataset(np.full((1, 8), 1 / 3), [UNTARGETED], [None])
    buf = io.StringIO()
    write_dataset_csv(buf, ds, decimals=2)
    assert buf.getvalue().split("\r\n")[1].startswith("0.33,0.33")


def test_split_csv_round_trip():
    ds = split(toy((20, 20)), seed=0)
    buf = io.StringIO()
    write_split_csv(buf, ds)
    assert list(read_split_csv(io.StringIO(buf.getvalue()), len(ds))) == list(ds.split)


def test_read_dataset_errors():
    with pytest.raises(EmptyFile):
        read_dataset_csv(io.StringIO(""))
    with pytest.raises(HeaderMismatch):
        read_dataset_csv(io.StringIO("a,b,c\n"))


# --- external import --------------------------------------------------------

def _external(tmp_path, rows, n_extra=79):
    extra = [f"Extra {i}" for i in range(n_extra)]
    header = ["Flow Duration", "Total Fwd Packets", "Total Backward Packets", "Total Length of Fwd Packets",
              "Total Length of Bwd Packets", "Flow Bytes/s", "Flow Packets/s", "Average Packet Size"] + extra
    header.append("ProtocolName")
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(r[:8] + ["0"] * n_extra + [r[8]]))
    path = tmp_path / "ext.csv"
    path.write_text("\n".join(lines) + "\n")
    return path, header


def test_import_selects_eight_of_many(tmp_path):
    rows = [["1", "2", "3", "4", "5", "6", "7", "8", "YOUTUBE"], ["1", "2", "3", "4", "5", "N/A", "7", "8", "DNS"]]
    path, header = _external(tmp_path, rows)
    assert len(header) == 88
    cmap = dict(zip(header[:8], FEATURE_NAMES))
    ds = import_external_csv(path, cmap, "ProtocolName", targeted_labels=["YOUTUBE"])
    assert ds.X.shape == (2, 8) and ds.feature_names == FEATURE_NAMES
    assert math.isnan(ds.X[1, 5])
    assert list(ds.binary) == [TARGETED, UNTARGETED] and ds.site[0] == "YOUTUBE"


def test_import_onehot_and_ignore(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("dur,proto,junk,label\n1.5,tcp,x,a\n2.5,udp,y,b\n")
    ds = import_external_csv(path, {"dur": "flow_duration", "proto": ONEHOT, "junk": IGNORE}, "label")
    assert ds.feature_names == ("flow_duration", "proto=tcp", "proto=udp")
    np.testing.assert_array_equal(ds.X, [[1.5, 1, 0], [2.5, 0, 1]])


def test_import_onehot_cap(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("c,label\n" + "".join(f"v{i},a\n" for i in range(40)))
    with pytest.raises(ValueError):
        import_external_csv(path, {"c": ONEHOT}, "label")


def test_import_errors(tmp_path):
    empty = tmp_path / "h.csv"
    empty.write_text("a,b,label\n")
    with pytest.raises(EmptyFile):
        import_external_csv(empty, {"a": "flow_duration"}, "label")
    with pytest.raises(HeaderMismatch):
        path = tmp_path / "x.csv"
        path.write_text("a,label\n1,z\n")
        import_external_csv(path, {"nope": "flow_duration"}, "label")
