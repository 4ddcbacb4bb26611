import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference, oracle_gaussian_nb, oracle_knn
from wfprint.dataset import TARGETED, UNTARGETED, LabeledDataset, PreprocessPolicy
from wfprint.errors import (
    ArityMismatch,
    CorruptDocument,
    DegenerateInput,
    InvalidHyperparameter,
    Unsupported,
    VersionMismatch,
)
from wfprint.learners import (
    DEFAULT_GRIDS,
    KINDS,
    AdaBoostClassifier,
    ClassifierSpec,
    DecisionTreeClassifier,
    GaussianNBClassifier,
    GradientBoostingClassifier,
    KNNClassifier,
    LinearSVMClassifier,
    MajorityClassifier,
    RandomForestClassifier,
    fit,
    load,
)

FAST = {"DT": {}, "RF": {"n_estimators": 15}, "GBM": {"n_estimators": 15}, "ADAB": {"n_estimators": 15},
        "SVM": {"epochs": 5}, "NB": {}, "KNN": {"k": 3}}


def blobs(n=60, k=3, d=4, sep=3.0, seed=0):
    rng = np.random.default_rng(seed)
    centres = rng.normal(0, sep, (k, d))
    y = np.arange(n) % k
    X = centres[y] + rng.normal(size=(n, d))
    return X, np.array([f"c{i}" for i in y])


def sites_dataset(n=50, seed=0):
    X, y = blobs(n, 3, 8, seed=seed)
    X = np.abs(X) * 100
    return LabeledDataset(X, [TARGETED] * n, list(y))


# --- decision tree ----------------------------------------------------------

def test_tree_single_midpoint_split():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    clf = DecisionTreeClassifier().fit(X, ["A", "A", "B", "B"])
    t = clf.tree_
    assert t.feature[0] == 0 and t.threshold[0] == 2.5 and t.n_nodes == 3
    assert list(clf.predict([[1.0], [4.0]])) == ["A", "B"]
    assert clf.score(X, ["A", "A", "B", "B"]) == 1.0


def test_single_class_rejected():
    for cls in list(KINDS.values()) + [MajorityClassifier]:
        with pytest.raises(DegenerateInput):
            cls().fit(np.zeros((4, 2)), ["a"] * 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 5))
def test_tree_fits_consistent_data(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 6, size=(40, 3)).astype(float)
    X, first = np.unique(X, axis=0, return_index=True)
    y = rng.integers(0, k, len(X))
    if len(set(y)) < 2:
        y[0] = (y[0] + 1) % k
    assert DecisionTreeClassifier().fit(X, y).score(X, y) == 1.0


def test_tree_limits():
    X, y = blobs(90, 3, 2, sep=0.5)
    t = DecisionTreeClassifier(max_depth=2).fit(X, y).tree_
    assert t.depth() <= 2
    leaves = DecisionTreeClassifier(min_samples_leaf=10).fit(X, y).tree_
    counts = np.bincount(leaves.apply(X), minlength=leaves.n_nodes)
    assert counts[leaves.feature == -1].min() >= 10


def test_rf_degenerates_to_tree():
    X, y = blobs(80, 3, 5, sep=1.0, seed=4)
    dt = DecisionTreeClassifier(random_state=3).fit(X, y)
    rf = RandomForestClassifier(n_estimators=1, bootstrap=False, max_features=5, random_state=3).fit(X, y)
    Q = np.random.default_rng(1).normal(0, 2, (200, 5))
    np.testing.assert_array_equal(rf.predict(Q), dt.predict(Q))
    np.testing.assert_array_equal(rf.trees_[0].threshold, dt.tree_.threshold)


def test_rf_vote_fractions():
    X, y = blobs(60, 2, 3, sep=0.8, seed=2)
    rf = RandomForestClassifier(n_estimators=10).fit(X, y)
    P = rf.predict_proba(X)
    assert np.all(np.isclose(P * 10, np.round(P * 10)))
    votes = np.array([[np.argmax(t.predict_value(X[i:i + 1])[0]) for t in rf.trees_] for i in range(len(X))])
    np.testing.assert_allclose(P[:, 1], (votes == 1).mean(axis=1))


# --- gradient boosting ------------------------------------------------------

@pytest.mark.parametrize("k", [2, 3])
@pytest.mark.parametrize("stage", [1, 5, 10])
def test_gbm_gradient_matches_finite_differences(k, stage):
    X, y = blobs(60, k, 3, sep=1.0, seed=k)
    gbm = GradientBoostingClassifier(n_estimators=10, max_depth=2).fit(X, y)
    yi = np.searchsorted(gbm.classes_, y)
    F = gbm.raw_scores(X, stage)
    g = gbm.loss_gradient(yi, F)
    for i in range(len(X)):
        fd = central_difference(lambda f: gbm.loss(yi[i:i + 1], f[None] if k > 2 else f)[0],
                                F[i] if k > 2 else F[i:i + 1], h=1e-4)
        fd = fd if k > 2 else fd[0]
        np.testing.assert_allclose(g[i], fd, rtol=1e-5, atol=0)


def test_gbm_binary_probability_is_logistic():
    X, y = blobs(80, 2, 3, sep=1.0)
    gbm = GradientBoostingClassifier(n_estimators=20).fit(X, y)
    F = gbm.raw_scores(X)
    P = gbm.predict_proba(X)[:, 1]
    np.testing.assert_allclose(P, 1 / (1 + np.exp(-F)), rtol=1e-12)
    order = np.argsort(F)
    assert np.all(np.diff(P[order]) >= 0)


def test_gbm_training_loss_decreases():
    X, y = blobs(90, 3, 3, sep=1.0)
    gbm = GradientBoostingClassifier(n_estimators=10).fit(X, y)
    yi = np.searchsorted(gbm.classes_, y)
    losses = [gbm.loss(yi, gbm.raw_scores(X, s)).mean() for s in range(11)]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


# --- adaboost ---------------------------------------------------------------

@pytest.mark.parametrize("k", [2, 4])
def test_adaboost_alphas_positive(k):
    X, y = blobs(120, k, 3, sep=1.0, seed=k)
    ada = AdaBoostClassifier(n_estimators=30).fit(X, y)
    assert ada.alphas_
    for err, alpha in zip(ada.errors_, ada.alphas_):
        assert err < 1 - 1 / k
        assert alpha > 0


def test_adaboost_perfect_stump_stops():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    ada = AdaBoostClassifier(n_estimators=10).fit(X, ["a", "a", "b", "b"])
    assert len(ada.alphas_) == 1 and ada.errors_ == [0.0]


def test_adaboost_depth_validated():
    with pytest.raises(InvalidHyperparameter):
        AdaBoostClassifier(max_depth=3).fit(np.zeros((4, 1)), ["a", "b", "a", "b"])


# --- svm --------------------------------------------------------------------

def test_svm_separable_toy():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(-3, 0.5, (40, 2)), rng.normal(3, 0.5, (40, 2))])
    y = ["neg"] * 40 + ["pos"] * 40
    svm = LinearSVMClassifier(lam=1e-2, epochs=20).fit(X, y)
    hist = svm.objective_history_
    assert len(hist) == 20
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    assert svm.score(X, y) == 1.0


def test_svm_has_no_probabilities():
    X, y = blobs(30, 2, 2)
    svm = LinearSVMClassifier(epochs=2).fit(X, y)
    with pytest.raises(Unsupported):
        svm.predict_proba(X)
    assert svm.decision_function(X).shape == (30, 2)


# --- naive bayes ------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(10, 100), st.integers(2, 4))
def test_nb_matches_bayes_oracle(seed, n, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(0, rng.uniform(0.5, 5), (n, 3)) + rng.integers(0, 3, (n, 1))
    y = np.array([f"k{v}" for v in np.arange(n) % k])
    Q = rng.normal(0, 3, (10, 3))
    classes, post = oracle_gaussian_nb(X.tolist(), y.tolist(), Q.tolist())
    nb = GaussianNBClassifier().fit(X, y)
    assert nb.classes_.tolist() == classes
    np.testing.assert_allclose(nb.predict_proba(Q), post, atol=1e-9)


def test_nb_symmetric_query():
    X = np.array([[-1.0], [-2.0], [1.0], [2.0]])
    nb = GaussianNBClassifier().fit(X, ["a", "a", "b", "b"])
    np.testing.assert_allclose(nb.predict_proba([[0.0]]), [[0.5, 0.5]], atol=1e-12)


def test_nb_constant_feature_floor():
    X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 5.0], [1.0, 6.0]])
    nb = GaussianNBClassifier().fit(X, ["a", "a", "b", "b"])
    assert np.all(np.isfinite(nb.predict_proba(X)))


# --- knn --------------------------------------------------------------------

def test_knn_one_recovers_training_labels():
    X, y = blobs(50, 3, 3, sep=0.2)
    assert list(KNNClassifier(k=1).fit(X, y).predict(X)) == list(y)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 7))
def test_knn_matches_all_pairs(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, (30, 2)).astype(float)  # plenty of distance ties
    y = [f"c{v}" for v in rng.integers(0, 3, 30)]
    if len(set(y)) < 2:
        y[0] = "c9"
    Q = rng.integers(0, 4, (15, 2)).astype(float)
    got = KNNClassifier(k=k).fit(X, y).predict(Q)
    assert list(got) == oracle_knn(X.tolist(), y, Q.tolist(), k)


# --- shared contract --------------------------------------------------------

@pytest.mark.parametrize("kind", list(KINDS))
def test_probability_simplex_and_argmax(kind):
    X, y = blobs(60, 3, 4, sep=1.0)
    clf = ClassifierSpec(kind, FAST[kind], 1).build().fit(X, y)
    if not clf.has_proba:
        return
    P = clf.predict_proba(X)
    assert np.all(P >= 0)
    np.testing.assert_allclose(P.sum(axis=1), 1, atol=1e-9)
    np.testing.assert_array_equal(clf.classes_[np.argmax(P, axis=1)], clf.predict(X))


@pytest.mark.parametrize("kind", list(KINDS))
def test_arity_checked(kind):
    X, y = blobs(30, 2, 4)
    clf = ClassifierSpec(kind, FAST[kind]).build().fit(X, y)
    with pytest.raises(ArityMismatch):
        clf.predict(np.zeros((2, 3)))


@pytest.mark.parametrize("kind", list(KINDS))
def test_label_permutation_equivariance(kind):
    X, y = blobs(60, 3, 4, sep=1.5)
    rename = {"c0": "z", "c1": "m", "c2": "a"}
    a = ClassifierSpec(kind, FAST[kind], 2).build().fit(X, y).predict(X)
    b = ClassifierSpec(kind, FAST[kind], 2).build().fit(X, [rename[v] for v in y]).predict(X)
    agree = np.mean([rename[u] == v for u, v in zip(a, b)])
    # tie-breaks follow class order, which the renaming reverses
    assert agree >= 0.95


@pytest.mark.parametrize("kind", list(KINDS))
def test_save_load_identity(kind):
    ds = sites_dataset()
    model = fit(ClassifierSpec(kind, FAST[kind], 5), ds, "MULTICLASS")
    blob = model.save()
    again = load(blob)
    Q = np.abs(np.random.default_rng(9).normal(0, 300, (40, 8)))
    np.testing.assert_array_equal(again.predict(Q), model.predict(Q))
    assert again.save() == blob
    assert fit(ClassifierSpec(kind, FAST[kind], 5), ds, "MULTICLASS").save() == blob


def test_load_errors():
    model = fit(ClassifierSpec("NB"), sites_dataset(), "MULTICLASS")
    blob = model.save()
    with pytest.raises(CorruptDocument):
        load(blob[: len(blob) // 2])
    doc = json.loads(blob)
    doc["schema_version"] = 99
    with pytest.raises(VersionMismatch):
        load(json.dumps(doc))
    with pytest.raises(CorruptDocument):
        load(b'{"format": "something-else"}')


def test_spec_validation():
    with pytest.raises(InvalidHyperparameter):
        ClassifierSpec("DT", {"n_estimators": 3})
    with pytest.raises(InvalidHyperparameter):
        ClassifierSpec("KNN", {"k": 0})
    with pytest.raises(InvalidHyperparameter):
        ClassifierSpec("GBM", {"learning_rate": -1})
    with pytest.raises(InvalidHyperparameter):
        ClassifierSpec("XGB")
    assert ClassifierSpec("svm", {"lambda": 0.01}).hyperparameters == {"lam": 0.01}


def test_default_grids_validate():
    from wfprint.evaluation import grid_combinations

    for kind, grid in DEFAULT_GRIDS.items():
        for combo in grid_combinations(grid):
            ClassifierSpec(kind, combo)


def test_model_imputes_missing_at_predict():
    ds = sites_dataset()
    model = fit(ClassifierSpec("DT"), ds, "MULTICLASS", PreprocessPolicy())
    Q = ds.X[:3].copy()
    Q[:, 2] = np.nan
    assert len(model.predict(Q)) == 3


def test_binary_task_uses_all_labelled_rows():
    X, y = blobs(40, 2, 8, seed=1)
    b = [TARGETED if v == "c0" else UNTARGETED for v in y]
    s = ["s" if v == "c0" else None for v in y]
    model = fit(ClassifierSpec("NB"), LabeledDataset(np.abs(X), b, s), "BINARY")
    assert model.classes == [TARGETED, UNTARGETED]


def test_majority_baseline():
    X = np.zeros((10, 2))
    clf = MajorityClassifier().fit(X, ["a"] * 3 + ["b"] * 7)
    assert set(clf.predict(X)) == {"b"}


def test_sklearn_param_api():
    clf = RandomForestClassifier(n_estimators=7)
    assert clf.get_params()["n_estimators"] == 7
    clf.set_params(n_estimators=3)
    X, y = blobs(30, 2, 2)
    assert len(clf.fit(X, y).trees_) == 3
