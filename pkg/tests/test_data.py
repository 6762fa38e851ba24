"""Dataset ingestion, persistence, and preprocessing transforms."""

import math

import numpy as np
import pytest
from scipy import stats

from medpath.data import (
    DataError,
    DatasetSchema,
    MediationDataset,
    PreprocessOptions,
    inverse_normal_transform,
    load_dataset,
    preprocess,
    sample_skewness,
    save_dataset,
)
from medpath.scenarios import generate_scenario, scenario_ii_small


@pytest.fixture
def small_csv(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text(
        "A,Y,M1,M2,X1\n"
        "0.1,1.0,0.5,0.2,1.1\n"
        "0.4,2.0,0.1,0.9,-0.2\n"
        "-0.3,0.5,0.7,0.4,0.0\n"
        "0.2,1.5,0.3,0.6,0.8\n"
    )
    return path


SCHEMA = DatasetSchema(exposure="A", outcome="Y", mediators=["M1", "M2"],
                       covariates=["X1"])


class TestLoadDataset:
    def test_roles_and_dimensions(self, small_csv):
        data = load_dataset(small_csv, SCHEMA)
        assert (data.n, data.q, data.p) == (4, 2, 1)
        assert data.mediator_names == ["M1", "M2"]
        np.testing.assert_allclose(data.A, [0.1, 0.4, -0.3, 0.2])
        np.testing.assert_allclose(data.M[:, 1], [0.2, 0.9, 0.4, 0.6])

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            load_dataset(tmp_path / "nope.csv", SCHEMA)

    def test_missing_column(self, small_csv):
        schema = DatasetSchema(exposure="A", outcome="Y", mediators=["M1", "M9"])
        with pytest.raises(DataError, match="missing columns"):
            load_dataset(small_csv, schema)

    def test_na_cell_reported_with_location(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("A,Y,M1\n1.0,2.0,0.5\n0.2,1.0,NA\n")
        schema = DatasetSchema(exposure="A", outcome="Y", mediators=["M1"])
        with pytest.raises(DataError, match="'NA' in column 'M1', row 2"):
            load_dataset(path, schema)

    def test_infinite_cell_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("A,Y,M1\n1.0,inf,0.5\n")
        schema = DatasetSchema(exposure="A", outcome="Y", mediators=["M1"])
        with pytest.raises(DataError, match="non-finite"):
            load_dataset(path, schema)

    def test_duplicate_role_assignment(self):
        schema = DatasetSchema(exposure="A", outcome="A", mediators=["M1"])
        with pytest.raises(DataError, match="multiple roles"):
            schema.validate()

    def test_roundtrip_bit_identical(self, tmp_path):
        data, _ = generate_scenario(scenario_ii_small(n=37, q=15, seed=5))
        schema = save_dataset(data, tmp_path / "out.csv")
        back = load_dataset(tmp_path / "out.csv", schema)
        assert np.array_equal(back.A, data.A)
        assert np.array_equal(back.Y, data.Y)
        assert np.array_equal(back.M, data.M)
        assert np.array_equal(back.X, data.X)


class TestDatasetInvariants:
    def test_rejects_nonfinite(self):
        with pytest.raises(DataError, match="non-finite"):
            MediationDataset(X=np.zeros((2, 1)), A=np.array([1.0, np.nan]),
                             M=np.ones((2, 2)), Y=np.zeros(2))

    def test_rejects_misaligned_rows(self):
        with pytest.raises(DataError):
            MediationDataset(X=np.zeros((2, 1)), A=np.zeros(2),
                             M=np.ones((3, 2)), Y=np.zeros(2))

    def test_requires_a_mediator(self):
        with pytest.raises(DataError):
            MediationDataset(X=np.zeros((2, 0)), A=np.zeros(2),
                             M=np.ones((2, 0)), Y=np.zeros(2))

    def test_values_immutable(self):
        data = MediationDataset(X=np.zeros((2, 1)), A=np.zeros(2),
                                M=np.ones((2, 2)), Y=np.zeros(2))
        with pytest.raises(ValueError):
            data.M[0, 0] = 5.0


class TestSampleSkewness:
    def test_symmetric_is_zero(self):
        assert sample_skewness(np.array([-1.0, 0.0, 1.0])) == 0.0

    def test_moment_formula_oracle(self):
        # (0,0,0,1): m2 = 3/16, m3 = 3/32 -> skewness = 2/sqrt(3)
        x = np.array([0.0, 0.0, 0.0, 1.0])
        m2, m3 = 3.0 / 16.0, 3.0 / 32.0
        expected = m3 / m2 ** 1.5
        assert abs(expected - 2.0 / math.sqrt(3.0)) < 1e-12
        assert abs(sample_skewness(x) - expected) < 1e-12
        assert abs(sample_skewness(x) - 1.1547) < 1e-4

    def test_antisymmetry(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = rng.normal(size=rng.integers(3, 40)) ** 3
            assert abs(sample_skewness(-x) + sample_skewness(x)) < 1e-10

    def test_rejects_degenerate(self):
        with pytest.raises(DataError):
            sample_skewness(np.array([1.0, 2.0]))
        with pytest.raises(DataError):
            sample_skewness(np.array([3.0, 3.0, 3.0]))


class TestInverseNormal:
    def test_five_point_oracle(self):
        # ranks (1..5): Phi^-1((r-0.5)/5)
        got = inverse_normal_transform(np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
        expected = stats.norm.ppf((np.arange(1, 6) - 0.5) / 5)
        np.testing.assert_allclose(got, expected, atol=1e-12)
        np.testing.assert_allclose(
            got, [-1.2816, -0.5244, 0.0, 0.5244, 1.2816], atol=1e-4)

    def test_ties_get_average_ranks(self):
        got = inverse_normal_transform(np.array([2.0, 2.0, 1.0]))
        expected_tied = stats.norm.ppf((2.5 - 0.5) / 3)
        assert got[0] == got[1] == pytest.approx(expected_tied)


def make_dataset(rng, n=60, q=3):
    M = rng.normal(size=(n, q))
    M[:, 0] = np.exp(rng.normal(size=n) * 1.5)   # heavily right-skewed
    return MediationDataset(X=rng.normal(size=(n, 1)), A=rng.normal(size=n),
                            M=M, Y=rng.normal(size=n))


class TestPreprocess:
    def test_log_transform_triggers_on_skewed_column(self):
        rng = np.random.default_rng(5)
        data = make_dataset(rng)
        assert abs(sample_skewness(data.M[:, 0])) > 2.0
        out, report = preprocess(data, PreprocessOptions())
        assert report.log_transformed == ["M1"]
        for j in range(out.q):
            assert abs(out.M[:, j].mean()) < 1e-10
            assert abs(np.std(out.M[:, j], ddof=1) - 1.0) < 1e-10

    def test_symmetric_column_not_logged(self):
        rng = np.random.default_rng(6)
        data = MediationDataset(X=np.empty((50, 0)), A=rng.normal(size=50),
                                M=rng.normal(size=(50, 1)), Y=rng.normal(size=50))
        out, report = preprocess(data, PreprocessOptions())
        assert report.log_transformed == []
        assert abs(out.M[:, 0].mean()) < 1e-10
        assert abs(np.std(out.M[:, 0], ddof=1) - 1.0) < 1e-10

    def test_nonpositive_under_log_is_error(self):
        rng = np.random.default_rng(7)
        data = make_dataset(rng)
        M = np.array(data.M)
        M[0, 0] = -1e-3
        bad = MediationDataset(X=data.X, A=data.A, M=M, Y=data.Y)
        if abs(sample_skewness(M[:, 0])) > 2.0:
            with pytest.raises(DataError, match="non-positive"):
                preprocess(bad, PreprocessOptions())

    def test_zero_group_variance_is_error(self):
        # column varies overall but is constant within group "a"
        data = MediationDataset(X=np.empty((4, 0)), A=np.arange(4.0),
                                M=np.array([[1.0], [1.0], [0.0], [2.0]]),
                                Y=np.zeros(4))
        groups = np.array(["a", "a", "b", "b"])
        with pytest.raises(DataError, match="zero variance"):
            preprocess(data, PreprocessOptions(zscore_groups=groups))

    def test_groupwise_zscore(self):
        rng = np.random.default_rng(8)
        groups = np.array(["a"] * 30 + ["b"] * 30)
        data = MediationDataset(X=np.empty((60, 0)), A=rng.normal(size=60),
                                M=rng.normal(loc=3.0, size=(60, 1)),
                                Y=rng.normal(size=60))
        out, _ = preprocess(data, PreprocessOptions(zscore_groups=groups))
        for g in ("a", "b"):
            block = out.M[groups == g, 0]
            assert abs(block.mean()) < 1e-10
            assert abs(np.std(block, ddof=1) - 1.0) < 1e-10

    def test_exposure_inverse_normal_flag(self):
        data = MediationDataset(X=np.empty((5, 0)), A=np.array([1.0, 2, 3, 4, 5]),
                                M=np.random.default_rng(1).normal(size=(5, 1)),
                                Y=np.zeros(5))
        out, report = preprocess(
            data, PreprocessOptions(inverse_normal_exposure=True))
        assert report.exposure_inverse_normal
        np.testing.assert_allclose(
            out.A, stats.norm.ppf((np.arange(1, 6) - 0.5) / 5), atol=1e-12)

    def test_idempotent_on_clean_data(self):
        rng = np.random.default_rng(9)
        data = MediationDataset(X=np.empty((80, 0)), A=rng.normal(size=80),
                                M=rng.normal(size=(80, 2)), Y=rng.normal(size=80))
        once, _ = preprocess(data, PreprocessOptions(inverse_normal_exposure=True))
        twice, report = preprocess(once, PreprocessOptions(inverse_normal_exposure=True))
        assert report.log_transformed == []
        assert np.max(np.abs(twice.M - once.M)) < 1e-12
        assert np.max(np.abs(twice.A - once.A)) < 1e-12
