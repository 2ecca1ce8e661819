"""
mixclus data ingestion tests
Schema parsing, CSV coding and standardization
"""

import numpy as np
import pytest

from mixclus.data import (
    BINARY, CONTINUOUS, COUNT, ORDINAL, load_dataset, load_schema_file, parse_schema, standardize,
)
from mixclus.errors import DataError, SchemaError


def _schema(*columns: str):
    return parse_schema('{"columns": [' + ", ".join(columns) + "]}")


class TestParseSchema:
    """Tests for parse_schema"""

    def test_single_continuous_column(self):
        """Test minimal schema"""
        schema = _schema('{"name": "x", "kind": "continuous"}')
        assert len(schema) == 1
        assert schema.columns[0].kind == CONTINUOUS

    def test_ordinal_levels_keep_order(self):
        """Test ordinal levels are kept in declaration order"""
        schema = _schema('{"name": "g", "kind": "ordinal", "levels": ["low", "mid", "high"]}')
        assert schema.columns[0].levels == ("low", "mid", "high")
        assert schema.columns[0].n_levels == 3

    def test_duplicate_column(self):
        """Test duplicate names are rejected"""
        with pytest.raises(SchemaError, match="duplicate column"):
            _schema('{"name": "x", "kind": "continuous"}', '{"name": "x", "kind": "binary"}')

    def test_categorical_without_levels(self):
        """Test categorical columns need levels"""
        with pytest.raises(SchemaError, match="requires levels"):
            _schema('{"name": "c", "kind": "categorical"}')

    def test_malformed_document(self):
        """Test non-JSON input"""
        with pytest.raises(SchemaError):
            parse_schema("columns: [x]")

    def test_unknown_kind(self):
        """Test unknown kinds are rejected"""
        with pytest.raises(SchemaError, match="unknown kind"):
            _schema('{"name": "x", "kind": "interval"}')

    def test_fixture_schemas(self, fixtures_dir):
        """Test the Heart and Pima fixture schemas parse with the declared kinds"""
        heart = load_schema_file(str(fixtures_dir / "heart_schema.json"))
        kinds = [c.kind for c in heart.columns]
        assert kinds.count("continuous") == 5
        assert kinds.count("categorical") == 3
        assert kinds.count("binary") == 3
        assert kinds.count("ordinal") == 2

        pima = load_schema_file(str(fixtures_dir / "pima_schema.json"))
        assert [c.kind for c in pima.columns].count(COUNT) == 1
        assert [c.kind for c in pima.columns].count(ORDINAL) == 1


class TestLoadDataset:
    """Tests for load_dataset"""

    def test_standardizes_continuous(self):
        """Test (1, 2, 3) becomes (-1.2247, 0, 1.2247)"""
        ds = load_dataset("x\n1\n2\n3\n", _schema('{"name": "x", "kind": "continuous"}'))
        np.testing.assert_allclose(ds.y_C[:, 0], [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)
        assert abs(ds.y_C[:, 0].mean()) < 1e-10
        assert abs(ds.y_C[:, 0].std() - 1.0) < 1e-10
        mean, std = ds.standardization[0]
        assert mean == pytest.approx(2.0)
        assert std == pytest.approx(np.sqrt(2.0 / 3.0))

    def test_binary_levels_coded(self):
        """Test binary labels are coded by level index"""
        schema = _schema('{"name": "b", "kind": "binary", "levels": ["no", "yes"]}')
        ds = load_dataset("b\nyes\nno\nyes\n", schema)
        assert ds.y_D[:, 0].tolist() == [1, 0, 1]
        assert ds.decode("b") == ["yes", "no", "yes"]

    def test_unknown_level(self):
        """Test undeclared level raises"""
        schema = _schema('{"name": "b", "kind": "binary", "levels": ["no", "yes"]}')
        with pytest.raises(DataError, match="unknown level"):
            load_dataset("b\nmaybe\n", schema)

    def test_negative_count(self):
        """Test negative counts raise"""
        with pytest.raises(DataError, match="negative count"):
            load_dataset("k\n1\n-2\n", _schema('{"name": "k", "kind": "count"}'))

    def test_non_numeric_continuous(self):
        """Test non-numeric continuous cell raises"""
        with pytest.raises(DataError, match="non-numeric"):
            load_dataset("x\n1\nabc\n", _schema('{"name": "x", "kind": "continuous"}'))

    def test_missing_column(self):
        """Test schema columns absent from the table"""
        with pytest.raises(DataError, match="missing"):
            load_dataset("x\n1\n", _schema('{"name": "y", "kind": "continuous"}'))

    def test_count_trials_default_to_max(self):
        """Test unset trials become the largest observed count"""
        ds = load_dataset("k\n0\n3\n5\n", _schema('{"name": "k", "kind": "count"}'))
        assert ds.discrete_specs[0].trials == 5
        assert ds.discrete_specs[0].n_levels == 6

    def test_trials_below_observed(self):
        """Test declared trials must cover the data"""
        with pytest.raises(DataError, match="trials"):
            load_dataset("k\n0\n7\n", _schema('{"name": "k", "kind": "count", "trials": 4}'))

    def test_missing_rows_dropped(self):
        """Test rows with a missing cell are dropped and counted"""
        schema = _schema('{"name": "x", "kind": "continuous"}', '{"name": "b", "kind": "binary"}')
        ds = load_dataset("x,b\n1,0\n?,1\n3,\n4,1\n", schema)
        assert ds.n == 2
        assert ds.dropped_rows == 2

    def test_declared_level_not_missing(self):
        """Test a level spelled like a missing marker stays a level"""
        schema = _schema('{"name": "x", "kind": "continuous"}',
                         '{"name": "c", "kind": "categorical", "levels": ["A", "NA", "?"]}')
        ds = load_dataset("x,c\n1,NA\n2,?\nNA,A\n4,A\n", schema)
        assert ds.n == 3
        assert ds.dropped_rows == 1
        assert ds.decode("c") == ["NA", "?", "A"]

    def test_constant_column(self):
        """Test constant columns keep std 1 and are noted"""
        ds = load_dataset("x\n5\n5\n5\n", _schema('{"name": "x", "kind": "continuous"}'))
        assert ds.y_C[:, 0].tolist() == [0.0, 0.0, 0.0]
        assert any("constant" in note for note in ds.notes)

    def test_blocks_and_views(self, toy_dataset):
        """Test the continuous / discrete split and the GLLVM views"""
        assert (toy_dataset.p_C, toy_dataset.p_D) == (2, 4)
        specs, values = toy_dataset.gllvm_view(include_continuous=False)
        assert [s.kind for s in specs] == [BINARY, "categorical", ORDINAL, COUNT]
        assert values.shape == (3, 4)
        specs, values = toy_dataset.gllvm_view(include_continuous=True)
        assert [s.name for s in specs] == ["height", "weight", "smoker", "diet", "grade", "visits"]
        np.testing.assert_allclose(values[:, 0], toy_dataset.y_C[:, 0])

    def test_deterministic(self, toy_dataset, fixtures_dir):
        """Test identical inputs give identical arrays"""
        again = load_dataset((fixtures_dir / "toy_gower.csv").read_text(encoding="utf-8"), toy_dataset.schema)
        assert np.array_equal(again.y_C, toy_dataset.y_C)
        assert np.array_equal(again.y_D, toy_dataset.y_D)

    def test_immutable(self, toy_dataset):
        """Test the arrays cannot be written"""
        with pytest.raises(ValueError):
            toy_dataset.y_C[0, 0] = 1.0


class TestStandardize:
    """Tests for standardize"""

    def test_idempotent(self, rng):
        """Test re-standardizing changes nothing"""
        once, _, _ = standardize(rng.normal(3.0, 2.0, size=50))
        twice, mean, std = standardize(once)
        np.testing.assert_allclose(once, twice, atol=1e-12)
        assert abs(mean) < 1e-12 and abs(std - 1.0) < 1e-12
