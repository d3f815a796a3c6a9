import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vlineage.embedding import (
    ColumnWeights,
    ModelFormatError,
    WordModel,
    column_vector,
    extract_corpora,
    hash_embedding,
    load_model,
    textify_value,
    tuple_vector,
    write_model,
)


class TestTextify:
    def test_number_gets_column_prefix(self):
        assert textify_value("price", 12) == ["price_12"]

    def test_null_yields_nothing(self):
        assert textify_value("name", None) == []

    def test_text_is_lowercased_and_split(self):
        assert textify_value("name", "Red Gold") == ["red", "gold"]

    def test_none_string_is_a_stop_word(self):
        assert textify_value("name", "None") == []
        assert textify_value("name", "none") == []

    def test_empty_text(self):
        assert textify_value("name", "   ") == []

    def test_numeric_string_goes_through_number_path(self):
        assert textify_value("ndb_no", "10000001") == ["ndb_no_10000001"]
        assert textify_value("amount", "12.5") == ["amount_12.5"]

    def test_real_number_shortest_roundtrip(self):
        assert textify_value("v", 0.1) == ["v_0.1"]
        assert textify_value("v", 12.0) == ["v_12.0"]

    def test_punctuation_split(self):
        assert textify_value("name", "mac-and-cheese, v8!") == ["mac", "and", "cheese", "v8"]

    def test_requires_column_name(self):
        with pytest.raises(ValueError):
            textify_value("", "x")

    @given(st.one_of(st.none(), st.text(max_size=30), st.integers(), st.floats(allow_nan=False, allow_infinity=False)))
    def test_tokens_are_lowercase_and_never_null_markers(self, value):
        tokens = textify_value("col", value)
        for token in tokens:
            assert token == token.lower()
            assert token not in ("", "none", "null")


class TestHashEmbedding:
    def test_deterministic(self):
        a = hash_embedding("salt", 8, 7)
        b = hash_embedding("salt", 8, 7)
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        assert abs(np.linalg.norm(hash_embedding("salt", 8, 7)) - 1.0) < 1e-9

    def test_distinct_tokens_differ(self):
        a = hash_embedding("salt", 8, 7)
        b = hash_embedding("sugar", 8, 7)
        assert float(a @ b) < 1.0 - 1e-9

    def test_seed_changes_vector(self):
        assert not np.allclose(hash_embedding("salt", 8, 7), hash_embedding("salt", 8, 8))


class TestModelIO:
    def test_load_small_model(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("2 3\nsalt 0.1 0.2 0.3\nsugar -1 0 1\n")
        model = load_model(path)
        assert model.dimension == 3
        assert len(model.entries) == 2
        assert np.allclose(model.vector("salt"), [0.1, 0.2, 0.3])

    def test_dimension_mismatch_names_line(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("2 3\nsalt 0.1 0.2 0.3\nsugar 0.5 0.5\n")
        with pytest.raises(ModelFormatError, match=":3"):
            load_model(path)

    def test_empty_file_is_malformed_header(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("")
        with pytest.raises(ModelFormatError, match="malformed header"):
            load_model(path)

    def test_non_finite_component_rejected(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("1 2\nsalt nan 0.0\n")
        with pytest.raises(ModelFormatError, match="non-finite"):
            load_model(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("banana\n")
        with pytest.raises(ModelFormatError, match="malformed header"):
            load_model(path)

    def test_roundtrip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        model = WordModel(5, {f"tok{i}": rng.standard_normal(5) for i in range(20)})
        path = tmp_path / "m.txt"
        write_model(model, path)
        loaded = load_model(path)
        assert loaded.dimension == model.dimension
        assert set(loaded.entries) == set(model.entries)
        for token, vec in model.entries.items():
            assert np.array_equal(loaded.entries[token], vec)

    def test_fallback_for_unknown_token(self):
        model = WordModel(6, {}, fallback_seed=5)
        vec = model.vector("anything")
        assert vec.shape == (6,)
        assert np.array_equal(vec, hash_embedding("anything", 6, 5))


class TestColumnAndTupleVectors:
    def setup_method(self):
        self.model = WordModel(8, fallback_seed=1)

    def test_single_known_token(self):
        values = {"t.name": "salt"}
        expected = self.model.vector("salt")
        assert np.allclose(column_vector(values, "t.name", self.model), expected)

    def test_mean_of_two_tokens(self):
        values = {"t.name": "salt sugar"}
        expected = (self.model.vector("salt") + self.model.vector("sugar")) / 2
        assert np.allclose(column_vector(values, "t.name", self.model), expected)

    def test_null_value_gives_zero_vector(self):
        assert np.array_equal(column_vector({"t.name": None}, "t.name", self.model), np.zeros(8))

    def test_tuple_vector_single_column(self):
        values = {"t.a": "salt"}
        assert np.allclose(tuple_vector(values, self.model), column_vector(values, "t.a", self.model))

    def test_tuple_vector_equal_weights(self):
        values = {"t.a": "salt", "t.b": "sugar"}
        u = column_vector(values, "t.a", self.model)
        v = column_vector(values, "t.b", self.model)
        assert np.allclose(tuple_vector(values, self.model), (u + v) / 2)

    def test_tuple_vector_weighted(self):
        values = {"t.a": "salt", "t.b": "sugar"}
        weights = ColumnWeights({"t.a": 2.0, "t.b": 1.0})
        u = column_vector(values, "t.a", self.model)
        v = column_vector(values, "t.b", self.model)
        # independent evaluation of the weighted-average formula
        expected = (2.0 * u + 1.0 * v) / 3.0
        assert np.allclose(tuple_vector(values, self.model, weights), expected)

    def test_empty_columns_are_skipped(self):
        values = {"t.a": "salt", "t.b": None}
        assert np.allclose(
            tuple_vector(values, self.model), column_vector(values, "t.a", self.model)
        )

    def test_all_empty_gives_zero(self):
        assert np.array_equal(tuple_vector({"t.a": None}, self.model), np.zeros(8))

    def test_all_zero_weights_rejected(self):
        weights = ColumnWeights({}, default_weight=0.0)
        with pytest.raises(ValueError):
            tuple_vector({"t.a": "salt"}, self.model, weights)

    def test_uniform_weights_equal_mean_of_nonempty_columns(self):
        rng = np.random.default_rng(11)
        vocab = ["salt", "sugar", "rice", "corn", "milk", "oat"]
        for _ in range(25):
            n_cols = rng.integers(1, 5)
            values = {}
            for i in range(n_cols):
                if rng.random() < 0.25:
                    values[f"t.c{i}"] = None
                else:
                    words = rng.choice(vocab, size=rng.integers(1, 4))
                    values[f"t.c{i}"] = " ".join(words)
            nonempty = [c for c, v in values.items() if v]
            if not nonempty:
                continue
            expected = np.mean([column_vector(values, c, self.model) for c in nonempty], axis=0)
            assert np.allclose(tuple_vector(values, self.model), expected)


class TestCorpora:
    def test_key_injection_rule(self):
        tables = {"t": [{"x": "a b c d"}]}
        _, tuples_corpus = extract_corpora(tables, 3, 2)
        assert tuples_corpus == "a b t_key_1 c d t_key_1\n"

    def test_columns_corpus_per_column_sentences(self):
        tables = {"t": [{"x": "a b", "y": "c"}]}
        columns_corpus, _ = extract_corpora(tables, 2, 2)
        assert columns_corpus == "a b t_key_1\nc\n"

    def test_empty_table_yields_empty_corpus(self):
        columns_corpus, tuples_corpus = extract_corpora({"t": []}, 2, 2)
        assert columns_corpus == ""
        assert tuples_corpus == ""

    def test_all_null_tuple_emits_no_sentence(self):
        columns_corpus, tuples_corpus = extract_corpora({"t": [{"x": None, "y": "None"}]}, 2, 2)
        assert columns_corpus == ""
        assert tuples_corpus == ""

    def test_numbers_textified_with_column_names(self):
        _, tuples_corpus = extract_corpora({"t": [{"price": 12}]}, 5, 5)
        assert tuples_corpus == "price_12\n"

    def test_keys_unique_per_row(self):
        tables = {"t": [{"x": "a"}, {"x": "b"}]}
        _, tuples_corpus = extract_corpora(tables, 1, 1)
        assert tuples_corpus == "a t_key_1\nb t_key_2\n"
