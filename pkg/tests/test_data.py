import numpy as np
import pytest

from wtnorm.data import (Schema, empirical_marginals, load_id_map, load_triplets, save_id_map,
                         save_triplets, split)
from wtnorm.errors import InvalidInputError, ParseError
from wtnorm.synth import ObservationSet, gen_longtail_dataset, sample_observations, uniform_distribution


def write(tmp_path, text, name="r.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoad:
    def test_empty_file(self, tmp_path):
        with pytest.raises(InvalidInputError):
            load_triplets(write(tmp_path, ""))

    def test_densify_counts(self, tmp_path):
        ds = load_triplets(write(tmp_path, "7,1,3\n7,2,4\n9,1,5\n"))
        assert ds.n_users == 2
        assert list(ds.user_counts) == [2, 1]
        assert ds.user_ids == ["7", "9"]
        assert ds.user_counts.sum() == ds.item_counts.sum() == 3

    def test_header_tab_and_timestamp(self, tmp_path):
        ds = load_triplets(write(tmp_path, "user\titem\trating\tts\nb\tx\t1\t99\na\tx\t2.5\t100\n"))
        assert ds.user_ids == ["b", "a"]
        np.testing.assert_array_equal(ds.observations.values, [1.0, 2.5])
        assert ds.m_items == 1

    def test_duplicates_kept(self, tmp_path):
        ds = load_triplets(write(tmp_path, "1,1,3\n1,1,4\n"))
        assert len(ds.observations) == 2

    def test_numeric_ids_sorted_numerically(self, tmp_path):
        ds = load_triplets(write(tmp_path, "10,1,1\n9,1,1\n100,1,1\n"))
        assert ds.user_ids == ["9", "10", "100"]
        np.testing.assert_array_equal(ds.observations.rows, [1, 0, 2])

    @pytest.mark.parametrize("text, line", [
        ("1,2,3\n1,2\n", 2),
        ("1,2,3\n4,5,abc\n", 2),
        ("1,2,3\n1,2,3\n1,2,3,4,5\n", 3),
        ("1,2,3\n,2,3\n", 2),
        ("1,2,nan\n", 1),
    ])
    def test_parse_errors(self, tmp_path, text, line):
        with pytest.raises(ParseError) as err:
            load_triplets(write(tmp_path, text))
        assert err.value.line == line
        assert f"line {line}" in str(err.value)

    def test_index_schema(self, tmp_path):
        ds = load_triplets(write(tmp_path, "0,2,1\n3,0,2\n"), Schema(ids="index", n=5, m=4))
        assert ds.observations.shape == (5, 4)
        np.testing.assert_array_equal(ds.observations.rows, [0, 3])


class TestRoundTrip:
    def test_generated_100k(self, tmp_path):
        S, _ = gen_longtail_dataset(300, 200, 100_000, 3, seed=2)
        path = tmp_path / "gen.csv"
        save_triplets(path, S)
        ds = load_triplets(path, Schema(ids="index", n=S.n, m=S.m))
        assert ds.observations.equals(S)

    def test_with_id_maps(self, tmp_path):
        ds = load_triplets(write(tmp_path, "u7,i1,3\nu9,i2,4.125\nu7,i2,-1e-3\n"))
        save_triplets(tmp_path / "out.csv", ds.observations, ds.user_ids, ds.item_ids)
        again = load_triplets(tmp_path / "out.csv")
        assert again.observations.equals(ds.observations)
        save_id_map(tmp_path / "users.csv", ds.user_ids)
        assert load_id_map(tmp_path / "users.csv") == ds.user_ids


class TestMarginals:
    def test_single(self):
        w = empirical_marginals(ObservationSet([0], [0], [1.0], 1, 1))
        assert list(w.p) == [1.0] and list(w.q) == [1.0]

    def test_counts(self):
        w = empirical_marginals(ObservationSet([0, 0, 1], [0, 0, 0], [1.0, 1.0, 1.0], 2, 1))
        np.testing.assert_allclose(w.p, [2 / 3, 1 / 3], rtol=0, atol=1e-15)

    def test_sums_exact(self, rng):
        S, _ = gen_longtail_dataset(97, 53, 5000, 2, seed=4)
        w = empirical_marginals(S)
        assert abs(w.p.sum() - 1) <= 1e-12 and abs(w.q.sum() - 1) <= 1e-12

    def test_binomial_concentration(self):
        S = sample_observations(np.zeros((100, 10)), uniform_distribution(100, 10), 1_000_000, 0.0, seed=5)
        w = empirical_marginals(S)
        assert np.max(np.abs(w.p - 0.01)) <= 5 * np.sqrt(0.01 * 0.99 / 1e6)


class TestSplit:
    @pytest.fixture
    def S(self):
        return sample_observations(np.zeros((20, 30)), uniform_distribution(20, 30), 1000, 1.0, seed=1)

    def test_zero(self, S):
        sp = split(S, 0, 0, seed=0)
        assert sp.train.equals(S)
        assert len(sp.validation) == len(sp.test) == 0

    def test_sizes_and_disjoint(self, S):
        sp = split(S, 100, 150, seed=3)
        assert (len(sp.train), len(sp.validation), len(sp.test)) == (750, 100, 150)
        # values carry unique noise, so they identify positions
        parts = np.concatenate([sp.train.values, sp.validation.values, sp.test.values])
        np.testing.assert_array_equal(np.sort(parts), np.sort(S.values))
        assert sp.train.shape == sp.test.shape == S.shape

    def test_deterministic(self, S):
        a, b = split(S, 100, 100, seed=9), split(S, 100, 100, seed=9)
        assert a.train.equals(b.train) and a.test.equals(b.test) and a.validation.equals(b.validation)

    def test_too_large(self, S):
        with pytest.raises(InvalidInputError):
            split(S, 500, 500, seed=0)
