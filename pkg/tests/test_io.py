import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpsb import core, io as mio, pl, simulate
from mpsb.data import load_demand_example
from mpsb.errors import ConfigError, DataError


def _write(tmp_path, text, name="c.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestIngest:
    def test_well_formed(self, tmp_path):
        m = mio.ingest_csv(_write(tmp_path, "t,a,b\n1,3,4\n2,0,1\n5,7,2\n"))
        assert m.series_labels == ("a", "b") and m.time_labels == (1, 2, 5)
        np.testing.assert_array_equal(m.values, [[3, 0, 7], [4, 1, 2]])

    def test_whitespace_and_blank_lines(self, tmp_path):
        m = mio.ingest_csv(_write(tmp_path, "t, a ,b\n\n1, 3,4\n2,0 ,1\n"))
        assert m.series_labels == ("a", "b") and m.T == 2

    @pytest.mark.parametrize(
        "text,row,col",
        [
            ("t,a,b\n1,3,4\n2,-1,1\n", 3, 2),
            ("t,a,b\n1,3,x\n", 2, 3),
            ("t,a,b\n1,3.5,1\n", 2, 2),
            ("t,a,b\n1,3\n", 2, None),
            ("t,a,b\n2,3,4\n2,1,1\n", 3, 1),
            ("t,a,a\n1,3,4\n", 1, None),
            ("t,a,\n1,3,4\n", 1, 3),
            ("t\n1\n", 1, None),
        ],
    )
    def test_errors_carry_coordinates(self, tmp_path, text, row, col):
        with pytest.raises(DataError) as info:
            mio.ingest_csv(_write(tmp_path, text))
        assert info.value.row == row and info.value.column == col
        assert f"row {row}" in str(info.value)

    def test_missing_and_empty(self, tmp_path):
        with pytest.raises(DataError, match="does not exist"):
            mio.ingest_csv(tmp_path / "nope.csv")
        with pytest.raises(DataError, match="empty"):
            mio.ingest_csv(_write(tmp_path, ""))
        with pytest.raises(DataError, match="no data rows"):
            mio.ingest_csv(_write(tmp_path, "t,a\n"))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 12), st.integers(0, 10_000))
    def test_round_trip(self, J, T, seed):
        import tempfile
        from pathlib import Path

        rng = np.random.default_rng(seed)
        times = tuple(int(v) for v in np.cumsum(rng.integers(1, 4, T)))
        m = core.CountMatrix(rng.integers(0, 50, (J, T)), tuple(f"s{j}" for j in range(J)), times)
        with tempfile.TemporaryDirectory() as d:
            p = Path(d) / "c.csv"
            mio.write_counts_csv(p, m)
            assert mio.ingest_csv(p) == m

    def test_bundled_example(self):
        m = load_demand_example()
        assert m.J == 2 and m.T == 104
        r = np.corrcoef(m.values)[0, 1]
        assert abs(r - 0.4) < 0.05


class TestJson:
    def test_version_and_kind(self, tmp_path):
        p = tmp_path / "x.json"
        mio.write_json(p, {"a": np.array([1.0, np.nan]), "b": np.int64(3)}, kind="thing")
        doc = json.loads(p.read_text())
        assert doc == {"version": 1, "kind": "thing", "a": [1.0, None], "b": 3}
        assert mio.read_json(p, kind="thing")["b"] == 3
        with pytest.raises(DataError, match="expected"):
            mio.read_json(p, kind="other")

    def test_bad_documents(self, tmp_path):
        with pytest.raises(DataError, match="invalid JSON"):
            mio.read_json(_write(tmp_path, "{oops", "a.json"))
        with pytest.raises(DataError, match="version"):
            mio.read_json(_write(tmp_path, "{}", "b.json"))
        with pytest.raises(DataError, match="unsupported"):
            mio.read_json(_write(tmp_path, '{"version": 99}', "c.json"))

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        mio.atomic_write_text(tmp_path / "sub" / "f.txt", "hello")
        assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.txt"]


class TestConfigAndState:
    @pytest.mark.parametrize(
        "cfg",
        [
            core.ModelConfig(J=2),
            core.ModelConfig(J=3, gamma_mode=core.FixedGamma(0.4), lambda_priors=((1, 2), (3, 4), (5, 6)),
                             propagation="hgb", resampling="multinomial", fixed_lambdas=(1, 2, 3)),
            core.ModelConfig(J=1, gamma_mode=core.GammaGrid(7, 0.1, 0.9), gamma_likelihood="particle-mean"),
        ],
    )
    def test_config_round_trip(self, cfg):
        assert mio.config_from_dict(json.loads(json.dumps(mio.config_to_dict(cfg)))) == cfg

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            mio.config_from_dict({"J": 2, "bogus": 1})

    def test_checkpoint_round_trip(self, tmp_path):
        y = simulate([2.0, 3.0], 0.3, 10.0, 10.0, 6, seed=0).counts
        st_, sums = pl.run(y, core.ModelConfig(J=2, n_particles=50))
        p = tmp_path / "ck.json"
        mio.write_checkpoint(p, st_, sums, y.series_labels)
        back, bsums, labels = mio.read_checkpoint(p)
        assert labels == y.series_labels and back.config == st_.config and back.t == 6
        for name in mio._STATE_ARRAYS:
            np.testing.assert_array_equal(getattr(back, name), getattr(st_, name))
        assert back.ess_history == st_.ess_history
        np.testing.assert_array_equal(bsums[-1].rate_q, sums[-1].rate_q)
        # nan gammas (grid mode before any step) survive too
        init = pl.init(core.ModelConfig(J=2, n_particles=5))
        mio.write_checkpoint(p, init, [])
        assert np.all(np.isnan(mio.read_checkpoint(p)[0].gammas))

    def test_malformed_checkpoint(self, tmp_path):
        p = tmp_path / "ck.json"
        mio.write_json(p, {"state": {}, "summaries": []}, kind="checkpoint")
        with pytest.raises(DataError, match="malformed"):
            mio.read_checkpoint(p)


class TestTables:
    def test_summaries_csv_feeds_fitted_reader(self, tmp_path):
        y = simulate([2.0, 3.0], 0.3, 10.0, 10.0, 5, seed=0).counts
        _, sums = pl.run(y, core.ModelConfig(J=2, n_particles=50))
        p = tmp_path / "s.csv"
        mio.atomic_write_text(p, mio.format_summaries_csv(sums, y))
        mean, iv, theta = mio.read_fitted_csv(p, y)
        np.testing.assert_array_equal(mean[:, -1], sums[-1].rate_mean)
        np.testing.assert_array_equal(iv[1, -1], sums[-1].rate_q[[0, 2], 1])
        assert theta[-1] == sums[-1].theta_mean

    def test_fitted_reader_errors(self, tmp_path):
        y = core.CountMatrix(np.ones((1, 2), int), ("a",))
        with pytest.raises(DataError, match="does not exist"):
            mio.read_fitted_csv(tmp_path / "no.csv", y)
        with pytest.raises(DataError, match="rows"):
            mio.read_fitted_csv(_write(tmp_path, "t,a_rate_mean\n1,2\n"), y)
        with pytest.raises(DataError, match="missing column"):
            mio.read_fitted_csv(_write(tmp_path, "t,b_rate_mean\n1,2\n2,3\n"), y)
