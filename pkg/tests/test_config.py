import pytest

from apte.config import RunConfig
from apte.errors import DataError


def test_text_round_trip_default_and_custom():
    for cfg in (
        RunConfig(),
        RunConfig(input="a b.csv", quantiles=(0.1, 0.9), mtry=3, outcome_penalty=12.5, restrict_stationary=False),
    ):
        assert RunConfig.from_text(cfg.to_text()) == cfg


def test_text_format_is_flat_key_value():
    text = RunConfig(seed=7).to_text()
    assert "seed = 7" in text.splitlines()
    assert "mtry = none" in text.splitlines()


def test_comments_and_partial_files():
    cfg = RunConfig.from_text("# my run\nlags_y = 3  # short\ntop_k = 4\n")
    assert cfg.lags_y == 3 and cfg.top_k == 4 and cfg.n_trees == 500


@pytest.mark.parametrize("text", ["bogus = 1\n", "lags_y = three\n", "restrict_stationary = maybe\n", "no equals\n"])
def test_bad_config_text(text):
    with pytest.raises(DataError):
        RunConfig.from_text(text)


def test_fingerprint_excludes_volatile_settings():
    a = RunConfig(out_dir="x", n_jobs=1).fingerprint()
    b = RunConfig(out_dir="y", n_jobs=4).fingerprint()
    assert a == b and "out_dir" not in a
    assert a["quantiles"] == [0.25, 0.5, 0.75]


def test_updated_ignores_none():
    cfg = RunConfig(seed=3).updated(seed=None, lags_y=2)
    assert cfg.seed == 3 and cfg.lags_y == 2


def test_forest_params():
    p = RunConfig(n_trees=10, min_node_size=2, n_jobs=3).forest_params(seed=99)
    assert (p.n_trees, p.min_node_size, p.seed, p.n_jobs) == (10, 2, 99, 3)
