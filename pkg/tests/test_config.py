import pytest

from sganseg.config import RunConfig, load_config, parse_config
from sganseg.errors import ConfigError


def test_parse_with_comments_and_types():
    cfg = parse_config("# run\nseed = 7  # trailing\nlr=0.001\ncascade = yes\n\nvgg_reduce = mean\n")
    assert cfg.seed == 7 and cfg.lr == 0.001 and cfg.cascade is True and cfg.vgg_reduce == "mean"


@pytest.mark.parametrize(
    "text",
    ["bogus = 1", "seed = x", "just a line", "sigma_max = 60", "kappa_min = 2\nkappa_max = 1.5", "threads = 0"],
)
def test_rejects_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_dump_round_trip(tmp_path):
    cfg = RunConfig(seed=3, gamma=25.0, cascade=True)
    path = tmp_path / "c.txt"
    path.write_text(cfg.dumps())
    assert load_config(path) == cfg


def test_updated_ignores_none_and_validates():
    cfg = RunConfig().updated(seed=None, epochs=2)
    assert cfg.epochs == 2 and cfg.seed == 0
    with pytest.raises(ConfigError):
        cfg.updated(batch=0)
