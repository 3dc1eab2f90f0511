import pytest

from fod.config import ConfigError, RunConfig, load_config, parse_config


def test_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    t = cfg.train
    assert (t.epochs, t.lr, t.layers, t.heads, t.d_model, t.lambda1, t.lambda2) == (100, 1e-4, 3, 8, 64, 0.5, 0.5)
    assert cfg.criterion == "recdiv"


def test_parse_values_and_comments():
    cfg = parse_config(
        """
        # comment
        epochs = 3   # trailing comment
        entropy = off
        bank=coreset
        texture = noise
        criterion = div
        ablate_views = intra, inter
        seed = 7
        """
    )
    assert cfg.train.epochs == 3 and cfg.train.entropy is False and cfg.train.bank == "coreset"
    assert cfg.data.texture == "noise" and cfg.criterion == "div"
    assert cfg.ablate_views == ("intra", "inter")
    assert cfg.train.seed == cfg.data.seed == cfg.seed == 7


def test_text_roundtrip():
    cfg = parse_config("epochs = 5\nlr = 0.003\nanomaly = local\nablate_entropy = on\n")
    assert parse_config(cfg.to_text()) == cfg
    assert cfg.with_seed(3).seed == 3


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("bogus = 1", "unknown key"),
        ("epochs = 1\nepochs = 2", "duplicate"),
        ("epochs", "expected key = value"),
        ("epochs = many", "bad value"),
        ("entropy = maybe", "bad value"),
        ("criterion = vibes", "criterion"),
        ("bank = kmeans", "unknown bank"),
        ("smoothing_sigma = -1", "nonnegative"),
    ],
)
def test_rejections(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text, "c.cfg")


def test_error_names_line():
    with pytest.raises(ConfigError, match="c.cfg:2"):
        parse_config("epochs = 2\nnope = 1", "c.cfg")


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")
