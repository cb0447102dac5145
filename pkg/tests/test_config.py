import pytest
from hypothesis import given
from hypothesis import strategies as st

from thinfilm.config import RunConfig, load_config, parse_config
from thinfilm.errors import ConfigError


def test_defaults_valid():
    cfg = parse_config("")
    assert cfg.nslabs == 4 and cfg.domain == "strip"


def test_comments_and_types():
    cfg = parse_config("# run\nM = 40  # normal nodes\nT = 0.2\ndt = 0.05\n")
    assert cfg.M == 40 and isinstance(cfg.M, int) and cfg.nslabs == 4


@pytest.mark.parametrize("text", [
    "bogus = 1", "M = 4", "M = abc", "T = 0.1\ndt = 0.03", "gamma = 1.5", "domain = cube",
    "domain = disk\nN = 3", "bc = robin", "h0 = file.csv", "h0 = builtin:cap", "g = builtin:nope",
    "M = 16\nM = 32", "no equals sign", "method = lu",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=12))
def test_unknown_keys_always_rejected(key):
    if key in RunConfig().keys():
        return
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(f"{key} = 1")


def test_provenance(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("T = 0.1\nh0 = csv:h.csv\n")
    cfg = load_config(str(p))
    assert cfg.source == str(p) and len(cfg.digest) == 64
    assert cfg.h0 == f"csv:{tmp_path / 'h.csv'}"
    assert "T = 0.1" in cfg.echo()
