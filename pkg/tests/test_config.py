"""RunConfig parsing, serialization, and presets."""

import pytest

from ssnet.config import PRESETS, RunConfig, resolve_config
from ssnet.errors import ConfigError


def test_presets_resolve_and_build():
    for name in ("tiny", "small", "paper"):
        cfg = resolve_config(name)
        net = cfg.net_config()
        assert net.grid.n_ports >= 16
        plan = cfg.train_plan(dataset_path="x.fasc", out_dir="out")
        assert plan.epochs == cfg.epochs


def test_parse_serialize_idempotent():
    for name in PRESETS:
        cfg = resolve_config(name)
        text1 = cfg.to_text()
        cfg2 = RunConfig.from_text(text1)
        text2 = cfg2.to_text()
        assert text1 == text2
        assert cfg == cfg2


def test_file_roundtrip(tmp_path):
    path = tmp_path / "run.cfg"
    cfg = resolve_config("tiny")
    path.write_text(cfg.to_text())
    assert resolve_config(str(path)) == cfg


def test_unknown_key_rejected():
    text = resolve_config("tiny").to_text().replace("[eval]", "[eval]\nbogus_key = 1")
    with pytest.raises(ConfigError, match="bogus_key"):
        RunConfig.from_text(text)


def test_missing_section_rejected():
    text = resolve_config("tiny").to_text().replace("[eval]", "[evaluation]")
    with pytest.raises(ConfigError):
        RunConfig.from_text(text)


def test_bad_value_rejected():
    text = resolve_config("tiny").to_text().replace("heads = 2", "heads = two")
    with pytest.raises(ConfigError):
        RunConfig.from_text(text)


def test_bad_bool_rejected():
    text = resolve_config("tiny").to_text().replace("use_moe = true", "use_moe = yes")
    with pytest.raises(ConfigError):
        RunConfig.from_text(text)


def test_snr_none_roundtrip():
    cfg = resolve_config("small")
    parsed = RunConfig.from_text(cfg.to_text())
    assert parsed.eval_snr_db[0] is None
    assert parsed.eval_snr_db[1:] == (0.0, 10.0, 20.0)


def test_unknown_name_rejected():
    with pytest.raises(ConfigError):
        resolve_config("no-such-preset-or-file")
