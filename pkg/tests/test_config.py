import json

import pytest

from neurogrow.config import (apply_overrides, config_from_dict, config_to_dict, load_config,
                              parse_override)
from neurogrow.errors import ConfigError


def test_defaults_round_trip():
    cfg = config_from_dict({})
    assert cfg.reg.n_iters == 15 and cfg.reg.lam == 0.1 and cfg.growth.fraction == 0.35
    assert cfg.batch_size == 128 and cfg.optim.momentum == 0.9
    assert config_from_dict(config_to_dict(cfg)) == cfg


@pytest.mark.parametrize("raw, fragment", [
    ({"epoch": 3}, "epoch"),
    ({"growth": {"op": "split"}}, "growth.op"),
    ({"reg": {"n_iters": 1.5}}, "reg.n_iters"),
    ({"reg": {"enable_sim_loss": 1}}, "reg.enable_sim_loss"),
    ({"epochs": True}, "epochs"),
    ({"epochs": 10, "grow_every_epochs": 20}, "grow_every_epochs"),
    ({"hidden": [{"type": "dense", "width": 0}]}, "hidden[0]"),
    ({"hidden": [{"type": "conv", "channels": 4, "kernal": 3}]}, "kernal"),
    ({"reg_layers": "some"}, "reg_layers"),
    ({"data": {"kind": "csv"}}, "train_path"),
])
def test_invalid_configs_name_the_problem(raw, fragment):
    with pytest.raises(ConfigError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
        config_from_dict(raw)


def test_int_accepted_for_float_fields():
    assert config_from_dict({"reg": {"lam": 1}}).reg.lam == 1


def test_parse_override_json_and_string():
    assert parse_override("reg.lam=0.5") == ("reg.lam", 0.5)
    assert parse_override("growth.operator=split") == ("growth.operator", "split")
    assert parse_override('hidden=[{"type":"dense","width":8}]')[1] == [{"type": "dense", "width": 8}]
    with pytest.raises(ConfigError):
        parse_override("novalue")


def test_apply_overrides_does_not_mutate_input():
    raw = {"reg": {"lam": 0.1}}
    out = apply_overrides(raw, ["reg.lam=0.2", "optim.lr=0.05"])
    assert raw == {"reg": {"lam": 0.1}}
    assert out == {"reg": {"lam": 0.2}, "optim": {"lr": 0.05}}


def test_load_config_env_seed(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 3}))
    assert load_config(p, env={}).seed == 3
    assert load_config(p, env={"NEUROGROW_SEED": "8"}).seed == 8
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p, env={})
