import dataclasses

import pytest
import yaml

from salcolor.config import (
    SEED_ENV_VAR,
    apply_overrides,
    config_hash,
    config_to_dict,
    config_to_yaml,
    default_run_config,
    load_run_config,
    run_config_from_dict,
)


def test_dict_round_trip_reproduces_defaults():
    config = default_run_config()
    rebuilt = run_config_from_dict(config_to_dict(config))
    assert rebuilt == config


def test_yaml_round_trip():
    config = default_run_config()
    assert yaml.safe_load(config_to_yaml(config)) == config_to_dict(config)


def test_config_hash_is_stable_and_value_sensitive():
    a = default_run_config()
    b = default_run_config()
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 64
    b.training.seed = 999
    assert config_hash(a) != config_hash(b)


def test_unknown_section_rejected():
    with pytest.raises(ValueError, match="unknown config sections"):
        run_config_from_dict({"optimizer": {"lr": 1}})


def test_unknown_key_rejected():
    with pytest.raises(ValueError, match="unknown keys in config section 'training'"):
        run_config_from_dict({"training": {"learning_rate": 1e-4}})


def test_non_mapping_section_rejected():
    with pytest.raises(ValueError, match="must be a mapping"):
        run_config_from_dict({"training": [1, 2]})


def test_non_mapping_root_rejected():
    with pytest.raises(ValueError, match="root must be a mapping"):
        run_config_from_dict([])


def test_scalar_coercion():
    config = run_config_from_dict(
        {
            "training": {"seed": "41", "lr_stage1": 1},
            "generator": {"width_multiplier": "0.5"},
        }
    )
    assert config.training.seed == 41
    assert config.training.lr_stage1 == 1.0
    assert isinstance(config.training.lr_stage1, float)
    assert config.generator.width_multiplier == 0.5


@pytest.mark.parametrize(
    "payload",
    [
        {"training": {"use_gan": 1}},
        {"training": {"use_gan": "true"}},
        {"training": {"seed": True}},
        {"training": {"seed": 2.5}},
        {"training": {"lr_stage1": True}},
        {"training": {"adv_mode": 5}},
        {"output_dir": 7},
    ],
)
def test_type_errors_rejected(payload):
    with pytest.raises(ValueError):
        run_config_from_dict(payload)


def test_apply_overrides_parses_yaml_scalars():
    data = {}
    apply_overrides(
        data,
        ["training.seed=7", "loss_weights.lambda_g=0.25", "training.use_gan=false",
         "output_dir=runs/x"],
    )
    assert data["training"]["seed"] == 7
    assert data["loss_weights"]["lambda_g"] == 0.25
    assert data["training"]["use_gan"] is False
    assert data["output_dir"] == "runs/x"


def test_apply_overrides_errors():
    with pytest.raises(ValueError, match="section.key=value"):
        apply_overrides({}, ["training.seed"])
    with pytest.raises(ValueError, match="empty key component"):
        apply_overrides({}, ["training.=5"])
    with pytest.raises(ValueError, match="non-mapping"):
        apply_overrides({"training": {"seed": 1}}, ["training.seed.x=3"])


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(
        yaml.safe_dump({"training": {"seed": 11}, "generator": {"base_channels": 32}})
    )
    return path


def test_precedence_chain(config_file):
    # file beats defaults
    config = load_run_config(config_file, env={})
    assert config.training.seed == 11
    assert config.generator.base_channels == 32

    # environment seed beats the file
    config = load_run_config(config_file, env={SEED_ENV_VAR: "22"})
    assert config.training.seed == 22

    # --set overrides beat the environment
    config = load_run_config(
        config_file, overrides=["training.seed=33"], env={SEED_ENV_VAR: "22"}
    )
    assert config.training.seed == 33

    # an explicit seed flag beats everything
    config = load_run_config(
        config_file, overrides=["training.seed=33"], seed=44, env={SEED_ENV_VAR: "22"}
    )
    assert config.training.seed == 44
    # non-seed file settings are untouched by the seed plumbing
    assert config.generator.base_channels == 32


def test_empty_env_seed_is_ignored(config_file):
    config = load_run_config(config_file, env={SEED_ENV_VAR: ""})
    assert config.training.seed == 11


def test_invalid_env_seed(config_file):
    with pytest.raises(ValueError, match="must be an integer"):
        load_run_config(config_file, env={SEED_ENV_VAR: "lots"})


def test_load_without_file_gives_defaults():
    config = load_run_config(env={})
    assert config == default_run_config()


def test_empty_config_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    assert load_run_config(path, env={}) == default_run_config()


def test_scalar_config_file_rejected(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("5\n")
    with pytest.raises(ValueError, match="must hold a mapping"):
        load_run_config(path, env={})


def test_load_validates(config_file):
    with pytest.raises(ValueError, match="batch_size"):
        load_run_config(config_file, overrides=["training.batch_size=0"], env={})


def test_effective_generator_combines_switches():
    config = run_config_from_dict({"training": {"use_global": False}})
    assert config.generator.use_global_encoder is True
    assert config.effective_generator().use_global_encoder is False

    config = run_config_from_dict({"generator": {"use_global_encoder": False}})
    assert config.effective_generator().use_global_encoder is False

    config = default_run_config()
    assert config.effective_generator().use_global_encoder is True
    # the effective view never mutates the stored config
    assert config.generator == default_run_config().generator


def test_effective_generator_drives_validation():
    # a four-level encoder cannot host the global branch, but disabling the
    # branch at the training level makes the same generator section valid
    base = {"generator": {"encoder_depth": 4, "input_size": 64}}
    with pytest.raises(ValueError):
        run_config_from_dict(base).validate()
    ok = dict(base, training={"use_global": False})
    run_config_from_dict(ok).validate()


def test_training_validate_errors():
    config = default_run_config()
    bad = dataclasses.replace(config.training, adv_mode="hinge")
    with pytest.raises(ValueError, match="adv_mode"):
        bad.validate()
    bad = dataclasses.replace(config.training, pixel_mode="huber")
    with pytest.raises(ValueError, match="pixel_mode"):
        bad.validate()
    bad = dataclasses.replace(config.training, lr_halving_period=0)
    with pytest.raises(ValueError, match="lr_halving_period"):
        bad.validate()
    bad = dataclasses.replace(config.training, input_noise_std=-0.1)
    with pytest.raises(ValueError, match="input_noise_std"):
        bad.validate()
