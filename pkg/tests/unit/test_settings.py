# -*- coding: utf-8 -*-

"""
Unit tests for run configuration files and the pydantic config models.
"""

import pytest

from cma_inpaint.exceptions import ConfigError
from cma_inpaint.models import LossWeights, TrainConfig
from cma_inpaint.settings import PRESETS, build_config, dump_config, load_config_file, parse_config_text


class TestParseConfigText:
    """Tests for the `key = value` parser."""

    def test_dotted_keys_and_lists(self):
        """
        What it does: Parses dotted keys into sections and comma values into lists.
        Purpose: Ensure nested fields can be set from a flat file.
        """
        text = "# comment\nlr = 0.001\nencoder.hidden = 32  # trailing\ngenerator.down_channels = 8,8,16,16,16\n"
        tree = parse_config_text(text)
        print(f"Parsed: {tree}")
        assert tree["lr"] == "0.001"
        assert tree["encoder"] == {"hidden": "32"}
        assert tree["generator"]["down_channels"] == ["8", "8", "16", "16", "16"]

    def test_line_without_equals_names_line_number(self):
        """
        What it does: Verifies the error for a line without '='.
        Purpose: Ensure the message points at source and line.
        """
        with pytest.raises(ConfigError) as exc_info:
            parse_config_text("lr = 1\nbogus line\n", source="run.cfg")
        print(f"Error: {exc_info.value}")
        assert "run.cfg:2" in str(exc_info.value)

    def test_duplicate_key_is_rejected(self):
        """
        What it does: Verifies that a key given twice is an error.
        Purpose: Ensure a file never silently overrides itself.
        """
        with pytest.raises(ConfigError, match="duplicate key 'lr'"):
            parse_config_text("lr = 1\nlr = 2\n")

    def test_value_used_as_section_is_rejected(self):
        """
        What it does: Verifies the conflict between `encoder = x` and `encoder.hidden = y`.
        Purpose: Ensure section/value clashes are reported.
        """
        with pytest.raises(ConfigError):
            parse_config_text("encoder = 3\nencoder.hidden = 4\n")

    def test_empty_key_part_is_rejected(self):
        """
        What it does: Verifies the error for `encoder..hidden`.
        Purpose: Ensure malformed dotted keys are reported.
        """
        with pytest.raises(ConfigError, match="empty key"):
            parse_config_text("encoder..hidden = 4\n")


class TestBuildConfig:
    """Tests for validation on top of presets."""

    def test_defaults_are_desk_scale(self):
        """
        What it does: Verifies the desk defaults.
        Purpose: Ensure an empty file trains the documented desk configuration.
        """
        cfg = build_config()
        print(f"Desk config: steps={cfg.steps}, batch={cfg.batch_size}, size={cfg.synth.image_size}")
        assert cfg.preset == "desk"
        assert (cfg.lr, cfg.weight_decay, cfg.grad_clip) == (1e-4, 0.01, 1.0)
        assert (cfg.beta1, cfg.beta2, cfg.adam_eps) == (0.9, 0.999, 1e-8)
        assert (cfg.steps, cfg.batch_size, cfg.warmup_steps, cfg.seed) == (2000, 8, 200, 17)
        assert cfg.synth.image_size == 64 and cfg.synth.n_samples == 500
        assert (cfg.loss.lam, cfg.loss.alpha, cfg.loss.beta, cfg.loss.gamma) == (2.0, 1.0, 1.0, 0.1)

    def test_full_preset_uses_epochs(self):
        """
        What it does: Verifies the full preset converts epochs to steps.
        Purpose: Ensure max_epochs becomes ceil(epochs · n / B) steps.
        """
        cfg = build_config({"preset": "full"})
        expected = -(-200 * cfg.synth.n_samples // 128)
        print(f"Full-scale total steps: {cfg.total_steps}, expected {expected}")
        assert cfg.total_steps == expected
        assert cfg.warmup_steps == 2000

    def test_tiny_preset_is_consistent(self, tiny_cfg):
        """
        What it does: Verifies that the tiny preset validates.
        Purpose: Ensure the gradient-check configuration stays buildable.
        """
        assert tiny_cfg.synth.image_size == 32
        assert tiny_cfg.encoder.num_patches == tiny_cfg.synth.num_patches == 16

    def test_file_values_override_preset(self):
        """
        What it does: Verifies that file keys win over preset values.
        Purpose: Ensure a preset is only a starting point.
        """
        cfg = build_config({"preset": "tiny", "steps": "7", "loss": {"lambda": "4"}})
        assert cfg.steps == 7
        assert cfg.loss.lam == 4.0

    def test_unknown_key_is_config_error(self):
        """
        What it does: Verifies that unknown keys are errors.
        Purpose: Ensure typos in config files never pass silently.
        """
        with pytest.raises(ConfigError) as exc_info:
            build_config({"learning_rate": "0.1"})
        print(f"Error: {exc_info.value}")
        assert "learning_rate: unknown key" in str(exc_info.value)

    def test_unknown_preset(self):
        """
        What it does: Verifies the error for an unknown preset name.
        Purpose: Ensure the message lists the valid presets.
        """
        with pytest.raises(ConfigError, match="unknown preset"):
            build_config({"preset": "huge"})

    @pytest.mark.parametrize(
        "values",
        [
            {"lr": "-1"},
            {"synth": {"image_size": "48"}},
            {"encoder": {"hidden": "30", "heads": "4"}},
            {"mask_mode": "random"},
            {"drop": "cmad,colour"},
            {"discriminator": {"local_crop": "16"}},
            {"generator": {"down_strides": "1,3,1,2,1"}},
        ],
    )
    def test_invalid_values_are_config_errors(self, values):
        """
        What it does: Verifies field and cross-field validation errors.
        Purpose: Ensure every invalid setting maps to ConfigError (exit code 2).
        """
        print(f"Values: {values}")
        with pytest.raises(ConfigError):
            build_config(values)

    def test_encoder_must_match_dataset(self):
        """
        What it does: Verifies the encoder/dataset geometry check.
        Purpose: Ensure num_patches and max_text_len agree with the images and captions.
        """
        with pytest.raises(ConfigError, match="num_patches"):
            build_config({"encoder": {"num_patches": "16"}})


class TestConfigFiles:
    """Tests for reading and dumping config files."""

    def test_load_config_file(self, tmp_path):
        """
        What it does: Loads a config file from disk.
        Purpose: Ensure the file path flows through parsing and validation.
        """
        path = tmp_path / "run.cfg"
        path.write_text("preset = tiny\nsteps = 3\nmask_mode = object\n", encoding="utf-8")
        cfg = load_config_file(path)
        assert cfg.steps == 3 and cfg.mask_mode == "object"

    def test_missing_file_is_config_error(self, tmp_path):
        """
        What it does: Verifies the error for a missing config file.
        Purpose: Ensure I/O problems are reported as configuration errors.
        """
        with pytest.raises(ConfigError, match="cannot read config file"):
            load_config_file(tmp_path / "absent.cfg")

    @pytest.mark.parametrize("preset", sorted(PRESETS))
    def test_dump_then_load_reproduces_config(self, tmp_path, preset):
        """
        What it does: Dumps a config and loads the dump back.
        Purpose: Ensure config.txt written by a run reproduces that run's config.
        """
        cfg = build_config({"preset": preset, "drop": "wpa"})
        path = tmp_path / "config.txt"
        path.write_text(dump_config(cfg), encoding="utf-8")
        print(f"Dump:\n{path.read_text()}")
        assert load_config_file(path) == cfg


class TestLossWeights:
    """Tests for ablation weights."""

    def test_without_zeroes_dropped_components(self):
        """
        What it does: Verifies each ablation name zeroes the right weight.
        Purpose: Ensure ablations remove exactly the named terms.
        """
        w = LossWeights().without(["cmad", "wpa", "l_adv"])
        assert (w.w_cmad, w.w_isd, w.alpha, w.beta, w.w_global, w.w_local) == (0.0, 2.0, 0.0, 1.0, 0.1, 0.0)

    def test_adv_drops_both_adversarial_terms(self):
        """
        What it does: Verifies the `adv` shorthand.
        Purpose: Ensure both global and local adversarial weights go to 0.
        """
        w = LossWeights().without(["adv"])
        assert w.w_global == 0.0 and w.w_local == 0.0

    def test_unknown_component(self):
        """
        What it does: Verifies the error for an unknown component.
        Purpose: Ensure the message lists the valid names.
        """
        with pytest.raises(ValueError, match="unknown ablation component"):
            LossWeights().without(["style"])

    def test_effective_weights_apply_drop(self):
        """
        What it does: Verifies TrainConfig.effective_weights honours `drop`.
        Purpose: Ensure the trainer sees ablated weights.
        """
        cfg = TrainConfig(drop=["isd", "recon"])
        w = cfg.effective_weights()
        assert w.w_isd == 0.0 and w.beta == 0.0 and w.w_cmad == 2.0
