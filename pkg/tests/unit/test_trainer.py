# -*- coding: utf-8 -*-

"""
Unit tests for the training step, checkpoint state, short runs and inference.

Runs here use the tiny preset for a handful of steps; longer runs live in
tests/integration and are marked slow.
"""

import numpy as np
import pytest

from cma_inpaint.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from cma_inpaint.config import DIAGNOSTICS_CSV_HEADER, LOSS_CSV_HEADER, MASK_FILL_VALUE
from cma_inpaint.exceptions import CheckpointError, ConfigError, DimensionError, NumericError
from cma_inpaint.imageio import read_image, write_image
from cma_inpaint.masks import center_mask
from cma_inpaint.trainer import (
    ablate,
    ablation_name,
    build_networks,
    config_from_checkpoint,
    evaluate_state,
    infer,
    init_state,
    inpaint,
    read_loss_csv,
    state_from_checkpoint,
    state_to_checkpoint,
    train,
    train_step,
    validate,
    validation_dataset,
)
from cma_inpaint.utils import parameter_fingerprint


class TestState:
    """Tests for network construction and checkpoint state."""

    def test_networks_are_seeded(self, tiny_cfg):
        """
        What it does: Builds the networks twice from the same configuration.
        Purpose: Ensure initialization depends only on the run seed.
        """
        a, b = build_networks(tiny_cfg), build_networks(tiny_cfg)
        for name in a.named():
            assert parameter_fingerprint(a.named()[name]) == parameter_fingerprint(b.named()[name]), name
        assert parameter_fingerprint(a.d_global) != parameter_fingerprint(a.d_local)

    def test_checkpoint_round_trip(self, tiny_cfg, tiny_batch):
        """
        What it does: Trains one step, converts the state to a checkpoint and back.
        Purpose: Ensure parameters, buffers, moments and counters are restored.
        """
        state = init_state(tiny_cfg)
        train_step(tiny_batch, state)
        restored = state_from_checkpoint(state_to_checkpoint(state))
        assert restored.step == 1
        assert restored.opt_g.t == restored.opt_d.t == 1
        for name, module in state.nets.named().items():
            other = restored.nets.named()[name]
            for key, value in module.state_dict().items():
                np.testing.assert_array_equal(other.state_dict()[key], value, err_msg=f"{name}.{key}")
        for key, value in state.opt_g.state_dict().items():
            np.testing.assert_array_equal(restored.opt_g.state_dict()[key], value, err_msg=key)

    def test_invalid_config_echo(self):
        """
        What it does: Rebuilds the configuration of a checkpoint with a bad config echo.
        Purpose: Ensure CheckpointError lists the validation problem.
        """
        ckpt = Checkpoint(step=0, config={"preset": "tiny", "lr": -1.0})
        with pytest.raises(CheckpointError, match="lr"):
            config_from_checkpoint(ckpt)

    def test_shape_mismatch_on_resume(self, tiny_cfg, tiny_cfg_factory):
        """
        What it does: Loads a tiny checkpoint into a wider encoder.
        Purpose: Ensure CheckpointError instead of silent truncation.
        """
        ckpt = state_to_checkpoint(init_state(tiny_cfg))
        wider = tiny_cfg_factory(encoder={"hidden": 32, "ffn": 64})
        with pytest.raises(CheckpointError):
            state_from_checkpoint(ckpt, wider)


class TestTrainStep:
    """Tests for train_step."""

    def test_one_step(self, tiny_cfg, tiny_batch):
        """
        What it does: Runs one D-step and one G-step.
        Purpose: Ensure a finite record, the first warmup learning rate and updated networks.
        """
        state = init_state(tiny_cfg)
        before = {name: parameter_fingerprint(m) for name, m in state.nets.named().items()}
        record = train_step(tiny_batch, state)
        print(f"Record: {record.model_dump()}")
        assert state.step == 1
        assert all(np.isfinite(v) for v in record.model_dump().values())
        assert state.diagnostics["lr"] == pytest.approx(tiny_cfg.lr / tiny_cfg.warmup_steps)
        assert state.diagnostics["masked_l1"] >= 0.0
        for name, module in state.nets.named().items():
            assert parameter_fingerprint(module) != before[name], f"{name} was not updated"

    def test_totals_match_components(self, tiny_cfg, tiny_batch):
        """
        What it does: Recomputes ℓ_G and ℓ_D from the recorded components.
        Purpose: Ensure the logged totals are the weighted sums.
        """
        state = init_state(tiny_cfg)
        r = train_step(tiny_batch, state)
        w = tiny_cfg.effective_weights()
        expected_g = r.cmad * 2 + r.isd * 2 + r.wpa * 1 + r.l1 * 1 + r.g_adv_g * w.gamma + r.l_adv_g * w.gamma
        assert r.total_g == pytest.approx(expected_g, rel=1e-9)
        assert r.total_d == pytest.approx(w.gamma * (r.g_adv_d + r.l_adv_d), rel=1e-9)

    def test_ablated_components_are_recorded(self, tiny_cfg_factory, tiny_batch):
        """
        What it does: Trains one step without the distillation terms.
        Purpose: Ensure dropped components are still logged but do not enter ℓ_G.
        """
        cfg = tiny_cfg_factory(drop="cmad,isd")
        r = train_step(tiny_batch, init_state(cfg))
        w = cfg.effective_weights()
        assert r.cmad > 0.0
        assert r.total_g == pytest.approx(r.wpa + r.l1 + w.gamma * (r.g_adv_g + r.l_adv_g), rel=1e-9)

    def test_non_finite_parameter(self, tiny_cfg, tiny_batch):
        """
        What it does: Poisons a generator weight with NaN.
        Purpose: Ensure NumericError carrying the step number.
        """
        state = init_state(tiny_cfg)
        _, param = next(iter(state.nets.generator.named_parameters()))
        param.data[...] = np.nan
        with pytest.raises(NumericError) as info:
            train_step(tiny_batch, state)
        assert info.value.step == 1
        assert state.step == 0


class TestTrainRun:
    """Tests for train() over a few steps."""

    def test_outputs(self, tmp_path, tiny_cfg_factory):
        """
        What it does: Trains three steps with a checkpoint every two.
        Purpose: Ensure CSVs, the periodic and final checkpoints and the config echo are written.
        """
        cfg = tiny_cfg_factory(steps=3, checkpoint_every=2)
        result = train(cfg, tmp_path, workers=0)
        lines = result.loss_csv.read_text(encoding="utf-8").splitlines()
        print(f"Loss CSV:\n{lines}")
        assert lines[0] == ",".join(LOSS_CSV_HEADER)
        assert [row.split(",")[0] for row in lines[1:]] == ["1", "2", "3"]
        diag = result.diagnostics_csv.read_text(encoding="utf-8").splitlines()
        assert diag[0] == ",".join(DIAGNOSTICS_CSV_HEADER) and len(diag) == 4
        assert (tmp_path / "checkpoints" / "step-000002.ckpt").exists()
        assert not (tmp_path / "checkpoints" / "step-000003.ckpt").exists()
        assert load_checkpoint(result.final_checkpoint).step == 3
        assert (tmp_path / "config.txt").exists()
        assert result.best_checkpoint is None

    def test_read_loss_csv(self, tmp_path, tiny_cfg_factory):
        """
        What it does: Reads back the loss CSV of a two-step run.
        Purpose: Ensure one dict of floats per step with every column.
        """
        result = train(tiny_cfg_factory(steps=2), tmp_path, workers=0)
        rows = read_loss_csv(result.loss_csv)
        assert [row["step"] for row in rows] == [1.0, 2.0]
        assert set(rows[0]) == set(LOSS_CSV_HEADER)

    def test_resume_is_bit_exact(self, tmp_path, tiny_cfg_factory):
        """
        What it does: Trains 2 steps straight and 1 + 1 steps with a resume in between.
        Purpose: Ensure the resumed run reproduces the loss rows and final checkpoint byte for byte.
        """
        straight = train(tiny_cfg_factory(steps=2), tmp_path / "straight", workers=0)
        first = train(tiny_cfg_factory(steps=1), tmp_path / "resumed", workers=0)
        resumed = train(tiny_cfg_factory(steps=2), tmp_path / "resumed", resume=first.final_checkpoint, workers=0)
        assert resumed.state.step == 2
        assert resumed.loss_csv.read_text() == straight.loss_csv.read_text()
        assert resumed.final_checkpoint.read_bytes() == straight.final_checkpoint.read_bytes()

    def test_validation_keeps_best(self, tmp_path, tiny_cfg_factory):
        """
        What it does: Validates every step of a two-step run.
        Purpose: Ensure a best checkpoint and its score are kept.
        """
        result = train(tiny_cfg_factory(steps=2, validate_every=1), tmp_path, workers=0)
        assert result.best_checkpoint is not None
        best = load_checkpoint(result.best_checkpoint)
        assert best.meta["best_masked_l1"] == pytest.approx(result.state.best_masked_l1)


class TestEvaluation:
    """Tests for validate/evaluate_state."""

    def test_validate_and_evaluate(self, tiny_cfg):
        """
        What it does: Scores an untrained state on the validation set.
        Purpose: Ensure a finite masked L1 and a report over every validation sample.
        """
        state = init_state(tiny_cfg)
        dataset = validation_dataset(tiny_cfg)
        score = validate(state, dataset)
        report = evaluate_state(state, dataset)
        print(f"Validation masked L1 {score:.4f}, PSNR {report.psnr:.2f}")
        assert np.isfinite(score) and score >= 0.0
        assert report.count == tiny_cfg.synth.val_samples
        assert report.masked_l1 == pytest.approx(score, rel=1e-6)


class TestInference:
    """Tests for inpaint/infer."""

    def test_known_pixels_are_kept(self, tiny_cfg, tiny_dataset):
        """
        What it does: Inpaints a center hole with an untrained checkpoint.
        Purpose: Ensure pixels outside the mask are the input's and the hole is filled.
        """
        ckpt = state_to_checkpoint(init_state(tiny_cfg))
        image = tiny_dataset[0].image
        mask = center_mask(32, 32)
        out = inpaint(ckpt, image, mask, tiny_dataset[0].caption)
        hole = mask.grid.astype(bool)
        assert out.shape == (3, 32, 32)
        np.testing.assert_array_equal(out[:, ~hole], image[:, ~hole])
        assert np.all(out[:, hole] != MASK_FILL_VALUE)

    def test_wrong_image_size(self, tiny_cfg):
        """
        What it does: Inpaints a 64×64 image with a 32×32 checkpoint.
        Purpose: Ensure DimensionError.
        """
        ckpt = state_to_checkpoint(init_state(tiny_cfg))
        with pytest.raises(DimensionError, match="checkpoint expects"):
            inpaint(ckpt, np.zeros((3, 64, 64), dtype=np.float32), center_mask(64, 64), "red circle")

    def test_infer_writes_file(self, tmp_path, tiny_cfg, tiny_dataset):
        """
        What it does: Runs file-to-file inference.
        Purpose: Ensure the output image exists with the input's size.
        """
        ckpt_path = save_checkpoint(tmp_path / "model.ckpt", state_to_checkpoint(init_state(tiny_cfg)))
        write_image(tmp_path / "in.png", tiny_dataset[1].image)
        out = infer(ckpt_path, tmp_path / "in.png", center_mask(32, 32), "a shape", tmp_path / "out" / "restored.png")
        assert read_image(out).shape == (3, 32, 32)


class TestAblation:
    """Tests for ablation naming and validation."""

    @pytest.mark.parametrize(
        "drop, expected",
        [([], "full"), (["wpa"], "w/o wpa"), (["cmad", "isd"], "w/o cmad+isd")],
    )
    def test_ablation_name(self, drop, expected):
        """
        What it does: Names ablation runs.
        Purpose: Ensure the row labels of the ablation table.
        """
        assert ablation_name(drop) == expected

    def test_unknown_component(self, tmp_path, tiny_cfg):
        """
        What it does: Ablates a component that does not exist.
        Purpose: Ensure ConfigError before any training starts.
        """
        with pytest.raises(ConfigError, match="unknown ablation component"):
            ablate(tiny_cfg, ["perceptual"], tmp_path)
        assert not (tmp_path / "loss.csv").exists()

    def test_no_adversarial_terms(self, tiny_cfg_factory, tiny_batch):
        """
        What it does: Trains one step with both adversarial terms dropped.
        Purpose: Ensure ℓ_D is exactly zero while the hinge values are still logged.
        """
        record = train_step(tiny_batch, init_state(tiny_cfg_factory(drop="adv")))
        assert record.total_d == 0.0
        assert record.g_adv_d > 0.0
