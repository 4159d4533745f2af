# -*- coding: utf-8 -*-

"""
Unit tests for the command-line interface: argument helpers, commands and exit codes.
"""

import numpy as np
import pytest

from cma_inpaint.cli import (
    build_parser,
    main,
    mask_from_spec,
    parse_float_list,
    parse_name_list,
    read_boxes_file,
)
from cma_inpaint.config import METRIC_CSV_HEADER
from cma_inpaint.exceptions import ConfigError, DataError
from cma_inpaint.imageio import read_image, write_image
from cma_inpaint.synth import MANIFEST_NAME


def run(*argv: str) -> int:
    return main(list(argv), configure_logging=False)


class TestArgumentHelpers:
    """Tests for list parsing, boxes files and mask specs."""

    def test_parse_name_list(self):
        """
        What it does: Splits a comma list with spaces and empty items.
        Purpose: Ensure trimmed, non-empty names.
        """
        assert parse_name_list(" cmad, isd,,wpa ") == ["cmad", "isd", "wpa"]
        assert parse_name_list("") == []

    def test_parse_float_list(self):
        """
        What it does: Parses λ lists.
        Purpose: Ensure numbers are parsed and bad or empty lists raise ConfigError.
        """
        assert parse_float_list("0,1,2.5,4") == [0.0, 1.0, 2.5, 4.0]
        with pytest.raises(ConfigError, match="numbers"):
            parse_float_list("1,two")
        with pytest.raises(ConfigError, match="empty"):
            parse_float_list(" , ")

    def test_read_boxes_file(self, tmp_path):
        """
        What it does: Reads boxes separated by commas and whitespace with comments.
        Purpose: Ensure every box is parsed in file order.
        """
        path = tmp_path / "boxes.txt"
        path.write_text("# hole list\n1,2,10,12\n\n4 4 8 8  # second\n", encoding="utf-8")
        assert read_boxes_file(path) == [(1, 2, 10, 12), (4, 4, 8, 8)]

    @pytest.mark.parametrize(
        "content, message",
        [("1,2,3\n", "boxes.txt:1: expected 4 values"), ("0,0,4,4\n1,a,2,3\n", "boxes.txt:2"), ("# none\n", "no boxes")],
    )
    def test_malformed_boxes(self, tmp_path, content, message):
        """
        What it does: Reads boxes files with a short line, a non-integer and no boxes.
        Purpose: Ensure DataError naming the file and line.
        """
        path = tmp_path / "boxes.txt"
        path.write_text(content, encoding="utf-8")
        with pytest.raises(DataError, match=message):
            read_boxes_file(path)

    def test_missing_boxes_file(self, tmp_path):
        """
        What it does: Reads a boxes file that does not exist.
        Purpose: Ensure DataError.
        """
        with pytest.raises(DataError, match="cannot read"):
            read_boxes_file(tmp_path / "absent.txt")

    def test_mask_from_spec(self, tmp_path):
        """
        What it does: Builds center and boxes masks from --mask values.
        Purpose: Ensure both forms and the rejection of unknown specs.
        """
        center = mask_from_spec("center", 32, 32)
        assert center.grid.sum() == 23 * 23
        path = tmp_path / "b.txt"
        path.write_text("0,0,4,2\n", encoding="utf-8")
        boxes = mask_from_spec(f"boxes:{path}", 8, 8)
        assert boxes.grid.sum() == 8
        for bad in ("ring", "boxes:"):
            with pytest.raises(ConfigError, match="--mask"):
                mask_from_spec(bad, 8, 8)


class TestParser:
    """Tests for the argparse surface."""

    def test_subcommand_required(self):
        """
        What it does: Parses an empty command line.
        Purpose: Ensure argparse exits with usage code 2.
        """
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args([])
        assert info.value.code == 2

    def test_train_defaults(self):
        """
        What it does: Parses a minimal train command.
        Purpose: Ensure resume is optional and the handler is set.
        """
        args = build_parser().parse_args(["train", "--config", "run.cfg", "--out", "runs/a"])
        assert args.resume is None
        assert args.handler.__name__ == "cmd_train"


class TestCommands:
    """Tests for command execution and exit codes."""

    def test_synth_with_masks(self, tmp_path):
        """
        What it does: Writes three tiny samples with masks.
        Purpose: Ensure images, manifest and masks are written and exit code 0.
        """
        out = tmp_path / "data"
        assert run("synth", "--out", str(out), "--n", "3", "--seed", "5", "--preset", "tiny", "--masks") == 0
        assert sorted(p.name for p in out.glob("*.ppm")) == ["00000.ppm", "00001.ppm", "00002.ppm"]
        assert len((out / MANIFEST_NAME).read_text(encoding="utf-8").splitlines()) == 3
        assert len(list((out / "masks").glob("*.png"))) == 3
        assert read_image(out / "00000.ppm").shape == (3, 32, 32)

    def test_train_then_inpaint(self, tmp_path):
        """
        What it does: Trains two tiny steps from a config file, then inpaints with the checkpoint.
        Purpose: Ensure the train and inpaint commands chain through the final checkpoint.
        """
        cfg = tmp_path / "run.cfg"
        cfg.write_text("preset = tiny\nsteps = 2\n# inline comment\nloss.lambda = 1\n", encoding="utf-8")
        assert run("train", "--config", str(cfg), "--out", str(tmp_path / "run"), "--workers", "0") == 0
        ckpt = tmp_path / "run" / "final.ckpt"
        assert ckpt.exists()

        image = np.random.default_rng(0).uniform(size=(3, 32, 32)).astype(np.float32)
        write_image(tmp_path / "in.png", image)
        boxes = tmp_path / "boxes.txt"
        boxes.write_text("8,8,24,24\n", encoding="utf-8")
        out = tmp_path / "restored.png"
        code = run(
            "inpaint", "--ckpt", str(ckpt), "--image", str(tmp_path / "in.png"),
            "--mask", f"boxes:{boxes}", "--text", "a red circle", "--out", str(out),
        )
        assert code == 0
        restored = read_image(out)
        original = read_image(tmp_path / "in.png")
        np.testing.assert_array_equal(restored[:, :8, :], original[:, :8, :])

    def test_eval_writes_report(self, tmp_path):
        """
        What it does: Evaluates two restored images against ground truth.
        Purpose: Ensure the metric CSV with the method label is written.
        """
        rng = np.random.default_rng(3)
        for name in ("a.png", "b.png"):
            image = rng.uniform(size=(3, 16, 16))
            write_image(tmp_path / "gt" / name, image)
            write_image(tmp_path / "restored" / name, np.clip(image + 0.05, 0, 1))
        report = tmp_path / "report.csv"
        code = run(
            "eval", "--restored", str(tmp_path / "restored"), "--gt", str(tmp_path / "gt"),
            "--report", str(report), "--method", "cma", "--workers", "0",
        )
        assert code == 0
        lines = report.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(METRIC_CSV_HEADER)
        assert lines[1].startswith("cma,")

    def test_missing_config_is_exit_2(self, tmp_path):
        """
        What it does: Trains with a config file that does not exist.
        Purpose: Ensure the configuration exit code.
        """
        assert run("train", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path / "o")) == 2

    def test_invalid_config_value_is_exit_2(self, tmp_path):
        """
        What it does: Trains with a negative learning rate.
        Purpose: Ensure validation errors map to exit code 2.
        """
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("preset = tiny\nlr = -1\n", encoding="utf-8")
        assert run("train", "--config", str(cfg), "--out", str(tmp_path / "o")) == 2

    def test_unknown_ablation_component_is_exit_2(self, tmp_path):
        """
        What it does: Ablates a component that does not exist.
        Purpose: Ensure exit code 2 before any training.
        """
        assert run("ablate", "--drop", "perceptual", "--preset", "tiny", "--out", str(tmp_path / "abl")) == 2

    def test_ablate_without_out_uses_default_directory(self, tmp_path, monkeypatch):
        """
        What it does: Runs `cma ablate --drop cmad,isd --config FILE` with no --out on a tiny config.
        Purpose: Ensure the run lands in runs/ablate with its metric CSV and exit code 0.
        """
        monkeypatch.chdir(tmp_path)
        cfg = tmp_path / "tiny.cfg"
        cfg.write_text("preset = tiny\nsteps = 2\n", encoding="utf-8")
        assert run("ablate", "--drop", "cmad,isd", "--config", str(cfg)) == 0

        report = tmp_path / "runs" / "ablate" / "ablation.csv"
        lines = report.read_text(encoding="utf-8").splitlines()
        print(f"Ablation report: {lines}")
        assert lines[0] == ",".join(METRIC_CSV_HEADER)
        assert len(lines) == 2 and lines[1].startswith("w/o cmad+isd,")
        assert (tmp_path / "runs" / "ablate" / "wo-cmad+isd" / "final.ckpt").exists()

    def test_bad_lambdas_is_exit_2(self, tmp_path):
        """
        What it does: Sweeps over a non-numeric λ list.
        Purpose: Ensure exit code 2.
        """
        assert run("sweep", "--lambdas", "1,x", "--preset", "tiny", "--out", str(tmp_path / "sw")) == 2

    def test_missing_checkpoint_is_exit_1(self, tmp_path):
        """
        What it does: Inpaints with a checkpoint that does not exist.
        Purpose: Ensure the generic failure exit code.
        """
        code = run(
            "inpaint", "--ckpt", str(tmp_path / "none.ckpt"), "--image", str(tmp_path / "x.png"),
            "--mask", "center", "--text", "red", "--out", str(tmp_path / "y.png"),
        )
        assert code == 1

    def test_gradcheck_ops_only(self, capsys):
        """
        What it does: Runs the primitive-op gradient check.
        Purpose: Ensure every op passes and is reported with exit code 0.
        """
        assert run("gradcheck", "--ops-only") == 0
        output = capsys.readouterr().out
        assert "FAIL" not in output
        assert "matmul" in output
