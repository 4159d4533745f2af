# -*- coding: utf-8 -*-

"""
Unit tests for DebugLogger.
Checks buffering and writing of per-step debug captures in every mode.
"""

import json
from unittest.mock import patch

from loguru import logger

from cma_inpaint.debug_logger import DebugLogger


def _configured(mode, tmp_path):
    instance = DebugLogger()
    instance.configure(mode, str(tmp_path / "debug_logs"))
    return instance


class TestSingleton:
    """Tests for the singleton behaviour."""

    def test_same_instance(self, isolated_debug_logger):
        """
        What it does: Constructs DebugLogger twice.
        Purpose: Ensure the global instance is shared.
        """
        assert DebugLogger() is DebugLogger() is isolated_debug_logger

    def test_unknown_mode_is_off(self, tmp_path):
        """
        What it does: Configures an unknown mode.
        Purpose: Ensure capture falls back to off.
        """
        assert _configured("verbose", tmp_path).mode == "off"


class TestModeOff:
    """Tests for DEBUG_MODE=off."""

    def test_nothing_is_written(self, tmp_path):
        """
        What it does: Runs a whole failing step in off mode.
        Purpose: Ensure no directory is created.
        """
        debug = _configured("off", tmp_path)
        debug.prepare_new_step(1)
        debug.log_batch([1, 2], ["a", "b"])
        debug.log_record({"cmad": 1.0})
        debug.flush_on_error("wpa", "nan")
        assert not (tmp_path / "debug_logs").exists()


class TestModeErrors:
    """Tests for DEBUG_MODE=errors."""

    def test_successful_step_leaves_nothing(self, tmp_path):
        """
        What it does: Buffers a step and discards it.
        Purpose: Ensure successful steps are never written.
        """
        debug = _configured("errors", tmp_path)
        debug.prepare_new_step(3)
        debug.log_batch([7], ["red circle"])
        debug.discard_buffers()
        assert not (tmp_path / "debug_logs").exists()

    def test_failure_flushes_step(self, tmp_path):
        """
        What it does: Buffers a step, logs a message and flushes on a numeric failure.
        Purpose: Ensure batch, record, error info and application logs are written.
        """
        debug = _configured("errors", tmp_path)
        debug.prepare_new_step(5)
        debug.log_batch([11, 12], ["a red circle", "a blue square"])
        debug.log_record({"cmad": 0.5})
        logger.warning("[Trainer] something diverged")
        debug.flush_on_error("isd", "loss component 'isd' is not finite")

        out = tmp_path / "debug_logs"
        print(f"Files: {sorted(p.name for p in out.iterdir())}")
        batch = json.loads((out / "batch.json").read_text(encoding="utf-8"))
        assert batch == {"step": 5, "seeds": [11, 12], "captions": ["a red circle", "a blue square"]}
        assert json.loads((out / "loss_record.json").read_text(encoding="utf-8"))["cmad"] == 0.5
        info = json.loads((out / "error_info.json").read_text(encoding="utf-8"))
        assert info["component"] == "isd" and info["step"] == 5
        assert "something diverged" in (out / "app_logs.txt").read_text(encoding="utf-8")

    def test_capture_sink_removed_after_step(self, tmp_path):
        """
        What it does: Logs after the step buffers were discarded.
        Purpose: Ensure later messages do not end up in the step capture.
        """
        debug = _configured("errors", tmp_path)
        debug.prepare_new_step(1)
        debug.discard_buffers()
        logger.info("after the step")
        assert debug._app_logs_buffer.getvalue() == ""


class TestModeAll:
    """Tests for DEBUG_MODE=all."""

    def test_new_step_clears_directory(self, tmp_path):
        """
        What it does: Prepares a step with an old file in the debug directory.
        Purpose: Ensure the previous step's capture is removed.
        """
        out = tmp_path / "debug_logs"
        out.mkdir()
        (out / "old.txt").write_text("old", encoding="utf-8")
        debug = _configured("all", tmp_path)
        debug.prepare_new_step(2)
        assert out.exists() and not (out / "old.txt").exists()
        debug.discard_buffers()

    def test_writes_immediately(self, tmp_path):
        """
        What it does: Logs a batch and a record in all mode.
        Purpose: Ensure both files exist before the step ends.
        """
        debug = _configured("all", tmp_path)
        debug.prepare_new_step(4)
        debug.log_batch([1], ["x"])
        debug.log_record({"l1": 0.25})
        out = tmp_path / "debug_logs"
        assert (out / "batch.json").exists()
        assert json.loads((out / "loss_record.json").read_text(encoding="utf-8")) == {"step": 4, "l1": 0.25}
        debug.discard_buffers()

    def test_directory_error_is_logged(self, tmp_path):
        """
        What it does: Makes clearing the debug directory fail.
        Purpose: Ensure the error is logged instead of aborting the step.
        """
        (tmp_path / "debug_logs").mkdir()
        debug = _configured("all", tmp_path)
        messages = []
        handler = logger.add(messages.append, level="ERROR")
        try:
            with patch("cma_inpaint.debug_logger.shutil.rmtree", side_effect=OSError("busy")):
                debug.prepare_new_step(1)
        finally:
            logger.remove(handler)
            debug.discard_buffers()
        assert any("Error preparing directory" in str(m) for m in messages)
