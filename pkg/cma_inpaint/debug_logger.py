# -*- coding: utf-8 -*-

"""
Debug capture for training steps.

Supports three modes (DEBUG_MODE):
- off: capture disabled
- errors: each step is buffered in memory and written only when a numeric
  failure aborts training
- all: every step is written immediately (the directory is overwritten each step)

Also captures application logs (loguru) for each step and saves them to
app_logs.txt next to the step data.
"""

import io
import json
import shutil
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger

from cma_inpaint import config


class DebugLogger:
    """
    Singleton for managing per-step debug captures.

    Operating modes:
    - off: does nothing
    - errors: buffers data, flushes to files only on a numeric failure
    - all: writes data immediately to files
    """
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(DebugLogger, cls).__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return
        self._initialized = True
        self.configure(config.DEBUG_MODE, config.DEBUG_DIR)

    def configure(self, mode: str, debug_dir: str) -> None:
        """Sets the mode and target directory (used by tests and the CLI)."""
        self.mode = mode if mode in ("off", "errors", "all") else "off"
        self.debug_dir = Path(debug_dir)
        self._step: Optional[int] = None
        self._batch_buffer: Optional[Dict[str, Any]] = None
        self._record_buffer: Optional[Dict[str, Any]] = None
        self._app_logs_buffer: io.StringIO = io.StringIO()
        self._loguru_sink_id: Optional[int] = None

    def _is_enabled(self) -> bool:
        return self.mode in ("errors", "all")

    def _is_immediate_write(self) -> bool:
        return self.mode == "all"

    def _clear_buffers(self):
        self._batch_buffer = None
        self._record_buffer = None
        self._clear_app_logs_buffer()

    def _clear_app_logs_buffer(self):
        """Clears the application logs buffer and removes the sink."""
        if self._loguru_sink_id is not None:
            try:
                logger.remove(self._loguru_sink_id)
            except ValueError:
                # Sink already removed
                pass
            self._loguru_sink_id = None
        self._app_logs_buffer = io.StringIO()

    def _setup_app_logs_capture(self):
        """Adds a temporary loguru sink writing every message of the current step to a buffer."""
        self._clear_app_logs_buffer()
        self._loguru_sink_id = logger.add(
            self._app_logs_buffer,
            format="{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name}:{function}:{line} | {message}",
            level="DEBUG",
            colorize=False,
        )

    def prepare_new_step(self, step: int):
        """
        Prepares the capture for a new training step.

        In "all" mode: clears the debug folder.
        In both modes: clears buffers and starts application log capture.
        """
        if not self._is_enabled():
            return
        self._clear_buffers()
        self._step = step
        self._setup_app_logs_capture()

        if self._is_immediate_write():
            try:
                if self.debug_dir.exists():
                    shutil.rmtree(self.debug_dir)
                self.debug_dir.mkdir(parents=True, exist_ok=True)
                logger.debug(f"[DebugLogger] Directory {self.debug_dir} cleared for step {step}.")
            except Exception as e:
                logger.error(f"[DebugLogger] Error preparing directory: {e}")

    def log_batch(self, seeds: List[int], captions: List[str]):
        """Records which samples formed the batch of the current step."""
        if not self._is_enabled():
            return
        payload = {"step": self._step, "seeds": [int(s) for s in seeds], "captions": list(captions)}
        if self._is_immediate_write():
            self._write_json("batch.json", payload)
        else:
            self._batch_buffer = payload

    def log_record(self, record: Dict[str, Any]):
        """Records the loss components (possibly partial) of the current step."""
        if not self._is_enabled():
            return
        payload = {"step": self._step, **record}
        if self._is_immediate_write():
            self._write_json("loss_record.json", payload)
        else:
            self._record_buffer = payload

    def log_error_info(self, component: Optional[str], error_message: str = ""):
        """Writes error_info.json describing the failure."""
        if not self._is_enabled():
            return
        self._write_json(
            "error_info.json",
            {"step": self._step, "component": component, "error_message": error_message},
        )
        logger.debug(f"[DebugLogger] Error info saved (component={component})")

    def flush_on_error(self, component: Optional[str], error_message: str = ""):
        """
        Flushes the buffered step to files after a numeric failure.

        In "errors" mode: writes buffers, error_info and application logs.
        In "all" mode: only adds error_info and application logs (step data is already written).
        """
        if not self._is_enabled():
            return

        if self._is_immediate_write():
            self.log_error_info(component, error_message)
            self._write_app_logs_to_file()
            self._clear_app_logs_buffer()
            return

        try:
            if self.debug_dir.exists():
                shutil.rmtree(self.debug_dir)
            self.debug_dir.mkdir(parents=True, exist_ok=True)
            if self._batch_buffer:
                self._write_json("batch.json", self._batch_buffer)
            if self._record_buffer:
                self._write_json("loss_record.json", self._record_buffer)
            self.log_error_info(component, error_message)
            self._write_app_logs_to_file()
            logger.info(f"[DebugLogger] Step {self._step} flushed to {self.debug_dir} ({component})")
        except Exception as e:
            logger.error(f"[DebugLogger] Error flushing buffers: {e}")
        finally:
            self._clear_buffers()

    def discard_buffers(self):
        """
        Ends the current step without a failure.

        In "errors" mode the buffers are dropped; in "all" mode the application
        logs of the step are written.
        """
        if self.mode == "errors":
            self._clear_buffers()
        elif self.mode == "all":
            self._write_app_logs_to_file()
            self._clear_app_logs_buffer()

    # ==================== Private file writing methods ====================

    def _write_json(self, name: str, payload: Dict[str, Any]):
        try:
            self.debug_dir.mkdir(parents=True, exist_ok=True)
            with open(self.debug_dir / name, "w", encoding="utf-8") as f:
                json.dump(payload, f, indent=2, ensure_ascii=False)
        except Exception as e:
            logger.error(f"[DebugLogger] Error writing {name}: {e}")

    def _write_app_logs_to_file(self):
        try:
            logs_content = self._app_logs_buffer.getvalue()
            if not logs_content.strip():
                return
            self.debug_dir.mkdir(parents=True, exist_ok=True)
            file_path = self.debug_dir / "app_logs.txt"
            with open(file_path, "w", encoding="utf-8") as f:
                f.write(logs_content)
        except Exception:
            # Not logged through loguru: the capture sink may still be attached
            pass


# Global instance
debug_logger = DebugLogger()
