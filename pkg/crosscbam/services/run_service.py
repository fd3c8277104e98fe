"""Background training runs and the thread-safe store that tracks them."""
from __future__ import annotations

import logging
import threading
from typing import Any, Dict, List, Mapping, Optional

from flask import Flask

from crosscbam.config import AppSettings, load_run_config
from crosscbam.errors import CrossCbamError
from crosscbam.models.training import RunStatus, TrainingRun
from crosscbam.services.trainer import Trainer

EXTENSION_KEY = "crosscbam.runs"


class TrainingRunStore:
    """Thread-safe store for training runs and their stop flags."""

    def __init__(self):
        self._runs: Dict[str, TrainingRun] = {}
        self._stops: Dict[str, threading.Event] = {}
        self._lock = threading.Lock()

    def add(self, run: TrainingRun) -> threading.Event:
        with self._lock:
            self._runs[run.run_id] = run
            stop = threading.Event()
            self._stops[run.run_id] = stop
            return stop

    def get(self, run_id: str) -> Optional[TrainingRun]:
        with self._lock:
            return self._runs.get(run_id)

    def snapshot(self, run_id: str) -> Optional[Dict[str, Any]]:
        with self._lock:
            run = self._runs.get(run_id)
            return run.to_dict() if run else None

    def stop(self, run_id: str) -> bool:
        with self._lock:
            stop = self._stops.get(run_id)
            if stop is None:
                return False
            stop.set()
            return True

    def list_runs(self) -> List[Dict[str, Any]]:
        with self._lock:
            return [
                {
                    "run_id": run.run_id,
                    "status": run.status.value,
                    "created_at": run.created_at,
                    "progress": run.progress,
                    "best_miou": run.best_miou,
                }
                for run in self._runs.values()
            ]


class RunService:
    """Starts training runs on daemon threads; one model instance per run."""

    def __init__(self, settings: AppSettings, logger: Optional[logging.Logger] = None):
        self.settings = settings
        self.logger = logger or logging.getLogger(__name__)
        self.store = TrainingRunStore()

    @classmethod
    def from_app(cls, app: Flask) -> "RunService":
        service = app.extensions.get(EXTENSION_KEY)
        if service is None:
            service = cls(app.config["SETTINGS"], app.logger)
            app.extensions[EXTENSION_KEY] = service
        return service

    def start_run(self, overrides: Mapping[str, Any], wait: bool = False) -> Dict[str, Any]:
        """Validate the run config synchronously, then train in the background."""
        values = {"output_dir": self.settings.output_dir, **overrides}
        cfg = load_run_config(values.pop("config", None), overrides=values)
        run = TrainingRun(config=cfg.to_dict(), max_iter=cfg.optim.max_iter)
        stop = self.store.add(run)
        trainer = Trainer(cfg, run=run, logger=self.logger, stop_event=stop, progress=False)

        def run_training():
            try:
                trainer.train()
                self.logger.info(f"Training run {run.run_id} finished with status {run.status.value}")
            except CrossCbamError as e:
                self.logger.error(f"Training run {run.run_id} failed: {e}")
            except Exception as e:
                run.fail(f"unexpected error: {e}")
                self.logger.exception(f"Training run {run.run_id} crashed")

        thread = threading.Thread(target=run_training, daemon=True, name=f"train-{run.run_id[:8]}")
        thread.start()
        if wait:
            thread.join()
        self.logger.info(f"Started training run {run.run_id}")
        return run.to_dict()

    def get_run(self, run_id: str) -> Optional[Dict[str, Any]]:
        return self.store.snapshot(run_id)

    def stop_run(self, run_id: str) -> Dict[str, Any]:
        run = self.store.get(run_id)
        if run is None:
            return {"error": "run not found"}
        if run.status not in (RunStatus.PENDING, RunStatus.RUNNING):
            return {"error": f"run is already {run.status.value}"}
        self.store.stop(run_id)
        return {"run_id": run_id, "status": "stopping"}

    def list_runs(self) -> List[Dict[str, Any]]:
        return self.store.list_runs()


__all__ = ["RunService", "TrainingRunStore"]
