"""HTTP service for the interactive human-oracle labeling loop.

Endpoints (JSON in/out):

* ``POST /runs``                 create a run from a config document
* ``GET  /runs/{id}/pending``    the current query batch
* ``POST /runs/{id}/labels``     submit labels for the pending batch
* ``GET  /runs/{id}/status``     run state summary
* ``GET  /runs/{id}/metrics``    cycle reports so far
* ``GET  /runs/{id}/history``    latest epoch-prediction history export

Each run executes the same cycle loop as the batch engine in a background
thread; the thread blocks while a batch is pending. All state needed to
resume (config, acquired labels, the pending batch, a model checkpoint,
cycle reports) is persisted under the data directory before the engine
blocks, so a restarted service picks up every unfinished run at the exact
batch it was waiting on. Exactly one batch is pending per run at a time.
"""

from __future__ import annotations

import json
import math
import os
import threading
import uuid
from contextlib import asynccontextmanager
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles

from .acquisition import SelectionResult
from .cli import resolve_dataset
from .data import Dataset, OracleToken
from .dynamics import dispersion_scores, load_history_csv
from .engine import (
    ALConfig,
    CycleReport,
    ResumeState,
    RunRecorder,
    budget_count,
    derive_seed,
    init_pool,
    read_reports_jsonl,
    run_seed,
)
from .exceptions import ConfigurationError, CycleAbortedError
from .learner import load_model, save_model

DEFAULT_DATA_DIR = "./al_lab_data"


class LabelValidationError(ValueError):
    """Submitted labels do not match the pending batch."""


class _ServiceRecorder(RunRecorder):
    """Persists per-cycle artifacts before the engine blocks."""

    def __init__(self, handle: "RunHandle"):
        self.handle = handle

    def on_cycle_trained(self, cycle, model, history):
        save_model(model, self.handle.run_dir / f"model_cycle{cycle}.json")
        if history is not None:
            history.write_csv(self.handle.run_dir / f"history_cycle{cycle}.csv")

    def on_pending(self, cycle, model, history, selection, items):
        self.handle.publish_pending(cycle, selection, items)

    def on_report(self, report):
        self.handle.append_report(report)


class _InteractiveOracle:
    """Blocks the engine thread until the service receives labels."""

    def __init__(self, handle: "RunHandle", timeout: float | None):
        self.handle = handle
        self.timeout = timeout

    def request_labels(self, cycle, items):
        labels = self.handle.wait_for_labels(cycle, self.timeout)
        if labels is None:
            raise CycleAbortedError(
                f"cycle {cycle}: no labels received; run state persisted for resume"
            )
        return labels


class RunHandle:
    """One interactive run: engine thread, in-memory state, and its
    on-disk layout under ``run_dir``."""

    def __init__(self, run_dir: Path, config: ALConfig, dataset_spec: dict,
                 dataset: Dataset, oracle_timeout: float | None):
        self.run_dir = run_dir
        self.run_id = run_dir.name
        self.config = config
        self.dataset_spec = dataset_spec
        self.dataset = dataset
        # interactive mode is single-run: one pool, one pending batch
        self.seed = int(config.seeds[0])
        self.oracle_timeout = oracle_timeout

        self._lock = threading.Lock()
        self._labels_ready = threading.Condition(self._lock)
        self._shutdown = threading.Event()
        self.status = "created"
        self.error: str | None = None
        self.cycle = 0
        self.pending: dict | None = None
        self.submitted: dict[int, int] | None = None
        self.completed_batches: dict[int, dict[int, int]] = {}
        self.reports: list[CycleReport] = []
        self._thread: threading.Thread | None = None

    # ------------------------------------------------------------------
    # paths

    @property
    def _labels_path(self) -> Path:
        return self.run_dir / "labels.json"

    @property
    def _pending_path(self) -> Path:
        return self.run_dir / "pending.json"

    @property
    def _reports_path(self) -> Path:
        return self.run_dir / "reports.jsonl"

    @property
    def _state_path(self) -> Path:
        return self.run_dir / "state.json"

    # ------------------------------------------------------------------
    # engine thread

    def start(self) -> None:
        self._thread = threading.Thread(target=self._engine_main, daemon=True,
                                        name=f"al-lab-run-{self.run_id}")
        self._thread.start()

    def _engine_main(self) -> None:
        try:
            resume = self._load_resume_state()
            with self._lock:
                self.status = "training"
                self._write_state_locked()
            run_seed(
                self.dataset,
                self.config,
                self.seed,
                oracle=_InteractiveOracle(self, self.oracle_timeout),
                recorder=_ServiceRecorder(self),
                resume=resume,
            )
            with self._lock:
                self.status = "finished"
                self._write_state_locked()
        except CycleAbortedError as exc:
            with self._lock:
                self.status = "aborted"
                self.error = str(exc)
                self._write_state_locked()
        except Exception as exc:  # noqa: BLE001 - surface via status endpoint
            with self._lock:
                self.status = "failed"
                self.error = f"{type(exc).__name__}: {exc}"
                self._write_state_locked()

    def shutdown(self, join_timeout: float = 5.0) -> None:
        self._shutdown.set()
        with self._labels_ready:
            self._labels_ready.notify_all()
        if self._thread is not None:
            self._thread.join(timeout=join_timeout)

    # ------------------------------------------------------------------
    # persistence

    def _labeled_count_locked(self) -> int:
        initial = math.floor(
            self.config.initial_fraction * len(self.dataset.train_indices)
        )
        return initial + sum(len(batch) for batch in self.completed_batches.values())

    def _write_state_locked(self) -> None:
        doc = {
            "run_id": self.run_id,
            "status": self.status,
            "error": self.error,
            "cycle": self.cycle,
            "labeled_count": self._labeled_count_locked(),
        }
        self._state_path.write_text(json.dumps(doc, indent=2), encoding="utf-8")

    def _write_labels_locked(self) -> None:
        doc = {str(c): {str(k): v for k, v in batch.items()}
               for c, batch in self.completed_batches.items()}
        self._labels_path.write_text(json.dumps(doc, indent=2), encoding="utf-8")

    def _load_resume_state(self) -> ResumeState | None:
        """Rebuild pool/labels/pending from disk for an interrupted run."""
        if self._labels_path.exists():
            raw = json.loads(self._labels_path.read_text(encoding="utf-8"))
            completed = {int(c): {int(k): int(v) for k, v in batch.items()}
                         for c, batch in raw.items()}
        else:
            completed = {}
        pending_doc = None
        if self._pending_path.exists():
            pending_doc = json.loads(self._pending_path.read_text(encoding="utf-8"))
            if pending_doc.get("status") != "pending":
                pending_doc = None
        if not completed and pending_doc is None:
            return None  # fresh run

        token = OracleToken()
        n_pool = len(self.dataset.train_indices)
        pool = init_pool(n_pool, self.config.initial_fraction, self.seed)
        known = np.full(self.dataset.n_samples, -1, dtype=np.int64)
        known[pool.labeled] = self.dataset.hidden_labels(pool.labeled, token)
        next_cycle = 0
        while next_cycle in completed:
            batch = completed[next_cycle]
            ids = np.array(sorted(batch), dtype=np.int64)
            for sid, lab in batch.items():
                known[sid] = lab
            pool = pool.move_to_labeled(ids)
            next_cycle += 1

        with self._lock:
            self.completed_batches = completed
            self.cycle = next_cycle
            if self._reports_path.exists():
                self.reports = read_reports_jsonl(self._reports_path)

        state = ResumeState(pool=pool, known_labels=known, next_cycle=next_cycle)
        if pending_doc is not None and int(pending_doc["cycle"]) == next_cycle:
            cycle = next_cycle
            state.pending_model = load_model(self.run_dir / f"model_cycle{cycle}.json")
            state.pending_history = load_history_csv(
                self.run_dir / f"history_cycle{cycle}.csv"
            )
            items = pending_doc["items"]
            chosen = np.array([int(it["sample_id"]) for it in items], dtype=np.int64)
            scores = pending_doc.get("query_scores")
            state.pending_selection = SelectionResult(
                chosen=chosen,
                sample_ids=chosen.copy(),
                scores=None if scores is None else np.asarray(scores, dtype=np.float64),
            )
            state.pending_items = items
            with self._lock:
                self.pending = pending_doc
        return state

    # ------------------------------------------------------------------
    # oracle plumbing (engine thread side)

    def publish_pending(self, cycle: int, selection: SelectionResult,
                        items: list[dict]) -> None:
        doc = {
            "run_id": self.run_id,
            "cycle": int(cycle),
            "items": items,
            "query_scores": None if selection.scores is None else [
                float(dict(zip(map(int, selection.sample_ids),
                               selection.scores))[int(c)])
                for c in selection.chosen
            ],
            "status": "pending",
        }
        with self._lock:
            self.pending = doc
            self.submitted = None
            self.cycle = int(cycle)
            self._pending_path.write_text(json.dumps(doc), encoding="utf-8")

    def wait_for_labels(self, cycle: int, timeout: float | None) -> dict[int, int] | None:
        with self._labels_ready:
            self.status = "waiting_for_labels"
            self._write_state_locked()
            ok = self._labels_ready.wait_for(
                lambda: self.submitted is not None or self._shutdown.is_set(),
                timeout=timeout,
            )
            if not ok or self._shutdown.is_set() or self.submitted is None:
                return None
            labels = self.submitted
            self.submitted = None
            self.completed_batches[cycle] = labels
            self.pending = dict(self.pending or {}, status="complete")
            self.status = "training"
            self._pending_path.write_text(json.dumps(self.pending), encoding="utf-8")
            self._write_labels_locked()
            self._write_state_locked()
            return labels

    def append_report(self, report: CycleReport) -> None:
        with self._lock:
            self.reports.append(report)
            with open(self._reports_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(report.to_dict()) + "\n")

    # ------------------------------------------------------------------
    # request side

    def submit_labels(self, labels: dict) -> dict:
        try:
            reply = {int(k): int(v) for k, v in labels.items()}
        except (TypeError, ValueError) as exc:
            raise LabelValidationError(f"labels must map sample ids to class ids: {exc}")
        with self._labels_ready:
            if self.pending is None:
                raise LabelValidationError("no batch has been issued for this run")
            expected = {int(it["sample_id"]) for it in self.pending["items"]}
            completed_cycle = int(self.pending["cycle"])
            if self.pending.get("status") == "complete":
                if set(reply) == expected and reply == self.completed_batches.get(
                    completed_cycle
                ):
                    return {"status": "duplicate", "cycle": completed_cycle}
                raise LabelValidationError(
                    "batch already completed; new submissions must wait for the next batch"
                )
            if self.status != "waiting_for_labels":
                raise LabelValidationError(
                    f"run is not waiting for labels (status: {self.status})"
                )
            if set(reply) != expected:
                missing = sorted(expected - set(reply))
                extra = sorted(set(reply) - expected)
                raise LabelValidationError(
                    f"submission must cover exactly the pending batch "
                    f"(missing {missing}, unexpected {extra})"
                )
            bad = {s: c for s, c in reply.items()
                   if not 0 <= c < self.dataset.class_count}
            if bad:
                raise LabelValidationError(
                    f"class ids out of range for {self.dataset.class_count} "
                    f"classes: {bad}"
                )
            self.submitted = reply
            self._labels_ready.notify_all()
            return {"status": "accepted", "cycle": completed_cycle}

    def status_doc(self) -> dict:
        with self._lock:
            return {
                "run_id": self.run_id,
                "status": self.status,
                "error": self.error,
                "cycle": self.cycle,
                "cycles": int(self.config.cycles),
                "strategy": self.config.strategy,
                "labeled_count": self._labeled_count_locked(),
                "pool_size": len(self.dataset.train_indices),
                "class_count": self.dataset.class_count,
                "budget_per_cycle": budget_count(
                    len(self.dataset.train_indices),
                    self.config.budget_per_cycle_fraction,
                ),
                "seed": self.seed,
            }

    def pending_doc(self) -> dict:
        with self._lock:
            if self.pending is None:
                return {"run_id": self.run_id, "status": "none", "items": []}
            return dict(self.pending)

    def metrics_doc(self) -> dict:
        with self._lock:
            return {"run_id": self.run_id,
                    "reports": [r.to_dict() for r in self.reports]}

    def history_doc(self) -> dict:
        cycles = sorted(
            int(p.stem.replace("history_cycle", ""))
            for p in self.run_dir.glob("history_cycle*.csv")
        )
        if not cycles:
            return {"run_id": self.run_id, "cycle": None, "csv": "", "dispersion": []}
        cycle = cycles[-1]
        history = load_history_csv(self.run_dir / f"history_cycle{cycle}.csv")
        return {
            "run_id": self.run_id,
            "cycle": cycle,
            "csv": history.to_csv_text(),
            "dispersion": [
                {
                    "sample_id": s.sample_id,
                    "modal_class": s.modal_class,
                    "modal_count": s.modal_count,
                    "dispersion": s.dispersion,
                }
                for s in dispersion_scores(history)
            ],
        }


class RunManager:
    """Owns every run under one data directory; resumes unfinished runs."""

    def __init__(self, data_dir=None, oracle_timeout: float | None = None):
        root = Path(data_dir or os.environ.get("AL_LAB_DATA_DIR", DEFAULT_DATA_DIR))
        self.runs_dir = root / "runs"
        self.runs_dir.mkdir(parents=True, exist_ok=True)
        self.oracle_timeout = oracle_timeout
        self._handles: dict[str, RunHandle] = {}
        self._lock = threading.Lock()
        for run_dir in sorted(self.runs_dir.iterdir()):
            if (run_dir / "config.json").exists():
                self._load_existing(run_dir)

    def _load_existing(self, run_dir: Path) -> None:
        doc = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
        dataset_spec = doc.pop("dataset")
        config = ALConfig.from_dict(doc)
        state = {}
        if (run_dir / "state.json").exists():
            state = json.loads((run_dir / "state.json").read_text(encoding="utf-8"))
        handle = RunHandle(run_dir, config, dataset_spec,
                           resolve_dataset(dataset_spec), self.oracle_timeout)
        self._handles[handle.run_id] = handle
        if state.get("status") == "finished":
            handle.status = "finished"
            handle.reports = read_reports_jsonl(handle._reports_path) \
                if handle._reports_path.exists() else []
            handle.cycle = int(state.get("cycle", 0))
            if handle._labels_path.exists():
                raw = json.loads(handle._labels_path.read_text(encoding="utf-8"))
                handle.completed_batches = {
                    int(c): {int(k): int(v) for k, v in batch.items()}
                    for c, batch in raw.items()
                }
        else:
            handle.start()

    def create_run(self, doc: dict) -> RunHandle:
        if not isinstance(doc, dict):
            raise ConfigurationError("run config must be a JSON object")
        doc = dict(doc)
        dataset_spec = doc.pop("dataset", None)
        if dataset_spec is None:
            raise ConfigurationError("dataset: missing (need 'path' or 'generate')")
        config = ALConfig.from_dict(doc)
        dataset = resolve_dataset(dataset_spec)
        run_id = uuid.uuid4().hex[:12]
        run_dir = self.runs_dir / run_id
        run_dir.mkdir(parents=True)
        echo = {"dataset": dataset_spec, **config.to_dict()}
        (run_dir / "config.json").write_text(json.dumps(echo, indent=2),
                                             encoding="utf-8")
        handle = RunHandle(run_dir, config, dataset_spec, dataset,
                           self.oracle_timeout)
        with self._lock:
            self._handles[run_id] = handle
        handle.start()
        return handle

    def get(self, run_id: str) -> RunHandle:
        with self._lock:
            handle = self._handles.get(run_id)
        if handle is None:
            raise KeyError(run_id)
        return handle

    def close(self) -> None:
        with self._lock:
            handles = list(self._handles.values())
        for handle in handles:
            handle.shutdown()


def create_app(data_dir=None, oracle_timeout: float | None = None) -> FastAPI:
    """Build the FastAPI application around a :class:`RunManager`."""
    manager = RunManager(data_dir=data_dir, oracle_timeout=oracle_timeout)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        manager.close()

    app = FastAPI(title="al-lab labeling service", lifespan=lifespan)
    app.state.manager = manager
    # local annotation tool: let the statically-served UI reach it from any origin
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def _handle(run_id: str) -> RunHandle:
        try:
            return manager.get(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")

    @app.post("/runs", status_code=201)
    def create_run(doc: dict = Body(...)):
        try:
            handle = manager.create_run(doc)
        except ConfigurationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"run_id": handle.run_id}

    @app.get("/runs/{run_id}/pending")
    def get_pending(run_id: str):
        return _handle(run_id).pending_doc()

    @app.post("/runs/{run_id}/labels")
    def submit_labels(run_id: str, doc: dict = Body(...)):
        labels = doc.get("labels", doc)
        if not isinstance(labels, dict):
            raise HTTPException(status_code=422,
                                detail="body must be {'labels': {sample_id: class_id}}")
        try:
            return _handle(run_id).submit_labels(labels)
        except LabelValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/runs/{run_id}/status")
    def get_status(run_id: str):
        return _handle(run_id).status_doc()

    @app.get("/runs/{run_id}/metrics")
    def get_metrics(run_id: str):
        return _handle(run_id).metrics_doc()

    @app.get("/runs/{run_id}/history")
    def get_history(run_id: str):
        return _handle(run_id).history_doc()

    # optional: serve the built browser UI at /ui
    ui_dir = os.environ.get("AL_LAB_UI_DIR")
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
