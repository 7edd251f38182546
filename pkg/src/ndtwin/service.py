"""HTTP face of the workbench: campaign, dataset, training, evaluation, and
what-if endpoints plus static hosting of the operator console.

Long-running work (campaigns, training) runs as polled background jobs with
a single writer per store; what-if reports are computed synchronously.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import pipeline
from .models import (
    DuplicateModelIdError,
    ModelNotFoundError,
    ModelRegistry,
)
from .pipeline import CampaignSpec, canonical_json, parse_trim
from .telemetry import TelemetryStore
from .whatif import (
    InsufficientPairsError,
    InvalidTransitionError,
    PairingConfig,
    WhatIfError,
)

import os


@dataclass(frozen=True)
class ServiceConfig:
    store_path: str = "ndtwin-data/store"
    registry_path: str = "ndtwin-data/registry"
    datasets_path: str = "ndtwin-data/datasets"
    reports_path: str = "ndtwin-data/reports"
    console_path: str = "frontend/dist"
    host: str = "127.0.0.1"
    port: int = 8640

    @classmethod
    def load(cls, path: Optional[str] = None) -> "ServiceConfig":
        values = {}
        if path:
            text = Path(path).read_text()
            if str(path).endswith(".toml"):
                import tomllib

                values = tomllib.loads(text)
            else:
                values = json.loads(text)
        env_map = {
            "NDTWIN_STORE": "store_path",
            "NDTWIN_REGISTRY": "registry_path",
            "NDTWIN_DATASETS": "datasets_path",
            "NDTWIN_REPORTS": "reports_path",
            "NDTWIN_CONSOLE": "console_path",
            "NDTWIN_HOST": "host",
            "NDTWIN_PORT": "port",
        }
        for env, key in env_map.items():
            if env in os.environ:
                values[key] = os.environ[env]
        if "port" in values:
            values["port"] = int(values["port"])
        return cls(**values)

    def with_overrides(self, **kwargs) -> "ServiceConfig":
        return replace(self, **kwargs)


class CampaignRequest(BaseModel):
    user_levels: list[int] = Field(default=[200, 400, 600])
    pod_levels: list[int] = Field(default=[1, 2, 3, 4, 5, 6])
    ticks_per_regime: int = 2000
    tick_ms: float = 20.0
    seed: int = 0
    anomaly_rate: float = 0.005


class DatasetRequest(BaseModel):
    name: str
    train_users: list[int] = Field(default=[200, 400])
    test_users: list[int] = Field(default=[600])
    pods: list[int] = Field(default=[1, 2, 3, 4, 5, 6])
    test_pods: Optional[list[int]] = None
    trim: str = "percentile:1,99"


class TrainRequest(BaseModel):
    kind: str
    model_id: str
    dataset: str
    config: dict = Field(default_factory=dict)


class EvaluateRequest(BaseModel):
    dataset: str


class WhatIfRequest(BaseModel):
    model_id: str
    from_users: int
    from_pods: int
    action: str
    caliper: float = 0.5
    min_pairs: int = 30
    epsilon_tie_ms: float = 0.5
    trim: str = "percentile:1,99"


class JobState:
    def __init__(self, kind: str):
        self.job_id = uuid.uuid4().hex[:12]
        self.kind = kind
        self.status = "pending"
        self.result = None
        self.error = None

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "status": self.status,
            "result": self.result,
            "error": self.error,
        }


def create_app(cfg: ServiceConfig = ServiceConfig()) -> FastAPI:
    app = FastAPI(title="ndtwin", version="0.1.0")
    store = TelemetryStore.open(cfg.store_path)
    registry = ModelRegistry(cfg.registry_path)
    reports_dir = Path(cfg.reports_path)
    reports_dir.mkdir(parents=True, exist_ok=True)
    datasets_dir = Path(cfg.datasets_path)
    datasets_dir.mkdir(parents=True, exist_ok=True)

    jobs: dict = {}
    store_lock = threading.Lock()  # single writer per store
    registry_lock = threading.Lock()

    def launch(job: JobState, fn):
        def runner():
            job.status = "running"
            try:
                job.result = fn()
                job.status = "done"
            except Exception as exc:  # surfaced through the job descriptor
                job.error = f"{type(exc).__name__}: {exc}"
                job.status = "failed"

        jobs[job.job_id] = job
        thread = threading.Thread(target=runner, daemon=True)
        thread.start()
        return job

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "store": str(store.root), "records": store.total_records}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        if job_id not in jobs:
            raise HTTPException(404, "unknown job")
        return jobs[job_id].to_dict()

    @app.post("/campaigns", status_code=202)
    def post_campaign(req: CampaignRequest):
        if not req.user_levels or not req.pod_levels:
            raise HTTPException(400, "user_levels and pod_levels must be nonempty")
        spec = CampaignSpec(
            user_levels=tuple(req.user_levels),
            pod_levels=tuple(req.pod_levels),
            ticks_per_regime=req.ticks_per_regime,
            tick_ms=req.tick_ms,
            seed=req.seed,
            anomaly_rate=req.anomaly_rate,
        )

        def work():
            with store_lock:
                return pipeline.run_campaign(spec, store)

        return launch(JobState("simulate"), work).to_dict()

    @app.post("/datasets")
    def post_dataset(req: DatasetRequest):
        try:
            result = pipeline.build_dataset(
                store,
                req.train_users,
                req.test_users,
                req.pods,
                parse_trim(req.trim),
                datasets_dir / req.name,
                test_pods=req.test_pods,
            )
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        return result

    @app.post("/models/train", status_code=202)
    def post_train(req: TrainRequest):
        if req.kind not in ("gbt", "mlp"):
            raise HTTPException(400, f"unknown model kind {req.kind!r}")
        if any(e.model_id == req.model_id for e in registry.list()):
            raise HTTPException(409, f"model_id {req.model_id!r} already registered")

        def work():
            with registry_lock:
                return pipeline.train_model(
                    req.kind, datasets_dir / req.dataset, registry, req.model_id, req.config
                )

        return launch(JobState("train"), work).to_dict()

    @app.get("/models")
    def get_models():
        return [e.metadata for e in registry.list()]

    @app.post("/models/{model_id}/evaluate")
    def post_evaluate(model_id: str, req: EvaluateRequest):
        try:
            rep, _, _ = pipeline.evaluate_model(registry, model_id, datasets_dir / req.dataset)
        except ModelNotFoundError:
            raise HTTPException(404, f"unknown model {model_id!r}")
        body = rep.to_dict()
        (reports_dir / f"eval_{model_id}.json").write_text(canonical_json(body))
        with registry_lock:
            meta_path = Path(cfg.registry_path) / model_id / "metadata.json"
            meta = json.loads(meta_path.read_text())
            meta["eval_report"] = body
            meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
        return body

    @app.post("/whatif")
    def post_whatif(req: WhatIfRequest):
        try:
            rep = pipeline.whatif_report(
                registry,
                req.model_id,
                store,
                req.from_users,
                req.from_pods,
                req.action,
                pairing=PairingConfig(
                    caliper=req.caliper,
                    min_pairs=req.min_pairs,
                    epsilon_tie_ms=req.epsilon_tie_ms,
                ),
                trim=parse_trim(req.trim),
            )
        except ModelNotFoundError:
            raise HTTPException(404, f"unknown model {req.model_id!r}")
        except InsufficientPairsError as exc:
            return JSONResponse(
                status_code=422,
                content={"code": "insufficient-pairs", "achieved": exc.achieved,
                         "required": exc.required},
            )
        except InvalidTransitionError as exc:
            return JSONResponse(
                status_code=422, content={"code": "invalid-transition", "detail": str(exc)}
            )
        except (WhatIfError, ValueError) as exc:
            raise HTTPException(400, str(exc))
        body = rep.to_dict()
        body["report_id"] = rep.report_id()
        (reports_dir / f"whatif_{rep.report_id()}.json").write_text(canonical_json(body))
        return body

    @app.get("/reports")
    def get_reports():
        out = []
        for path in sorted(reports_dir.glob("*.json")):
            body = json.loads(path.read_text())
            body["_file"] = path.stem
            out.append(body)
        return out

    @app.get("/reports/{report_id}")
    def get_report(report_id: str):
        for path in reports_dir.glob("*.json"):
            if path.stem == report_id or path.stem.endswith(report_id):
                return json.loads(path.read_text())
        raise HTTPException(404, "unknown report")

    console = Path(cfg.console_path)
    if console.is_dir():
        app.mount("/", StaticFiles(directory=str(console), html=True), name="console")

    return app
