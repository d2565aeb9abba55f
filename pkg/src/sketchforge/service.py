"""FastAPI job service wrapping the core engine.

Endpoints (JSON bodies):
    POST /api/v1/jobs                         submit fit/infer/stylize/pipeline
    GET  /api/v1/jobs/{id}                    status/progress/outputs
    GET  /api/v1/meshes/{id}                  OBJ text
    GET  /api/v1/previews/{id}                PNG
    GET  /api/v1/render?mesh_id=&azimuth_deg=&elevation_deg=   on-demand PNG
    GET  /api/v1/healthz                      {"version": ...}

Jobs run on a bounded thread pool; status reads never block on running
jobs. Malformed bodies answer 400 with an error object.
"""

from __future__ import annotations

import base64
import binascii
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from typing import Literal

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from . import __version__
from .jobs import JobRunner
from .mesh import import_obj
from .render import RenderConfig, image_to_png, render_color, render_flat_grey
from .store import ArtifactStore

__all__ = ["create_app", "PoseBody", "JobBody"]


class PoseBody(BaseModel):
    azimuth_deg: float = Field(ge=-360.0, le=720.0)
    elevation_deg: float = Field(ge=-90.0, le=90.0)


class JobBody(BaseModel):
    kind: Literal["fit", "infer", "stylize", "pipeline"]
    sketch_png_base64: str | None = None
    mesh_id: str | None = None
    prompt: str = ""
    pose: PoseBody | None = None
    config: dict = Field(default_factory=dict)


class JobCreated(BaseModel):
    job_id: str


def create_app(
    store_root=None,
    workers: int | None = None,
    checkpoint: bytes | None = None,
    embed_url: str | None = None,
) -> FastAPI:
    store_root = store_root or os.environ.get("SKETCHFORGE_STORE", "./store")
    workers = workers or int(
        os.environ.get("SKETCHFORGE_WORKERS", os.cpu_count() or 1)
    )
    embed_url = embed_url or os.environ.get("SKETCHFORGE_EMBED_URL")
    store = ArtifactStore(store_root)
    runner = JobRunner(store, checkpoint=checkpoint, embed_url=embed_url)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.executor = ThreadPoolExecutor(max_workers=workers)
        # resume jobs that were still queued when the last process exited
        for job in list(store.jobs.values()):
            if job.state == "queued":
                app.state.executor.submit(runner.run, job.id)
        yield
        app.state.executor.shutdown(wait=True)

    app = FastAPI(title="sketchforge", version=__version__, lifespan=lifespan)
    app.state.store = store
    app.state.runner = runner

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": "malformed request", "detail": exc.errors()},
        )

    @app.post("/api/v1/jobs", status_code=202, response_model=JobCreated)
    def submit_job(body: JobBody):
        inputs: dict = {"prompt": body.prompt, "config": body.config}
        if body.pose is not None:
            inputs["pose"] = {
                "azimuth_deg": body.pose.azimuth_deg,
                "elevation_deg": body.pose.elevation_deg,
            }
        if body.kind in ("fit", "pipeline", "infer"):
            if not body.sketch_png_base64:
                raise HTTPException(
                    400, detail=f"{body.kind} jobs need sketch_png_base64"
                )
            try:
                sketch = base64.b64decode(body.sketch_png_base64, validate=True)
            except (binascii.Error, ValueError):
                raise HTTPException(400, detail="invalid base64 sketch") from None
            inputs["sketch_id"] = store.put_blob(sketch)
        if body.kind == "stylize":
            if not body.mesh_id:
                raise HTTPException(400, detail="stylize jobs need mesh_id")
            if not store.has_blob(body.mesh_id):
                raise HTTPException(404, detail=f"no mesh {body.mesh_id}")
            inputs["mesh_id"] = body.mesh_id
        job = store.create_job(body.kind, inputs)
        app.state.executor.submit(runner.run, job.id)
        return JobCreated(job_id=job.id)

    @app.get("/api/v1/jobs/{job_id}")
    def job_status(job_id: str):
        try:
            return store.get_job(job_id).to_status()
        except KeyError:
            raise HTTPException(404, detail=f"no job {job_id}") from None

    @app.get("/api/v1/meshes/{mesh_id}")
    def get_mesh(mesh_id: str):
        try:
            data = store.get_blob(mesh_id)
        except KeyError:
            raise HTTPException(404, detail=f"no mesh {mesh_id}") from None
        return Response(content=data, media_type="text/plain")

    @app.get("/api/v1/previews/{preview_id}")
    def get_preview(preview_id: str):
        try:
            data = store.get_blob(preview_id)
        except KeyError:
            raise HTTPException(404, detail=f"no preview {preview_id}") from None
        return Response(content=data, media_type="image/png")

    @app.get("/api/v1/render")
    def render_view(
        mesh_id: str, azimuth_deg: float = 0.0, elevation_deg: float = 0.0,
        size: int = 192,
    ):
        try:
            mesh = import_obj(store.get_blob(mesh_id))
        except KeyError:
            raise HTTPException(404, detail=f"no mesh {mesh_id}") from None
        except ValueError as exc:
            raise HTTPException(422, detail=str(exc)) from None
        size = max(16, min(512, size))
        from .camera import CameraPose

        pose = CameraPose(azimuth_deg, elevation_deg)
        cfg = RenderConfig(size, size)
        img = (
            render_color(mesh, pose, cfg)
            if mesh.colors is not None
            else render_flat_grey(mesh, pose, cfg)
        )
        return Response(content=image_to_png(img), media_type="image/png")

    @app.get("/api/v1/healthz")
    def healthz():
        return {"version": __version__}

    return app
