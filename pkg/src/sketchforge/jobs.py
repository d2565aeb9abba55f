"""Job execution: the bridge between the store/service and the core engine.

Each runner reads content-addressed inputs, executes the corresponding
engine path, and writes mesh/preview/trace blobs. Identical inputs with
identical seeds produce byte-identical blobs, so the store dedupes them.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from .camera import CameraPose
from .configio import fit_config_from_dict, section, style_config_from_dict
from .embedding import remote_provider, toy_provider
from .fitting import FitConfig, fit
from .mesh import Mesh, export_obj, import_obj
from .network import infer, load_checkpoint
from .render import RenderConfig, image_to_png, render_turntable
from .sketch import ingest_sketch
from .store import ArtifactStore
from .stylize import StyleConfig, stylize

__all__ = ["JobRunner"]

_PREVIEW_SIZE = 192
_PREVIEW_VIEWS = 6


class JobRunner:
    def __init__(self, store: ArtifactStore, checkpoint: bytes | None = None,
                 embed_url: str | None = None):
        self.store = store
        self._model = None
        if checkpoint is not None:
            self._model, _, _ = load_checkpoint(checkpoint)
        self.provider = (
            remote_provider(embed_url) if embed_url else toy_provider()
        )

    def run(self, job_id: str):
        job = self.store.get_job(job_id)
        self.store.mark_running(job_id)
        try:
            handler = getattr(self, f"_run_{job.kind}")
            outputs = handler(job)
        except Exception as exc:  # noqa: BLE001 - failures become job state
            self.store.mark_failed(job_id, f"{type(exc).__name__}: {exc}")
            return
        self.store.mark_done(job_id, outputs)

    # --- shared helpers ---------------------------------------------------

    def _progress(self, job_id: str):
        def update(done: int, total: int):
            self.store.mark_progress(job_id, done, total)

        return update

    def _preview(self, mesh: Mesh) -> str:
        strip = render_turntable(
            mesh, RenderConfig(_PREVIEW_SIZE, _PREVIEW_SIZE),
            n_views=_PREVIEW_VIEWS,
        )
        return self.store.put_blob(image_to_png(strip))

    def _store_mesh(self, mesh: Mesh) -> str:
        return self.store.put_blob(export_obj(mesh))

    def _store_trace(self, trace: dict) -> str:
        return self.store.put_blob(
            json.dumps(trace, sort_keys=True).encode("utf-8")
        )

    def _sketch(self, job):
        sketch_id = job.inputs.get("sketch_id")
        if not sketch_id:
            raise ValueError(f"{job.kind} job needs a sketch")
        return ingest_sketch(self.store.get_blob(sketch_id))

    def _pose(self, job) -> CameraPose | None:
        pose = job.inputs.get("pose")
        if not pose:
            return None
        return CameraPose(pose["azimuth_deg"], pose["elevation_deg"])

    def _fit_config(self, job) -> FitConfig:
        cfg = section(job.inputs.get("config", {}), "fit")
        cfg.setdefault("prompt", job.inputs.get("prompt", ""))
        return fit_config_from_dict(cfg)

    def _style_config(self, job) -> StyleConfig:
        cfg = section(job.inputs.get("config", {}), "style")
        cfg.setdefault("prompt", job.inputs.get("prompt") or "grey")
        return style_config_from_dict(cfg)

    # --- kinds --------------------------------------------------------------

    def _run_fit(self, job) -> dict:
        result = fit(
            self._sketch(job), self._pose(job), self._fit_config(job),
            self.provider, progress=self._progress(job.id),
        )
        return {
            "mesh_id": self._store_mesh(result.mesh),
            "preview_ids": [self._preview(result.mesh)],
            "trace_id": self._store_trace(result.trace.to_dict()),
        }

    def _run_stylize(self, job) -> dict:
        mesh_id = job.inputs.get("mesh_id")
        if not mesh_id:
            raise ValueError("stylize job needs a mesh_id")
        mesh = import_obj(self.store.get_blob(mesh_id))
        result = stylize(
            mesh, self._style_config(job), self.provider,
            progress=self._progress(job.id),
        )
        return {
            "mesh_id": self._store_mesh(result.mesh),
            "preview_ids": [self._preview(result.mesh)],
            "trace_id": self._store_trace(result.trace.to_dict()),
        }

    def _run_pipeline(self, job) -> dict:
        fit_cfg = self._fit_config(job)
        total = fit_cfg.iterations
        style_cfg = self._style_config(job)
        total += style_cfg.iterations

        def staged(offset):
            def update(done, _total):
                self.store.mark_progress(job.id, offset + done, total)

            return update

        fit_result = fit(
            self._sketch(job), self._pose(job), fit_cfg, self.provider,
            progress=staged(0),
        )
        style_result = stylize(
            fit_result.mesh, style_cfg, self.provider,
            progress=staged(fit_cfg.iterations),
        )
        return {
            "mesh_id": self._store_mesh(style_result.mesh),
            "fit_mesh_id": self._store_mesh(fit_result.mesh),
            "preview_ids": [
                self._preview(style_result.mesh),
                self._preview(fit_result.mesh),
            ],
            "trace_id": self._store_trace({
                "fit": fit_result.trace.to_dict(),
                "style": style_result.trace.to_dict(),
            }),
        }

    def _run_infer(self, job) -> dict:
        if self._model is None:
            raise ValueError("no checkpoint loaded; infer jobs unavailable")
        sketch = self._sketch(job)
        resolution = self._model.cfg.resolution
        values = sketch.values
        if values.shape[0] != resolution:
            if values.shape[0] % resolution:
                raise ValueError(
                    f"sketch size {values.shape[0]} is not a multiple of the "
                    f"model resolution {resolution}"
                )
            factor = values.shape[0] // resolution
            pooled = values.reshape(
                resolution, factor, resolution, factor
            ).mean(axis=(1, 3))
            values = (pooled >= 0.5).astype(np.float64)
        from .sketch import sketch_from_mask

        mesh, pose = infer(sketch_from_mask(values), self._model)
        return {
            "mesh_id": self._store_mesh(mesh),
            "preview_ids": [self._preview(mesh)],
            "trace_id": self._store_trace({
                "azimuth_deg": pose.azimuth_deg,
                "elevation_deg": pose.elevation_deg,
            }),
            "pose": {
                "azimuth_deg": pose.azimuth_deg,
                "elevation_deg": pose.elevation_deg,
            },
        }
