"""FastAPI application wrapping the editing pipeline.

Sessions embed an image once and then accumulate edits; optimization runs
as cancellable background jobs with progress streamed over server-sent
events. Model weights are shared read-only across requests; each session
serializes its own mutations and allows at most one running optimization.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse

from maskedit import imageio, metrics
from maskedit.editing import (EditCancelled, EditingLossConfig, compute_edit_region,
                              apply_editing_vector, learn_editing_vector, refine_edit)
from maskedit.embedding import RefinementConfig, embed_image
from maskedit.generator import load_checkpoint, sample_latent
from maskedit.labels import LabelSchema
from maskedit.scenes import SCENE_SCHEMA
from maskedit.service import schemas
from maskedit.service.config import ServiceConfig
from maskedit.service.schemas import b64, unb64
from maskedit.service.sessions import (IdempotencyCache, Job, JobManager, Session,
                                       SessionStore, latent_hash)
from maskedit.vectors import (VectorCompatibilityError, VectorRecord, list_vectors,
                              load_vector, save_vector)

VECTOR_SUFFIX = ".egv"


class ServiceState:
    """Models plus mutable stores shared by all request handlers."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.generator = None
        self.encoder = None
        self.generator_hash: Optional[str] = None
        self.schema: Optional[LabelSchema] = None
        self.load_error: Optional[str] = None
        self.sessions = SessionStore(Path(config.sessions_dir))
        self.jobs = JobManager()
        self.idempotency = IdempotencyCache()
        self.load_models()

    def load_models(self) -> None:
        path = self.config.checkpoint_path
        if not path:
            self.load_error = "no checkpoint configured"
            return
        try:
            generator, encoder = load_checkpoint(path)
        except FileNotFoundError:
            self.load_error = f"checkpoint not found: {path}"
            return
        except Exception as exc:  # surfaced via /healthz
            self.load_error = f"checkpoint unreadable: {exc}"
            return
        self.generator = generator
        self.encoder = encoder
        self.generator_hash = generator.weights_hash()
        n = generator.config.num_labels
        self.schema = SCENE_SCHEMA if n == SCENE_SCHEMA.num_labels else LabelSchema.generic(n)
        self.load_error = None

    @property
    def ready(self) -> bool:
        return self.generator is not None


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="maskedit service", version="0.1.0")
    state = ServiceState(config)
    app.state.service = state

    # -- helpers -----------------------------------------------------------

    def require_models():
        if not state.ready:
            raise HTTPException(status_code=503,
                                detail=state.load_error or "models still loading")

    def require_session(session_id: str) -> Session:
        session = state.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    def require_idle(session: Session) -> None:
        if session.active_job is not None:
            raise HTTPException(status_code=409,
                                detail=f"optimization {session.active_job} already "
                                       f"running in session {session.session_id}")

    def refresh_artifacts(session: Session) -> tuple[bytes, bytes]:
        """Re-render and persist the current reconstruction and mask PNGs."""
        sample = state.generator.synthesize(session.latent)
        image_png = imageio.image_to_png_bytes(sample.image)
        mask_png = imageio.mask_to_png_bytes(sample.mask, state.schema)
        session.write_bytes("recon.png", image_png)
        session.write_bytes("mask_pred.png", mask_png)
        session.persist_latent()
        return image_png, mask_png

    def decode_mask_or_422(data: bytes, resolution: int) -> np.ndarray:
        try:
            mask = imageio.png_bytes_to_mask(data, state.generator.config.num_labels)
        except imageio.ImageDecodeError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if mask.shape != (resolution, resolution):
            raise HTTPException(status_code=409,
                                detail=f"mask resolution {mask.shape} does not match "
                                       f"session resolution {resolution}")
        return mask

    def load_compatible_vector(name: str) -> VectorRecord:
        path = Path(config.vectors_dir) / f"{name}{VECTOR_SUFFIX}"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown vector {name!r}")
        try:
            return load_vector(path, active_generator_hash=state.generator_hash)
        except VectorCompatibilityError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"unreadable vector: {exc}")

    # -- endpoints -----------------------------------------------------------

    @app.get("/healthz", response_model=schemas.HealthResponse)
    def healthz():
        if not state.ready:
            return JSONResponse(status_code=503,
                                content={"status": "loading", "detail": state.load_error})
        return {"status": "ok", "generator_hash": state.generator_hash}

    @app.get("/schema")
    def label_schema():
        require_models()
        return {"resolution": state.generator.config.output_resolution,
                **state.schema.to_dict()}

    @app.post("/sessions", status_code=201, response_model=schemas.SessionResponse)
    async def create_session(request: Request, embed_steps: Optional[int] = None):
        require_models()
        idem_key = request.headers.get("Idempotency-Key")
        cached = state.idempotency.get(idem_key)
        if cached is not None:
            return JSONResponse(status_code=cached[0], content=cached[1])

        content_type = request.headers.get("content-type", "")
        if content_type.startswith("image/png"):
            png = await request.body()
            steps = embed_steps
        else:
            try:
                body = schemas.CreateSessionRequest.model_validate(await request.json())
                png = unb64(body.image_png)
            except Exception as exc:
                raise HTTPException(status_code=400, detail=f"bad request body: {exc}")
            steps = body.embed_steps if body.embed_steps is not None else embed_steps

        try:
            image = imageio.png_bytes_to_image(png)
        except imageio.ImageDecodeError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        res = state.generator.config.output_resolution
        if image.shape[:2] != (res, res):
            raise HTTPException(status_code=409,
                                detail=f"image resolution {image.shape[:2]} does not match "
                                       f"generator output {res}x{res}")

        steps = config.default_embed_steps if steps is None else steps
        result = embed_image(state.generator, state.encoder, image,
                             RefinementConfig(steps=steps))
        session = state.sessions.create(result.w_plus, res)
        session.write_bytes("source.png", png)
        image_png, mask_png = refresh_artifacts(session)
        session.record("embed", steps=steps, final_loss=result.final_loss)

        payload = schemas.SessionResponse(
            session_id=session.session_id,
            reconstruction_png=b64(image_png),
            predicted_mask_png=b64(mask_png),
            final_loss=result.final_loss,
            loss_trace_length=len(result.loss_trace),
            latent_hash=latent_hash(session.latent),
        ).model_dump()
        state.idempotency.put(idem_key, 201, payload)
        return JSONResponse(status_code=201, content=payload)

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": state.sessions.all_ids()}

    @app.get("/sessions/{session_id}", response_model=schemas.SessionInfo)
    def session_info(session_id: str):
        session = require_session(session_id)
        return schemas.SessionInfo(
            session_id=session.session_id,
            resolution=session.resolution,
            latent_hash=latent_hash(session.latent),
            history=session.history,
            applied_vectors=session.applied,
            busy=session.active_job is not None,
        )

    @app.get("/sessions/{session_id}/image")
    def session_image(session_id: str):
        session = require_session(session_id)
        data = session.read_bytes("recon.png")
        if data is None:
            raise HTTPException(status_code=404, detail="no reconstruction stored")
        return Response(content=data, media_type="image/png")

    @app.get("/sessions/{session_id}/source")
    def session_source(session_id: str):
        session = require_session(session_id)
        data = session.read_bytes("source.png")
        if data is None:
            raise HTTPException(status_code=404, detail="no source stored")
        return Response(content=data, media_type="image/png")

    @app.get("/sessions/{session_id}/mask")
    def get_mask(session_id: str):
        session = require_session(session_id)
        data = session.read_bytes("mask_user.png")
        if data is None:
            data = session.read_bytes("mask_pred.png")
        if data is None:
            raise HTTPException(status_code=404, detail="no mask stored")
        return Response(content=data, media_type="image/png")

    @app.put("/sessions/{session_id}/mask")
    async def put_mask(session_id: str, request: Request):
        require_models()
        session = require_session(session_id)
        data = await request.body()
        decode_mask_or_422(data, session.resolution)
        with session.lock:
            require_idle(session)
            # stored verbatim so GET returns the identical bytes
            session.write_bytes("mask_user.png", data)
        return {"stored": True, "bytes": len(data)}

    @app.post("/sessions/{session_id}/edit", status_code=202,
              response_model=schemas.JobSubmitted)
    def submit_edit(session_id: str, body: schemas.EditRequest, request: Request):
        require_models()
        session = require_session(session_id)
        idem_key = request.headers.get("Idempotency-Key")
        cached = state.idempotency.get(idem_key)
        if cached is not None:
            return JSONResponse(status_code=cached[0], content=cached[1])

        if body.mask_png is not None:
            try:
                mask_bytes = unb64(body.mask_png)
            except Exception as exc:
                raise HTTPException(status_code=400, detail=f"undecodable mask_png: {exc}")
        else:
            mask_bytes = session.read_bytes("mask_user.png")
            if mask_bytes is None:
                raise HTTPException(status_code=422,
                                    detail="no edited mask: PUT one or inline mask_png")
        y_edited = decode_mask_or_422(mask_bytes, session.resolution)

        with session.lock:
            require_idle(session)
            base_latent = session.latent
            base_sample = state.generator.synthesize(base_latent)
            region = compute_edit_region(base_sample.mask, y_edited, body.q_labels,
                                         buffer_px=body.buffer_px)
            if region.empty:
                raise HTTPException(status_code=422,
                                    detail="empty edit region: the requested labels occur "
                                           "in neither the current nor the edited mask")
            job = state.jobs.create(session.session_id)
            session.active_job = job.job_id

        steps = body.steps if body.steps is not None else config.default_edit_steps
        cfg = EditingLossConfig(lambda_rgb=body.lambdas.rgb, lambda_ce=body.lambdas.ce,
                                lambda_id=body.lambdas.id, steps=steps,
                                use_identity=body.use_identity)

        def progress(step: int, comps: dict) -> None:
            job.step = step
            if step % config.progress_every == 0 or step == steps:
                job.publish({"step": step, "loss_total": comps["total"],
                             "loss_rgb": comps["rgb"], "loss_ce": comps["ce"],
                             "loss_id": comps["id"]})

        def run() -> None:
            try:
                result = learn_editing_vector(
                    state.generator, base_latent, base_sample.image, y_edited, region,
                    cfg=cfg, name=body.save_vector_name or f"edit-{job.job_id}",
                    progress=progress, should_stop=job.cancel_event.is_set)
                edited_latent = base_latent.with_edits(
                    [(result.vector.key, result.vector.delta, float(body.scale))])
                payload: dict = {"loss_trace_length": len(result.loss_trace),
                                 "final_loss": result.loss_trace[-1],
                                 "best_loss": min(result.loss_trace)}
                with session.lock:
                    session.latent = edited_latent
                    image_png, mask_png = refresh_artifacts(session)
                    session.record("edit", job_id=job.job_id,
                                   q_labels=sorted(region.label_set), steps=steps)
                payload["image_png"] = b64(image_png)
                payload["mask_png"] = b64(mask_png)
                payload["latent_hash"] = latent_hash(edited_latent)
                if body.save_vector_name and body.mode == "learn-vector":
                    record = VectorRecord(vector=result.vector,
                                          generator_checkpoint_hash=state.generator_hash)
                    path = save_vector(record, config.vectors_dir)
                    payload["vector_path"] = str(path)
                job.finish("done", result=payload)
            except EditCancelled:
                job.finish("cancelled")
            except Exception as exc:
                job.finish("error", error=str(exc))
            finally:
                with session.lock:
                    session.active_job = None

        threading.Thread(target=run, name=f"edit-{job.job_id}", daemon=True).start()
        payload = schemas.JobSubmitted(job_id=job.job_id,
                                       session_id=session.session_id).model_dump()
        state.idempotency.put(idem_key, 202, payload)
        return JSONResponse(status_code=202, content=payload)

    @app.get("/sessions/{session_id}/jobs/{job_id}", response_model=schemas.JobStatus)
    def job_status(session_id: str, job_id: str):
        require_session(session_id)
        job = state.jobs.get(job_id)
        if job is None or job.session_id != session_id:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        return schemas.JobStatus(job_id=job.job_id, status=job.status, step=job.step,
                                 error=job.error, result=job.result)

    @app.post("/sessions/{session_id}/jobs/{job_id}/cancel")
    def cancel_job(session_id: str, job_id: str):
        require_session(session_id)
        job = state.jobs.get(job_id)
        if job is None or job.session_id != session_id:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        job.cancel_event.set()
        return {"job_id": job_id, "status": job.status, "cancel_requested": True}

    @app.get("/sessions/{session_id}/jobs/{job_id}/events")
    def job_events(session_id: str, job_id: str):
        require_session(session_id)
        job = state.jobs.get(job_id)
        if job is None or job.session_id != session_id:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")

        def stream():
            past, live = job.subscribe()
            for event in past:
                yield f"data: {json.dumps(event)}\n\n"
            if past and "status" in past[-1] and past[-1].get("status") != "running":
                return
            while True:
                event = live.get()
                if event is None:
                    return
                yield f"data: {json.dumps(event)}\n\n"
                if "status" in event:
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/sessions/{session_id}/apply", response_model=schemas.ApplyResponse)
    def apply_vector(session_id: str, body: schemas.ApplyRequest, request: Request):
        require_models()
        session = require_session(session_id)
        idem_key = request.headers.get("Idempotency-Key")
        cached = state.idempotency.get(idem_key)
        if cached is not None:
            return JSONResponse(status_code=cached[0], content=cached[1])

        record = load_compatible_vector(body.vector)
        with session.lock:
            require_idle(session)
            if body.refine_steps > 0:
                result = refine_edit(state.generator, session.latent, record.vector,
                                     body.scale, steps=body.refine_steps)
                session.latent = result.latent
                trace = result.loss_trace
            else:
                _, latent = apply_editing_vector(state.generator, session.latent,
                                                 record.vector, body.scale)
                session.latent = latent
                trace = []
            image_png, mask_png = refresh_artifacts(session)
            session.applied.append({"vector": body.vector, "scale": body.scale,
                                    "refine_steps": body.refine_steps})
            session.record("apply", vector=body.vector, scale=body.scale,
                           refine_steps=body.refine_steps)

        payload = schemas.ApplyResponse(
            image_png=b64(image_png), mask_png=b64(mask_png),
            latent_hash=latent_hash(session.latent), scale=body.scale,
            refine_steps=body.refine_steps, loss_trace=trace).model_dump()
        state.idempotency.put(idem_key, 200, payload)
        return JSONResponse(status_code=200, content=payload)

    @app.get("/vectors", response_model=schemas.VectorCatalogResponse)
    def vectors_catalog():
        catalog = list_vectors(config.vectors_dir, active_generator_hash=state.generator_hash)
        return schemas.VectorCatalogResponse(
            entries=[schemas.VectorEntry(
                name=e.name, label_set=e.label_set,
                generator_checkpoint_hash=e.generator_checkpoint_hash,
                created_at=e.created_at, notes=e.notes, compatible=e.compatible)
                for e in catalog.entries],
            warnings=catalog.warnings)

    @app.post("/benchmark", response_model=schemas.BenchmarkResponse)
    def benchmark(body: schemas.BenchmarkRequest):
        require_models()
        record = load_compatible_vector(body.vector)
        latents = [state.generator.map_to_w_plus(
            sample_latent(body.seed + i, state.generator.config.latent_dim))
            for i in range(body.n_test)]
        originals = [state.generator.synthesize(w).image for w in latents]
        reference = metrics.image_features(originals)
        reports = metrics.run_benchmark(
            state.generator, record.vector, body.scales, latents, reference,
            refinement_steps=body.refinement_steps, originals=originals)
        rows = []
        for r in reports:
            row = r.to_dict()
            if np.isnan(row["attribute_accuracy"]):
                row["attribute_accuracy"] = None
            rows.append(row)
        return schemas.BenchmarkResponse(reports=rows)

    return app
