"""HTTP annotation service: study listing, slice images, click storage,
PS-conditioned inference.

REST surface:
  GET  /healthz
  GET  /studies
  GET  /studies/{id}/slices/{axis}/{index}   (PNG, 8-bit grayscale)
  GET  /studies/{id}/extreme-points          (stored annotation record)
  PUT  /studies/{id}/extreme-points
  POST /studies/{id}/infer

Slice images put the first remaining axis (in x, y, z order) on the image
width and the second on the height, so a client click at (col, row) on an
axis-z slice maps to voxel (col, row, index).
"""

from __future__ import annotations

import io
import json
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel, Field

from . import points as points_mod, rle
from .errors import EmptyMaskError, UgdaError
from .metrics import mxa
from .nifti import read_nifti_header
from .phantom import load_manifest
from .points import AXES, SIDES, SLOTS, ExtremePointSet
from .trainer import (
    TrainConfig,
    infer_mask,
    load_checkpoint,
    resolve_device,
    restore_networks,
)
from .volume import Volume, load_volume, window_normalize

STATUS_COMPLETE = "complete"
STATUS_IN_PROGRESS = "in_progress"
STATUS_UNANNOTATED = "unannotated"


class PointIn(BaseModel):
    axis: str
    side: str
    ijk: list[int] = Field(min_length=3, max_length=3)


class PointsIn(BaseModel):
    annotator: str = ""
    points: list[PointIn] = Field(min_length=1, max_length=6)


@dataclass
class StudyEntry:
    study_id: str
    volume_path: Path
    corpus_ps_path: Path | None
    shape: tuple[int, int, int]
    spacing_mm: tuple[float, float, float]


class AnnotationStore:
    """Per-study annotation records with atomic, idempotent writes.

    The record file is the extreme-point JSON schema plus annotator,
    timestamps, and status; a schema-exact PS file (``<id>.ps.json``) is
    written alongside once all six slots are filled.
    """

    def __init__(self, directory: Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, study_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(study_id, threading.Lock())

    def record_path(self, study_id: str) -> Path:
        return self.dir / f"{study_id}.json"

    def ps_path(self, study_id: str) -> Path:
        return self.dir / f"{study_id}.ps.json"

    def get(self, study_id: str) -> dict | None:
        path = self.record_path(study_id)
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def put(self, entry: StudyEntry, pts: list[dict], annotator: str, now: str) -> dict:
        with self._lock(entry.study_id):
            existing = self.get(entry.study_id)
            if (
                existing is not None
                and existing["points"] == pts
                and existing["annotator"] == annotator
            ):
                return existing  # idempotent: stored bytes unchanged
            status = STATUS_COMPLETE if len(pts) == 6 else STATUS_IN_PROGRESS
            record = {
                "study_id": entry.study_id,
                "spacing_mm": [float(s) for s in entry.spacing_mm],
                "source": points_mod.SOURCE_HUMAN,
                "points": pts,
                "annotator": annotator,
                "created": existing["created"] if existing else now,
                "updated": now,
                "status": status,
            }
            self._write_atomic(self.record_path(entry.study_id), record)
            if status == STATUS_COMPLETE:
                eps = ExtremePointSet(
                    {(p["axis"], p["side"]): tuple(p["ijk"]) for p in pts},
                    entry.spacing_mm,
                    points_mod.SOURCE_HUMAN,
                    entry.study_id,
                )
                tmp = self.ps_path(entry.study_id).with_suffix(".tmp")
                tmp.write_text(points_mod.dumps(eps))
                tmp.replace(self.ps_path(entry.study_id))
            return record

    @staticmethod
    def _write_atomic(path: Path, payload: dict) -> None:
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, indent=2) + "\n")
        tmp.replace(path)

    def complete_point_set(self, entry: StudyEntry) -> ExtremePointSet | None:
        record = self.get(entry.study_id)
        if record is None or record["status"] != STATUS_COMPLETE:
            return None
        return ExtremePointSet(
            {(p["axis"], p["side"]): tuple(p["ijk"]) for p in record["points"]},
            entry.spacing_mm,
            points_mod.SOURCE_HUMAN,
            entry.study_id,
        )


def _validate_points(body: PointsIn, shape) -> tuple[list[dict] | None, str]:
    seen = set()
    out = []
    for p in body.points:
        if p.axis not in AXES or p.side not in SIDES:
            return None, f"unknown slot ({p.axis}, {p.side})"
        slot = (p.axis, p.side)
        if slot in seen:
            return None, f"duplicate slot ({p.axis}, {p.side})"
        seen.add(slot)
        if any(not 0 <= c < n for c, n in zip(p.ijk, shape)):
            return None, f"point {p.ijk} outside grid {list(shape)}"
        out.append({"axis": p.axis, "side": p.side, "ijk": [int(c) for c in p.ijk]})
    order = {(a, s): i for i, (a, s) in enumerate(SLOTS)}
    out.sort(key=lambda p: order[(p["axis"], p["side"])])
    return out, ""


def create_app(
    data_dir: str | Path,
    ckpt: str | Path | None = None,
    window: tuple[float, float] = (0.0, 1.0),
    device: str | None = None,
) -> FastAPI:
    """Build the service around a corpus directory containing manifest.json."""
    data_dir = Path(data_dir)
    manifest = load_manifest(data_dir / "manifest.json")

    entries: dict[str, StudyEntry] = {}
    for group in (
        manifest.target_ps_studies,
        manifest.target_unlabelled_studies,
        manifest.evaluation_studies,
    ):
        for ref in group:
            vol_path = manifest.resolve(ref.volume)
            hdr = read_nifti_header(vol_path)
            entries[ref.study_id] = StudyEntry(
                study_id=ref.study_id,
                volume_path=vol_path,
                corpus_ps_path=manifest.resolve(ref.ps) if ref.ps else None,
                shape=tuple(hdr["shape"]),
                spacing_mm=tuple(hdr["spacing_mm"]),
            )

    store = AnnotationStore(data_dir / "annotations")
    volume_cache: dict[str, Volume] = {}
    cache_lock = threading.Lock()
    infer_lock = threading.Lock()

    model = None
    model_config = None
    if ckpt is not None:
        payload = load_checkpoint(ckpt)
        model_config = TrainConfig.from_dict(payload["config"])
        if device is not None:
            model_config = TrainConfig.from_dict({**model_config.to_dict(), "device": device})
        model = restore_networks(payload, model_config)
        dev = resolve_device(model_config)
        for net in model.values():
            if net is not None:
                net.to(dev).eval()

    app = FastAPI(title="extreme-point annotation service")

    def get_volume(study_id: str) -> Volume:
        with cache_lock:
            if study_id not in volume_cache:
                entry = entries[study_id]
                volume_cache[study_id] = load_volume(entry.volume_path, study_id)
            return volume_cache[study_id]

    def study_status(entry: StudyEntry) -> str:
        record = store.get(entry.study_id)
        if record is not None:
            return record["status"]
        if entry.corpus_ps_path is not None and entry.corpus_ps_path.exists():
            return STATUS_COMPLETE
        return STATUS_UNANNOTATED

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "model_loaded": model is not None}

    @app.get("/studies")
    def list_studies():
        return [
            {
                "study_id": e.study_id,
                "shape": list(e.shape),
                "spacing_mm": list(e.spacing_mm),
                "status": study_status(e),
            }
            for _, e in sorted(entries.items())
        ]

    @app.get("/studies/{study_id}/slices/{axis}/{index}")
    def get_slice(study_id: str, axis: str, index: int):
        if study_id not in entries:
            return JSONResponse({"detail": "unknown study"}, status_code=404)
        if axis not in AXES:
            return JSONResponse({"detail": f"axis must be one of {AXES}"}, status_code=404)
        entry = entries[study_id]
        axis_idx = AXES.index(axis)
        if not 0 <= index < entry.shape[axis_idx]:
            return JSONResponse({"detail": "slice index out of range"}, status_code=404)
        vol = get_volume(study_id)
        normalized = window_normalize(vol, *window)
        plane = np.take(normalized.voxels, index, axis=axis_idx)
        pixels = np.floor(plane * 255.0 + 0.5).astype(np.uint8)
        image = Image.fromarray(pixels.T)  # width = first remaining axis
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/studies/{study_id}/extreme-points")
    def get_extreme_points(study_id: str):
        if study_id not in entries:
            return JSONResponse({"detail": "unknown study"}, status_code=404)
        record = store.get(study_id)
        if record is None:
            return JSONResponse({"detail": "no annotation saved"}, status_code=404)
        return record

    @app.put("/studies/{study_id}/extreme-points")
    def put_extreme_points(study_id: str, body: PointsIn):
        if study_id not in entries:
            return JSONResponse({"detail": "unknown study"}, status_code=404)
        entry = entries[study_id]
        pts, err = _validate_points(body, entry.shape)
        if pts is None:
            return JSONResponse({"detail": err}, status_code=422)
        from datetime import datetime, timezone

        now = datetime.now(timezone.utc).isoformat()
        record = store.put(entry, pts, body.annotator, now)
        return record

    @app.post("/studies/{study_id}/infer")
    def infer(study_id: str):
        if study_id not in entries:
            return JSONResponse({"detail": "unknown study"}, status_code=404)
        if model is None:
            return JSONResponse({"detail": "no checkpoint loaded"}, status_code=503)
        entry = entries[study_id]
        try:
            vol = get_volume(study_id)
            human_ps = store.complete_point_set(entry)
            with infer_lock:
                pred = infer_mask(model, vol, model_config, ps=human_ps)
            payload = {
                "study_id": study_id,
                "shape": list(entry.shape),
                "spacing_mm": list(entry.spacing_mm),
                "heatmap_source": "human_click" if human_ps is not None else "predicted",
                "rle": rle.rle_encode(pred.voxels),
                "mxa_mm": None,
                "empty_prediction": bool(pred.is_empty()),
            }
            if human_ps is not None and not pred.is_empty():
                try:
                    payload["mxa_mm"] = mxa(pred, human_ps)
                except EmptyMaskError:
                    pass
            return payload
        except UgdaError as exc:
            trace_id = uuid.uuid4().hex[:12]
            return JSONResponse(
                {"detail": f"inference failed ({trace_id}): {exc}", "trace_id": trace_id},
                status_code=500,
            )

    return app


def serve(data_dir, ckpt=None, port: int = 8080, host: str = "127.0.0.1",
          window=(0.0, 1.0), device=None) -> None:
    import uvicorn

    app = create_app(data_dir, ckpt=ckpt, window=window, device=device)
    uvicorn.run(app, host=host, port=port, log_level="warning")
