"""Synthetic phantom studies and corpus assembly.

Phantoms are deformed ellipsoids with lesions, noise, and (for the target
domain) a multiplicative intensity bias field plus stronger boundary
deformation.  The recipe is tuned so a model fit on source phantoms
degrades measurably on target phantoms, giving the adaptation pipeline a
real gap to close at desk scale.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import audit, points as points_mod
from .errors import InvalidArgumentError
from .points import ExtremePointSet, extract_extreme_points
from .volume import SegmentationMask, Volume, save_mask, save_volume

DOMAIN_SOURCE = "source"
DOMAIN_TARGET = "target"


@dataclass(frozen=True)
class PhantomParams:
    """Generation knobs for one phantom population."""

    shape: tuple[int, int, int] = (64, 64, 24)
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 2.0)
    radius_frac: tuple[float, float] = (0.40, 0.55)  # of the per-axis half-extent
    deform_amplitude: float = 0.10
    deform_frequency: float = 2.0
    lesion_count: tuple[int, int] = (0, 2)
    lesion_contrast: tuple[float, float] = (-0.22, -0.08)
    noise_level: float = 0.02
    bias_amplitude: float = 0.0
    edge_shift: float = 0.0  # apparent intensity edge sits this far (in
    # normalized radius units) inside the true mask boundary
    edge_softness: float = 0.05
    domain: str = DOMAIN_SOURCE

    def __post_init__(self):
        if self.noise_level < 0:
            raise InvalidArgumentError("noise level must be >= 0")
        if self.domain not in (DOMAIN_SOURCE, DOMAIN_TARGET):
            raise InvalidArgumentError(f"unknown domain {self.domain!r}")
        if not 0 < self.radius_frac[0] <= self.radius_frac[1]:
            raise InvalidArgumentError("radius_frac must be an increasing positive pair")


def source_params(**overrides) -> PhantomParams:
    return PhantomParams(domain=DOMAIN_SOURCE, **overrides)


def target_params(**overrides) -> PhantomParams:
    """Target-domain shift: ~2x deformation, intensity bias, wider lesion
    contrast, and an inward apparent-edge shift that makes intensity-read
    boundaries systematically miss the true mask extent."""
    defaults = dict(
        deform_amplitude=0.20,
        deform_frequency=3.0,
        lesion_count=(1, 3),
        lesion_contrast=(-0.34, 0.22),
        bias_amplitude=0.28,
        edge_shift=0.08,
        edge_softness=0.08,
        domain=DOMAIN_TARGET,
    )
    defaults.update(overrides)
    return PhantomParams(**defaults)


def study_seed(master_seed: int, study_id: str) -> int:
    """Stable per-study seed fan-out from one master seed."""
    digest = hashlib.sha256(f"{master_seed}/{study_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


_CENTER_JITTER_FRAC = 0.04


def _validate_margins(params: PhantomParams) -> None:
    """Worst case over all seeds: deformed radius + center jitter must keep
    a 2-voxel margin to the grid boundary on every axis."""
    for n in params.shape:
        half = n / 2.0
        reach = params.radius_frac[1] * half * (1.0 + params.deform_amplitude)
        slack = half - 0.5 - _CENTER_JITTER_FRAC * n - reach
        if slack < 2.0:
            raise InvalidArgumentError(
                f"phantom params violate the 2-voxel boundary margin on an axis of "
                f"extent {n} (worst-case slack {slack:.2f})"
            )


def _direction_field(rng, frequency, n_modes=3):
    axes = rng.normal(size=(n_modes, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    weights = rng.uniform(0.5, 1.0, size=n_modes)
    weights /= weights.sum()
    phases = rng.uniform(0, 2 * math.pi, size=n_modes)

    def f(u):  # u: (..., 3) unit directions
        acc = np.zeros(u.shape[:-1])
        for k, w, p in zip(axes, weights, phases):
            acc += w * np.sin(frequency * (u @ k) * math.pi + p)
        return acc

    return f


def generate_study(seed: int, params: PhantomParams) -> tuple[Volume, SegmentationMask]:
    vol, mask, _ = generate_study_with_meta(seed, params)
    return vol, mask


def generate_study_with_meta(
    seed: int, params: PhantomParams
) -> tuple[Volume, SegmentationMask, dict]:
    """Deterministic phantom synthesis; meta reports the sampled geometry."""
    _validate_margins(params)
    rng = np.random.default_rng(seed)
    shape = tuple(int(n) for n in params.shape)
    nx, ny, nz = shape

    half = np.array(shape) / 2.0
    center = half - 0.5 + rng.uniform(
        -_CENTER_JITTER_FRAC, _CENTER_JITTER_FRAC, size=3
    ) * np.array(shape)
    radii = rng.uniform(params.radius_frac[0], params.radius_frac[1], size=3) * half

    ii, jj, kk = np.meshgrid(
        np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"
    )
    offset = np.stack(
        [(ii - center[0]) / radii[0], (jj - center[1]) / radii[1], (kk - center[2]) / radii[2]],
        axis=-1,
    )
    rho2 = (offset**2).sum(axis=-1)
    rho = np.sqrt(rho2)

    if params.deform_amplitude > 0:
        deform = _direction_field(rng, params.deform_frequency)
        u = offset / np.maximum(rho[..., None], 1e-9)
        boundary = 1.0 + params.deform_amplitude * deform(u)
    else:
        boundary = np.ones_like(rho)
    mask_arr = (rho2 <= boundary**2).astype(np.uint8)

    bg_level = 0.25 + rng.uniform(-0.02, 0.02)
    fg_contrast = 0.36 + rng.uniform(-0.04, 0.04)
    apparent = boundary - params.edge_shift
    inside = 1.0 / (1.0 + np.exp(-(apparent - rho) / params.edge_softness))
    intensity = bg_level + fg_contrast * inside

    n_lesions = int(rng.integers(params.lesion_count[0], params.lesion_count[1] + 1))
    interior = np.argwhere((mask_arr > 0) & (rho <= 0.7))
    for _ in range(n_lesions):
        if interior.size == 0:
            break
        lc = interior[rng.integers(len(interior))]
        lr = rng.uniform(0.06, 0.14) * min(shape)
        contrast = rng.uniform(*params.lesion_contrast)
        d2 = (ii - lc[0]) ** 2 + (jj - lc[1]) ** 2 + (kk - lc[2]) ** 2
        blob = 1.0 / (1.0 + np.exp(-(lr - np.sqrt(d2)) / (0.3 * lr)))
        intensity = intensity + contrast * blob * mask_arr

    if params.bias_amplitude > 0:
        g = rng.normal(size=3)
        g /= np.linalg.norm(g)
        coords = np.stack([ii / nx - 0.5, jj / ny - 0.5, kk / nz - 0.5], axis=-1)
        ramp = 2.0 * (coords @ g)
        h = rng.normal(size=3)
        h /= np.linalg.norm(h)
        wave = np.sin(2 * math.pi * (coords @ h) + rng.uniform(0, 2 * math.pi))
        intensity = intensity * (1.0 + params.bias_amplitude * (0.7 * ramp + 0.3 * wave))

    if params.noise_level > 0:
        intensity = intensity + rng.normal(0.0, params.noise_level, size=shape)

    intensity = np.clip(intensity, 0.0, 1.0).astype(np.float32)
    meta = {"center": center.tolist(), "radii": radii.tolist(), "n_lesions": n_lesions}
    return (
        Volume(intensity, params.spacing_mm),
        SegmentationMask(mask_arr, params.spacing_mm),
        meta,
    )


def simulate_ps(m: SegmentationMask, jitter_vox: float = 0.0, seed: int = 0) -> ExtremePointSet:
    """Mask-derived extreme points, optionally jittered like noisy human clicks.

    Jitter perturbs only the non-extremal axes and re-projects onto the
    nearest in-mask voxel of the extremal slice, so every point stays
    inside the mask and keeps its extremal coordinate.
    """
    if jitter_vox < 0:
        raise InvalidArgumentError("jitter must be >= 0")
    base = extract_extreme_points(m)
    if jitter_vox == 0:
        return base
    rng = np.random.default_rng(seed)
    fg = np.argwhere(m.voxels > 0)
    pts = {}
    for slot, ijk in base.points.items():
        axis_idx = ("x", "y", "z").index(slot[0])
        target = np.array(ijk, dtype=float)
        for d in range(3):
            if d != axis_idx:
                target[d] += rng.uniform(-jitter_vox, jitter_vox)
        slice_pts = fg[fg[:, axis_idx] == ijk[axis_idx]]
        d2 = ((slice_pts - target) ** 2).sum(axis=1)
        order = np.lexsort((slice_pts[:, 2], slice_pts[:, 1], slice_pts[:, 0], d2))
        pts[slot] = tuple(int(c) for c in slice_pts[order[0]])
    return ExtremePointSet(pts, m.spacing_mm, points_mod.SOURCE_DERIVED, m.study_id)


# --- corpus assembly -------------------------------------------------------


@dataclass(frozen=True)
class StudyRef:
    """One study's files, paths relative to the manifest."""

    study_id: str
    volume: str
    mask: str | None = None
    ps: str | None = None
    hidden_mask: str | None = None


@dataclass(frozen=True)
class CorpusManifest:
    seed: int
    source_studies: tuple[StudyRef, ...]
    target_ps_studies: tuple[StudyRef, ...]
    target_unlabelled_studies: tuple[StudyRef, ...]
    evaluation_studies: tuple[StudyRef, ...]
    root: Path = Path(".")

    def __post_init__(self):
        ids = [s.study_id for group in self.groups() for s in group]
        if len(ids) != len(set(ids)):
            raise InvalidArgumentError("study ids must be unique across the manifest")

    def groups(self):
        return (
            self.source_studies,
            self.target_ps_studies,
            self.target_unlabelled_studies,
            self.evaluation_studies,
        )

    def resolve(self, rel: str) -> Path:
        return (self.root / rel).resolve()

    @property
    def n_ps(self) -> int:
        return len(self.target_ps_studies)

    @property
    def n_unlabelled(self) -> int:
        return len(self.target_unlabelled_studies)


def manifest_to_dict(m: CorpusManifest) -> dict:
    def refs(group):
        out = []
        for s in group:
            d = {"study_id": s.study_id, "volume": s.volume}
            for key in ("mask", "ps", "hidden_mask"):
                if getattr(s, key) is not None:
                    d[key] = getattr(s, key)
            out.append(d)
        return out

    return {
        "seed": m.seed,
        "source_studies": refs(m.source_studies),
        "target_ps_studies": refs(m.target_ps_studies),
        "target_unlabelled_studies": refs(m.target_unlabelled_studies),
        "evaluation_studies": refs(m.evaluation_studies),
    }


def save_manifest(path: str | Path, m: CorpusManifest) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest_to_dict(m), indent=2) + "\n")


def load_manifest(path: str | Path) -> CorpusManifest:
    path = Path(path)
    audit.record_read(path)
    d = json.loads(path.read_text())

    def refs(key):
        return tuple(StudyRef(**entry) for entry in d[key])

    return CorpusManifest(
        seed=d["seed"],
        source_studies=refs("source_studies"),
        target_ps_studies=refs("target_ps_studies"),
        target_unlabelled_studies=refs("target_unlabelled_studies"),
        evaluation_studies=refs("evaluation_studies"),
        root=path.parent,
    )


@dataclass(frozen=True)
class CorpusConfig:
    out_dir: str
    source_count: int = 8
    target_count: int = 16
    eval_count: int = 4
    ps_fraction: float = 1.0
    seed: int = 0
    jitter_vox: float = 0.0
    shape: tuple[int, int, int] = (64, 64, 24)
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 2.0)
    source_overrides: dict = field(default_factory=dict)
    target_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.source_count, self.target_count, self.eval_count) < 1:
            raise InvalidArgumentError("each split needs at least one study")
        if not 0 < self.ps_fraction <= 1:
            raise InvalidArgumentError("ps_fraction must be in (0, 1]")


def corpus_config_from_dict(d: dict) -> CorpusConfig:
    d = dict(d)
    for key in ("shape", "spacing_mm"):
        if key in d:
            d[key] = tuple(d[key])
    return CorpusConfig(**d)


def build_corpus(config: CorpusConfig) -> CorpusManifest:
    """Generate phantoms, write NIfTI + PS files, and emit the manifest.

    Layout under ``out_dir``: source/{vol,mask}, target/{vol,ps},
    eval/{vol,ps,hidden_mask}, manifest.json.  Evaluation masks live only
    under eval/hidden_mask and are never touched by training code.
    """
    root = Path(config.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    common = dict(shape=config.shape, spacing_mm=config.spacing_mm)
    src_params = source_params(**{**common, **config.source_overrides})
    tgt_params = target_params(**{**common, **config.target_overrides})

    def make(study_id: str, params: PhantomParams):
        seed = study_seed(config.seed, study_id)
        vol, mask = generate_study(seed, params)
        vol = replace(vol, study_id=study_id)
        mask = replace(mask, study_id=study_id)
        ps = simulate_ps(mask, config.jitter_vox, seed=seed ^ 0x5F5F)
        return vol, mask, ps

    source = []
    for i in range(config.source_count):
        sid = f"src_{i:03d}"
        vol, mask, _ = make(sid, src_params)
        save_volume(root / "source" / "vol" / f"{sid}.nii.gz", vol)
        save_mask(root / "source" / "mask" / f"{sid}.nii.gz", mask)
        source.append(
            StudyRef(sid, f"source/vol/{sid}.nii.gz", mask=f"source/mask/{sid}.nii.gz")
        )

    n_ps = math.ceil(config.ps_fraction * config.target_count)
    target_ps, target_unlabelled = [], []
    for i in range(config.target_count):
        sid = f"tgt_{i:03d}"
        vol, mask, ps = make(sid, tgt_params)
        save_volume(root / "target" / "vol" / f"{sid}.nii.gz", vol)
        if i < n_ps:
            points_mod.save_points(root / "target" / "ps" / f"{sid}.json", ps)
            target_ps.append(
                StudyRef(sid, f"target/vol/{sid}.nii.gz", ps=f"target/ps/{sid}.json")
            )
        else:
            target_unlabelled.append(StudyRef(sid, f"target/vol/{sid}.nii.gz"))

    evaluation = []
    for i in range(config.eval_count):
        sid = f"eval_{i:03d}"
        vol, mask, ps = make(sid, tgt_params)
        save_volume(root / "eval" / "vol" / f"{sid}.nii.gz", vol)
        points_mod.save_points(root / "eval" / "ps" / f"{sid}.json", ps)
        save_mask(root / "eval" / "hidden_mask" / f"{sid}.nii.gz", mask)
        evaluation.append(
            StudyRef(
                sid,
                f"eval/vol/{sid}.nii.gz",
                ps=f"eval/ps/{sid}.json",
                hidden_mask=f"eval/hidden_mask/{sid}.nii.gz",
            )
        )

    manifest = CorpusManifest(
        seed=config.seed,
        source_studies=tuple(source),
        target_ps_studies=tuple(target_ps),
        target_unlabelled_studies=tuple(target_unlabelled),
        evaluation_studies=tuple(evaluation),
        root=root,
    )
    save_manifest(root / "manifest.json", manifest)
    return manifest
