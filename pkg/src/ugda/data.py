"""Corpus loading and deterministic batch scheduling for training.

Batch order is a pure function of (seed, epoch): resuming a run from a
checkpoint at any epoch boundary reproduces the uninterrupted schedule
regardless of worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from . import losses, points as points_mod
from .errors import InvalidArgumentError
from .heatmaps import render_heatmaps
from .phantom import CorpusManifest, StudyRef, study_seed
from .points import ExtremePointSet, extract_extreme_points, map_point_set
from .volume import (
    SegmentationMask,
    Volume,
    load_mask,
    load_volume,
    resample_mask,
    resample_volume,
    window_normalize,
)


@dataclass
class Study:
    """One study's tensors at the model grid."""

    study_id: str
    role: str
    image: torch.Tensor  # (1, nx, ny, nz) in [0, 1]
    mask: torch.Tensor | None = None  # (1, nx, ny, nz) float 0/1
    heatmap_target: torch.Tensor | None = None  # (6, nx, ny, nz)
    ps_selected: bool = False  # contributes extreme-point supervision
    native_shape: tuple[int, int, int] | None = None
    native_spacing: tuple[float, float, float] | None = None


def prepare_image(vol: Volume, input_shape, intensity_window) -> torch.Tensor:
    if intensity_window is not None:
        vol = window_normalize(vol, *intensity_window)
    if tuple(vol.shape) != tuple(input_shape):
        vol = resample_volume(vol, input_shape, mode="linear")
    arr = np.clip(vol.voxels, 0.0, 1.0).astype(np.float32)
    return torch.from_numpy(arr).unsqueeze(0)


def prepare_mask(mask: SegmentationMask, input_shape) -> torch.Tensor:
    if tuple(mask.shape) != tuple(input_shape):
        mask = resample_mask(mask, input_shape)
    return torch.from_numpy(mask.voxels.astype(np.float32)).unsqueeze(0)


def heatmap_target_tensor(
    ps: ExtremePointSet, native_shape, input_shape, sigma_vox: float
) -> torch.Tensor:
    if tuple(native_shape) != tuple(input_shape):
        scale = [t / n for n, t in zip(native_shape, input_shape)]
        spacing = tuple(s / f for s, f in zip(ps.spacing_mm, scale))
        ps = map_point_set(ps, native_shape, input_shape, spacing)
    hm = render_heatmaps(ps, input_shape, sigma_vox)
    return torch.from_numpy(hm.channels.copy())


def _load_study(
    manifest: CorpusManifest,
    ref: StudyRef,
    role: str,
    input_shape,
    sigma_vox: float,
    intensity_window,
) -> Study:
    vol = load_volume(manifest.resolve(ref.volume), ref.study_id)
    native_shape, native_spacing = vol.shape, vol.spacing_mm
    image = prepare_image(vol, input_shape, intensity_window)

    mask_t = None
    heatmap_t = None
    if role == losses.ROLE_SOURCE:
        mask = load_mask(manifest.resolve(ref.mask), ref.study_id)
        mask_t = prepare_mask(mask, input_shape)
        ps = extract_extreme_points(
            SegmentationMask(
                mask_t.squeeze(0).numpy().astype(np.uint8),
                _scaled_spacing(native_spacing, native_shape, input_shape),
                ref.study_id,
            )
        )
        heatmap_t = heatmap_target_tensor(ps, input_shape, input_shape, sigma_vox)
    elif ref.ps is not None:
        ps = points_mod.load_points(manifest.resolve(ref.ps))
        heatmap_t = heatmap_target_tensor(ps, native_shape, input_shape, sigma_vox)

    return Study(
        study_id=ref.study_id,
        role=role,
        image=image,
        mask=mask_t,
        heatmap_target=heatmap_t,
        native_shape=native_shape,
        native_spacing=native_spacing,
    )


def _scaled_spacing(spacing, native_shape, input_shape):
    return tuple(s * n / t for s, n, t in zip(spacing, native_shape, input_shape))


@dataclass
class TrainingData:
    source_train: list[Study]
    source_val: list[Study]
    source_test: list[Study]
    target: list[Study] = field(default_factory=list)

    @property
    def n_target(self) -> int:
        return len(self.target)


def split_source(ids: list[str], seed: int) -> tuple[list[str], list[str], list[str]]:
    """Deterministic 70/20/10 train/test/val split of the source corpus."""
    rng = np.random.default_rng([seed, 0x50F7])
    order = [ids[i] for i in rng.permutation(len(ids))]
    n = len(order)
    n_train = max(1, round(0.7 * n))
    n_test = max(1, round(0.2 * n)) if n - n_train >= 2 else max(0, n - n_train - 1)
    n_train = min(n_train, n - n_test - 1) if n >= 3 else n_train
    train = order[:n_train]
    test = order[n_train : n_train + n_test]
    val = order[n_train + n_test :]
    if not val:  # tiny corpora: reuse the last train study for validation
        val = [train[-1]]
    return train, test, val


def select_ps_contributors(
    non_eval_ps: list[str], eval_ps: list[str], n_target_total: int,
    ps_fraction: float, seed: int,
) -> set[str]:
    """Pick which PS-carrying studies contribute extreme-point supervision.

    Exactly ceil(ps_fraction * n_target_total) studies are kept, allocated
    between non-evaluation and evaluation groups proportionally (largest
    remainder), mirroring a same-percentage removal from both.
    """
    if not 0 < ps_fraction <= 1:
        raise InvalidArgumentError("ps_fraction must be in (0, 1]")
    want = math.ceil(ps_fraction * n_target_total)
    available = len(non_eval_ps) + len(eval_ps)
    want = min(want, available)
    groups = [sorted(non_eval_ps), sorted(eval_ps)]
    quotas = []
    for g in groups:
        quotas.append(want * len(g) / available if available else 0.0)
    base = [min(int(q), len(g)) for q, g in zip(quotas, groups)]
    remainder = want - sum(base)
    order = sorted(
        range(len(groups)), key=lambda i: quotas[i] - int(quotas[i]), reverse=True
    )
    for i in order:
        if remainder <= 0:
            break
        room = len(groups[i]) - base[i]
        take = min(room, remainder)
        base[i] += take
        remainder -= take
    selected: set[str] = set()
    for idx, g in enumerate(groups):
        rng = np.random.default_rng([seed, 0xA5, idx])
        perm = [g[i] for i in rng.permutation(len(g))]
        selected.update(perm[: base[idx]])
    return selected


def load_training_data(
    manifest: CorpusManifest,
    *,
    input_shape,
    sigma_vox: float,
    intensity_window,
    seed: int,
    ps_fraction: float = 1.0,
    include_target: bool = True,
    use_target_ps: bool = True,
) -> TrainingData:
    """Load and tensorize the corpus for one training run.

    Evaluation studies join the target pool with their volumes and PSs
    only; their hidden masks are never opened here.
    """
    load = lambda ref, role: _load_study(
        manifest, ref, role, input_shape, sigma_vox, intensity_window
    )
    source = {ref.study_id: load(ref, losses.ROLE_SOURCE) for ref in manifest.source_studies}
    train_ids, test_ids, val_ids = split_source(sorted(source), manifest.seed)
    data = TrainingData(
        source_train=[source[i] for i in train_ids],
        source_val=[source[i] for i in val_ids],
        source_test=[source[i] for i in test_ids],
    )
    if not include_target:
        return data

    target_refs = list(manifest.target_ps_studies) + list(
        manifest.target_unlabelled_studies
    )
    eval_refs = list(manifest.evaluation_studies)
    non_eval_ps = [r.study_id for r in target_refs if r.ps]
    eval_ps = [r.study_id for r in eval_refs if r.ps]
    n_target_total = len(target_refs) + len(eval_refs)
    if use_target_ps:
        contributors = select_ps_contributors(
            non_eval_ps, eval_ps, n_target_total, ps_fraction, seed
        )
    else:
        contributors = set()

    for ref in target_refs + eval_refs:
        selected = ref.study_id in contributors
        role = losses.ROLE_TARGET_PS if selected else losses.ROLE_TARGET_UNLABELLED
        study = load(ref, role) if selected else load(
            StudyRef(ref.study_id, ref.volume), role
        )
        study.ps_selected = selected
        data.target.append(study)
    return data


def epoch_order(n: int, seed: int, epoch: int, stream: int = 0) -> list[int]:
    rng = np.random.default_rng([seed, epoch, stream])
    return list(rng.permutation(n))


def stratified_target_order(studies: list[Study], seed: int, epoch: int) -> list[int]:
    """Shuffle target studies keeping PS/unlabelled proportions in every prefix."""
    ps_idx = [i for i, s in enumerate(studies) if s.ps_selected]
    un_idx = [i for i, s in enumerate(studies) if not s.ps_selected]
    rng = np.random.default_rng([seed, epoch, 2])
    ps_idx = [ps_idx[i] for i in rng.permutation(len(ps_idx))]
    un_idx = [un_idx[i] for i in rng.permutation(len(un_idx))]
    total = len(ps_idx) + len(un_idx)
    order, err_ps = [], 0.0
    frac = len(ps_idx) / total if total else 0.0
    i = j = 0
    for _ in range(total):
        err_ps += frac
        if (err_ps >= 1.0 and i < len(ps_idx)) or j >= len(un_idx):
            order.append(ps_idx[i]); i += 1; err_ps -= 1.0
        else:
            order.append(un_idx[j]); j += 1
    return order


def batches(order: list[int], batch_size: int) -> list[list[int]]:
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def cycling_batches(order: list[int], batch_size: int, n_batches: int) -> list[list[int]]:
    """Fixed number of batches, cycling through the order as needed."""
    out, buf = [], []
    idx = 0
    while len(out) < n_batches:
        buf.append(order[idx % len(order)])
        idx += 1
        if len(buf) == batch_size:
            out.append(buf)
            buf = []
    return out
