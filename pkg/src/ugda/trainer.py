"""Two-phase training orchestration and the comparison variants.

Phase 1 pretrains the chained heatmap/mask networks on the fully-labelled
source corpus.  Phase 2 finetunes with the adversarial objective: each
iteration takes one discriminator step (source pairs labelled 1, target
pairs 0, gradients confined to the discriminator) followed by one main
step (supervised terms plus the lambda-weighted fooling term, with
extreme-point predictions anchored wherever PSs exist).
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import audit, data, losses, points as points_mod, report
from .data import Study, TrainingData
from .errors import CheckpointError, InvalidArgumentError
from .heatmaps import render_heatmaps
from .losses import LossWeights
from .networks import (
    DiscriminatorConfig,
    HeatmapNet,
    PatchDiscriminator,
    SegNet,
    heatmap_net_config,
    seg_net_config,
    summed_channel,
)
from .phantom import CorpusManifest
from .points import ExtremePointSet, map_point_set
from .volume import (
    ProbabilityMap,
    SegmentationMask,
    Volume,
    binarize,
    largest_connected_component,
    load_volume,
    resample_volume,
    save_mask,
)

VARIANT_SUPERVISED = "supervised_dual"
VARIANT_DEXTR = "dextr"
VARIANT_ADA_NO_PS = "ada_mask_no_ps"
VARIANT_ADA_WITH_PS = "ada_mask_with_ps"
VARIANT_UGDA = "ugda"
VARIANTS = (
    VARIANT_SUPERVISED,
    VARIANT_DEXTR,
    VARIANT_ADA_NO_PS,
    VARIANT_ADA_WITH_PS,
    VARIANT_UGDA,
)
ADAPT_VARIANTS = (VARIANT_ADA_NO_PS, VARIANT_ADA_WITH_PS, VARIANT_UGDA)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    variant: str = VARIANT_UGDA
    ps_fraction: float = 1.0
    lambda_adv: float = 1e-4
    lr_main: float = 3e-3
    lr_disc: float = 3e-4
    plateau_factor: float = 0.1
    plateau_patience: int = 15
    max_epochs: int = 40
    adapt_epochs: int = 12
    seed: int = 0
    batch_source: int = 2
    batch_target: int = 2
    input_shape: tuple[int, int, int] = (64, 64, 24)
    sigma_vox: float = 5.0
    stage_channels: tuple[int, ...] = (8, 16, 32, 48)
    blocks_per_stage: tuple[int, ...] = (1, 1, 2, 2)
    norm_groups: int = 4
    disc_base_channels: int = 16
    disc_dilations: tuple[int, ...] = (2, 4)
    disc_source_input: str = "pred"  # or "gt": feed ground-truth source pairs
    intensity_window: tuple[float, float] | None = None
    binarize_threshold: float = 0.5
    largest_cc: bool = False
    deterministic: bool = True
    device: str | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidArgumentError(f"unknown variant {self.variant!r}")
        if min(self.lr_main, self.lr_disc) <= 0:
            raise InvalidArgumentError("learning rates must be positive")
        if self.plateau_patience < 1:
            raise InvalidArgumentError("plateau patience must be >= 1")
        if not 0 < self.ps_fraction <= 1:
            raise InvalidArgumentError("ps_fraction must be in (0, 1]")
        if self.lambda_adv < 0:
            raise InvalidArgumentError("lambda_adv must be >= 0")
        if self.disc_source_input not in ("pred", "gt"):
            raise InvalidArgumentError("disc_source_input must be 'pred' or 'gt'")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("input_shape", "stage_channels", "blocks_per_stage", "disc_dilations"):
            d[key] = list(d[key])
        if d["intensity_window"] is not None:
            d["intensity_window"] = list(d["intensity_window"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for key in ("input_shape", "stage_channels", "blocks_per_stage", "disc_dilations"):
            if key in d:
                d[key] = tuple(d[key])
        if d.get("intensity_window") is not None:
            d["intensity_window"] = tuple(d["intensity_window"])
        return cls(**d)


@dataclass
class TrainState:
    epoch: int = 0
    global_step: int = 0
    main_steps: int = 0
    disc_steps: int = 0
    best_val_dsc: float = float("-inf")
    best_epoch: int = -1
    lr_main: float = 3e-3
    lr_disc: float = 3e-4
    plateau_count: int = 0
    loss_means: dict = field(default_factory=dict)


def plateau_step(state: TrainState, val_dsc: float, config: TrainConfig) -> TrainState:
    """Reduce lr_main by the plateau factor after ``plateau_patience``
    consecutive epochs without strict validation improvement.  The
    discriminator learning rate never changes."""
    state = replace_state(state)
    if val_dsc > state.best_val_dsc:
        state.best_val_dsc = val_dsc
        state.best_epoch = state.epoch
        state.plateau_count = 0
    else:
        state.plateau_count += 1
        if state.plateau_count >= config.plateau_patience:
            state.lr_main *= config.plateau_factor
            state.plateau_count = 0
    return state


def replace_state(state: TrainState) -> TrainState:
    out = TrainState(**{k: v for k, v in asdict(state).items()})
    out.loss_means = dict(state.loss_means)
    return out


def resolve_device(config: TrainConfig) -> torch.device:
    name = config.device or os.environ.get("UGDA_DEVICE", "cpu")
    device = torch.device(name)
    if device.type == "cuda" and not torch.cuda.is_available():
        raise InvalidArgumentError("UGDA_DEVICE requests cuda but it is unavailable")
    return device


# --- networks, checkpoints --------------------------------------------------


def build_networks(config: TrainConfig, include_disc: bool = False) -> dict:
    common = dict(
        stage_channels=config.stage_channels,
        blocks_per_stage=config.blocks_per_stage,
        norm_groups=config.norm_groups,
    )
    nets: dict = {"heatmap": None, "seg": SegNet(seg_net_config(**common)), "disc": None}
    if config.variant != VARIANT_DEXTR:
        nets["heatmap"] = HeatmapNet(heatmap_net_config(**common))
    if include_disc:
        in_ch = 2 if config.variant == VARIANT_UGDA else 1
        nets["disc"] = PatchDiscriminator(
            DiscriminatorConfig(
                in_channels=in_ch,
                base_channels=config.disc_base_channels,
                dilations=config.disc_dilations,
            )
        )
    return nets


def main_parameters(nets: dict):
    params = list(nets["seg"].parameters())
    if nets["heatmap"] is not None:
        params += list(nets["heatmap"].parameters())
    return params


def arch_signature(config: TrainConfig) -> dict:
    return {
        "stage_channels": list(config.stage_channels),
        "blocks_per_stage": list(config.blocks_per_stage),
        "norm_groups": config.norm_groups,
        "disc_base_channels": config.disc_base_channels,
        "disc_dilations": list(config.disc_dilations),
        "input_shape": list(config.input_shape),
        "has_heatmap_net": config.variant != VARIANT_DEXTR,
    }


def save_checkpoint(
    path: str | Path,
    *,
    config: TrainConfig,
    nets: dict,
    optims: dict,
    state: TrainState,
    kind: str,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": config.to_dict(),
        "arch": arch_signature(config),
        "nets": {
            name: (net.state_dict() if net is not None else None)
            for name, net in nets.items()
        },
        "optims": {
            name: (opt.state_dict() if opt is not None else None)
            for name, opt in optims.items()
        },
        "state": asdict(state),
        "rng": {"torch": torch.get_rng_state()},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | Path, expected: TrainConfig | None = None) -> dict:
    path = Path(path)
    audit.record_read(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # corrupt archive
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version!r} incompatible with {CHECKPOINT_VERSION}"
        )
    if expected is not None:
        want = arch_signature(expected)
        got = dict(payload.get("arch", {}))
        got_cmp = {k: got.get(k) for k in want if k != "has_heatmap_net"}
        want_cmp = {k: v for k, v in want.items() if k != "has_heatmap_net"}
        if got_cmp != want_cmp:
            raise CheckpointError(
                f"checkpoint architecture {got} incompatible with config {want}"
            )
    return payload


def restore_networks(payload: dict, config: TrainConfig, include_disc: bool = False) -> dict:
    nets = build_networks(config, include_disc=include_disc)
    for name in ("heatmap", "seg"):
        sd = payload["nets"].get(name)
        if nets[name] is not None:
            if sd is None:
                raise CheckpointError(f"checkpoint lacks weights for {name} network")
            nets[name].load_state_dict(sd)
    if include_disc and payload["nets"].get("disc") is not None:
        try:
            nets["disc"].load_state_dict(payload["nets"]["disc"])
        except RuntimeError as exc:
            raise CheckpointError(f"discriminator weights incompatible: {exc}") from exc
    return nets


# --- logging -----------------------------------------------------------------

LOG_FIELDS = ("step", "phase", "loss_ext", "loss_seg", "loss_adv", "loss_d", "total")


class StepLogger:
    """Per-step CSV training log."""

    def __init__(self, path: str | Path, resume: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not resume or not self.path.exists():
            with open(self.path, "w", newline="") as f:
                csv.writer(f).writerow(LOG_FIELDS)

    def log(self, step: int, phase: str, parts: dict) -> None:
        row = [step, phase] + [
            f"{parts.get(k, 0.0):.6f}" for k in ("loss_ext", "loss_seg", "loss_adv", "loss_d")
        ] + [f"{parts.get('total', 0.0):.6f}"]
        with open(self.path, "a", newline="") as f:
            csv.writer(f).writerow(row)


# --- forward passes ----------------------------------------------------------


def _stack(tensors, device):
    return torch.stack(list(tensors)).to(device)


def chained_forward(nets: dict, images: torch.Tensor, anchored_ps=None):
    """Heatmap net then mask net; ``anchored_ps`` marks items whose heatmap
    prediction must be gradient-blocked before feeding downstream."""
    hm, hm_aux = nets["heatmap"](images)
    if anchored_ps is None:
        summed = summed_channel(hm)
    else:
        summed = losses.anchored_heatmap_input(hm, anchored_ps)
    prob, prob_aux = nets["seg"](images, summed)
    return hm, hm_aux, summed, prob, prob_aux


def supervised_batch_loss(nets: dict, items: list[Study], config: TrainConfig, device):
    """Phase-1 objective on fully-labelled source items."""
    images = _stack((it.image for it in items), device)
    masks = _stack((it.mask for it in items), device)
    if config.variant == VARIANT_DEXTR:
        summed_gt = _stack(
            (summed_channel(it.heatmap_target.unsqueeze(0)).squeeze(0) for it in items),
            device,
        )
        prob, prob_aux = nets["seg"](images, summed_gt)
        sup = losses.supervised_loss(seg=(prob, masks, prob_aux))
        parts = {"loss_seg": float(sup.detach()), "loss_ext": 0.0}
    else:
        targets = _stack((it.heatmap_target for it in items), device)
        hm, hm_aux, _, prob, prob_aux = chained_forward(nets, images)
        seg_term = losses.segmentation_loss(prob, masks, prob_aux)
        ext_term = losses.extreme_point_loss(hm, targets, hm_aux)
        sup = seg_term + ext_term
        parts = {"loss_seg": float(seg_term.detach()), "loss_ext": float(ext_term.detach())}
    parts["total"] = float(sup.detach())
    return sup, parts


def adapt_forwards(
    nets: dict, src_items: list[Study], tgt_items: list[Study], config: TrainConfig, device
) -> dict:
    """Both forward passes of one adaptation iteration."""
    fw = {}
    fw["src_images"] = _stack((it.image for it in src_items), device)
    fw["src_masks"] = _stack((it.mask for it in src_items), device)
    fw["src_targets"] = _stack((it.heatmap_target for it in src_items), device)
    (fw["src_hm"], fw["src_hm_aux"], fw["src_summed"], fw["src_prob"],
     fw["src_prob_aux"]) = chained_forward(nets, fw["src_images"])

    fw["tgt_images"] = _stack((it.image for it in tgt_items), device)
    ps_present = [it.ps_selected for it in tgt_items]
    (fw["tgt_hm"], fw["tgt_hm_aux"], fw["tgt_anchored"], fw["tgt_prob"],
     fw["tgt_prob_aux"]) = chained_forward(nets, fw["tgt_images"], anchored_ps=ps_present)
    return fw


def adapt_supervised_loss(
    fw: dict, tgt_items: list[Study], config: TrainConfig, device
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Supervised terms of the adaptation objective: mask loss on source
    items, heatmap loss on source plus PS-selected target items."""
    seg_term = losses.segmentation_loss(fw["src_prob"], fw["src_masks"], fw["src_prob_aux"])
    ext_preds, ext_targets = [fw["src_hm"]], [fw["src_targets"]]
    ext_aux = [fw["src_hm_aux"]]
    if config.variant != VARIANT_ADA_NO_PS:
        ps_idx = [i for i, it in enumerate(tgt_items) if it.ps_selected]
        if ps_idx:
            ext_preds.append(fw["tgt_hm"][ps_idx])
            ext_targets.append(
                _stack((tgt_items[i].heatmap_target for i in ps_idx), device)
            )
            ext_aux.append([a[ps_idx] for a in fw["tgt_hm_aux"]])
    ext_pred = torch.cat(ext_preds)
    ext_target = torch.cat(ext_targets)
    ext_aux_cat = [torch.cat(parts) for parts in zip(*ext_aux)] if ext_aux[0] else []
    ext_term = losses.extreme_point_loss(ext_pred, ext_target, ext_aux_cat)
    return seg_term + ext_term, seg_term, ext_term


def adapt_iteration(
    nets: dict,
    optims: dict,
    src_items: list[Study],
    tgt_items: list[Study],
    config: TrainConfig,
    device,
) -> dict:
    """One discriminator step, then one main step."""
    use_pair = config.variant == VARIANT_UGDA
    weights = LossWeights(lambda_adv=config.lambda_adv)
    fw = adapt_forwards(nets, src_items, tgt_items, config, device)

    # discriminator step: gradients reach only discriminator parameters
    if config.disc_source_input == "gt":
        src_pair = (fw["src_masks"], _render_gt_summed(src_items, device))
    else:
        src_pair = (fw["src_prob"].detach(), fw["src_summed"].detach())
    d_src = nets["disc"](src_pair[0], src_pair[1] if use_pair else None)
    d_tgt = nets["disc"](
        fw["tgt_prob"].detach(), fw["tgt_anchored"].detach() if use_pair else None
    )
    loss_d = losses.discriminator_loss(d_src, d_tgt)
    optims["disc"].zero_grad()
    loss_d.backward()
    optims["disc"].step()

    # main step: supervised terms + lambda-weighted adversarial term
    sup, seg_term, ext_term = adapt_supervised_loss(fw, tgt_items, config, device)
    adv_value = 0.0
    if config.lambda_adv > 0:
        losses.check_target_roles([it.role for it in tgt_items])
        with losses.frozen_parameters(nets["disc"]):
            adv_logits = nets["disc"](
                fw["tgt_prob"], fw["tgt_anchored"] if use_pair else None
            )
            adv = losses.adversarial_loss(adv_logits)
        total = losses.total_loss(sup, adv, weights)
        adv_value = float(adv.detach())
    else:
        total = losses.total_loss(sup, None, weights)
    optims["main"].zero_grad()
    total.backward()
    optims["main"].step()

    return {
        "loss_seg": float(seg_term.detach()),
        "loss_ext": float(ext_term.detach()),
        "loss_adv": adv_value,
        "loss_d": float(loss_d.detach()),
        "total": float(total.detach()),
    }


def _render_gt_summed(items: list[Study], device) -> torch.Tensor:
    return _stack(
        (summed_channel(it.heatmap_target.unsqueeze(0)).squeeze(0) for it in items),
        device,
    )


# --- validation and inference --------------------------------------------------


@torch.no_grad()
def validation_dsc(nets: dict, studies: list[Study], config: TrainConfig, device) -> float:
    """Mean DSC of thresholded predictions on mask-labelled studies."""
    if not studies:
        return 0.0
    scores = []
    for it in studies:
        images = it.image.unsqueeze(0).to(device)
        if config.variant == VARIANT_DEXTR:
            summed = summed_channel(it.heatmap_target.unsqueeze(0)).to(device)
            prob, _ = nets["seg"](images, summed)
        else:
            _, _, _, prob, _ = chained_forward(nets, images)
        pred = (prob >= config.binarize_threshold).float()
        mask = it.mask.unsqueeze(0).to(device)
        inter = float((pred * mask).sum())
        denom = float(pred.sum() + mask.sum())
        scores.append(1.0 if denom == 0 else 2.0 * inter / denom)
    return float(np.mean(scores))


@torch.no_grad()
def infer_probability(
    nets: dict,
    volume: Volume,
    config: TrainConfig,
    ps: ExtremePointSet | None = None,
    device=None,
) -> ProbabilityMap:
    """Predict a native-grid probability map for one volume.

    With ``ps`` given, ground-truth heatmaps rendered from those points
    feed the mask net (interactive mode); otherwise the heatmap net's
    predictions do.
    """
    device = device or resolve_device(config)
    image = data.prepare_image(volume, config.input_shape, config.intensity_window)
    images = image.unsqueeze(0).to(device)
    if ps is not None:
        target = data.heatmap_target_tensor(
            ps, volume.shape, config.input_shape, config.sigma_vox
        )
        summed = summed_channel(target.unsqueeze(0)).to(device)
    else:
        if nets["heatmap"] is None:
            raise InvalidArgumentError(
                "this checkpoint has no heatmap network; extreme points required"
            )
        hm, _ = nets["heatmap"](images)
        summed = summed_channel(hm)
    prob, _ = nets["seg"](images, summed)
    grid = prob.squeeze(0).squeeze(0).cpu().numpy().astype(np.float32)
    model_spacing = tuple(
        s * n / t for s, n, t in zip(volume.spacing_mm, volume.shape, config.input_shape)
    )
    pvol = Volume(grid, model_spacing, volume.study_id)
    if tuple(volume.shape) != tuple(config.input_shape):
        pvol = resample_volume(pvol, volume.shape, mode="linear")
        pvol = Volume(
            np.clip(pvol.voxels, 0.0, 1.0), volume.spacing_mm, volume.study_id
        )
    return ProbabilityMap(pvol.voxels, volume.spacing_mm, volume.study_id)


def infer_mask(
    nets: dict,
    volume: Volume,
    config: TrainConfig,
    ps: ExtremePointSet | None = None,
    device=None,
) -> SegmentationMask:
    prob = infer_probability(nets, volume, config, ps, device)
    mask = binarize(prob, config.binarize_threshold)
    if config.largest_cc:
        mask = largest_connected_component(mask)
    return mask


# --- phase 1: supervised pretraining -----------------------------------------


def pretrain_source(
    manifest: CorpusManifest,
    config: TrainConfig,
    run_dir: str | Path,
    resume_from: str | Path | None = None,
) -> Path:
    """Train the supervised baseline on the source corpus.

    Checkpoints the best internal-validation DSC; stops at max_epochs or
    after 2x patience epochs without improvement.  Returns the path of
    the best checkpoint.
    """
    if not manifest.source_studies:
        raise InvalidArgumentError("manifest has no source studies")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    device = resolve_device(config)
    torch.manual_seed(config.seed)

    dataset = data.load_training_data(
        manifest,
        input_shape=config.input_shape,
        sigma_vox=config.sigma_vox,
        intensity_window=config.intensity_window,
        seed=config.seed,
        include_target=False,
    )
    nets = build_networks(config)
    for net in nets.values():
        if net is not None:
            net.to(device).train()
    optims = {"main": torch.optim.Adam(main_parameters(nets), lr=config.lr_main)}
    state = TrainState(lr_main=config.lr_main, lr_disc=config.lr_disc)

    if resume_from is not None:
        payload = load_checkpoint(resume_from, expected=config)
        nets = restore_networks(payload, config)
        for net in nets.values():
            if net is not None:
                net.to(device).train()
        optims = {"main": torch.optim.Adam(main_parameters(nets), lr=config.lr_main)}
        optims["main"].load_state_dict(payload["optims"]["main"])
        state = TrainState(**payload["state"])
        torch.set_rng_state(payload["rng"]["torch"])

    logger = StepLogger(run_dir / "training_log.csv", resume=resume_from is not None)
    best_path = run_dir / "checkpoint_best.pt"
    last_path = run_dir / "checkpoint_last.pt"

    while state.epoch < config.max_epochs:
        order = data.epoch_order(len(dataset.source_train), config.seed, state.epoch)
        for batch in data.batches(order, config.batch_source):
            items = [dataset.source_train[i] for i in batch]
            loss, parts = supervised_batch_loss(nets, items, config, device)
            optims["main"].zero_grad()
            loss.backward()
            optims["main"].step()
            state.global_step += 1
            state.main_steps += 1
            logger.log(state.global_step, "pretrain", parts)
        state.epoch += 1
        val = validation_dsc(nets, dataset.source_val, config, device)
        prev_best = state.best_val_dsc
        state = plateau_step(state, val, config)
        for g in optims["main"].param_groups:
            g["lr"] = state.lr_main
        if val > prev_best:
            save_checkpoint(
                best_path, config=config, nets=nets, optims=optims, state=state,
                kind="pretrain",
            )
        save_checkpoint(
            last_path, config=config, nets=nets, optims=optims, state=state,
            kind="pretrain",
        )
        if state.epoch - state.best_epoch >= 2 * config.plateau_patience:
            break
    if not best_path.exists():
        save_checkpoint(
            best_path, config=config, nets=nets, optims=optims, state=state,
            kind="pretrain",
        )
    return best_path


# --- phase 2: adversarial finetuning ------------------------------------------


def adapt_target(
    checkpoint: str | Path,
    manifest: CorpusManifest,
    config: TrainConfig,
    run_dir: str | Path,
) -> Path:
    """Finetune a pretrained checkpoint with the adversarial objective."""
    if config.variant not in ADAPT_VARIANTS:
        raise InvalidArgumentError(
            f"variant {config.variant!r} does not run the adaptation phase"
        )
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    device = resolve_device(config)
    torch.manual_seed(config.seed + 1)

    payload = load_checkpoint(checkpoint, expected=config)
    nets = restore_networks(payload, config, include_disc=True)
    for net in nets.values():
        if net is not None:
            net.to(device).train()

    dataset = data.load_training_data(
        manifest,
        input_shape=config.input_shape,
        sigma_vox=config.sigma_vox,
        intensity_window=config.intensity_window,
        seed=config.seed,
        ps_fraction=config.ps_fraction,
        include_target=True,
        use_target_ps=config.variant != VARIANT_ADA_NO_PS,
    )
    if not dataset.target:
        raise InvalidArgumentError("manifest has no target studies to adapt to")

    optims = {
        "main": torch.optim.Adam(main_parameters(nets), lr=config.lr_main),
        "disc": torch.optim.Adam(nets["disc"].parameters(), lr=config.lr_disc),
    }
    state = TrainState(lr_main=config.lr_main, lr_disc=config.lr_disc)
    logger = StepLogger(run_dir / "training_log.csv")
    final_path = run_dir / "checkpoint_adapted.pt"

    for epoch in range(config.adapt_epochs):
        tgt_order = data.stratified_target_order(dataset.target, config.seed, epoch)
        tgt_batches = data.batches(tgt_order, config.batch_target)
        src_order = data.epoch_order(
            len(dataset.source_train), config.seed, epoch, stream=1
        )
        src_batches = data.cycling_batches(
            src_order, config.batch_source, len(tgt_batches)
        )
        for src_b, tgt_b in zip(src_batches, tgt_batches):
            parts = adapt_iteration(
                nets,
                optims,
                [dataset.source_train[i] for i in src_b],
                [dataset.target[i] for i in tgt_b],
                config,
                device,
            )
            state.global_step += 1
            state.main_steps += 1
            state.disc_steps += 1
            logger.log(state.global_step, "adapt", parts)
        state.epoch += 1
        val = validation_dsc(nets, dataset.source_val, config, device)
        state = plateau_step(state, val, config)
        for g in optims["main"].param_groups:
            g["lr"] = state.lr_main
        # lr_disc stays constant by contract
        save_checkpoint(
            final_path, config=config, nets=nets, optims=optims, state=state,
            kind="adapt",
        )
    return final_path


# --- full variant runs ---------------------------------------------------------


def run_variant(
    manifest: CorpusManifest,
    config: TrainConfig,
    run_dir: str | Path,
    pretrained: str | Path | None = None,
) -> report.RunReport:
    """Train a variant end to end, infer on evaluation studies, and score.

    Hidden evaluation masks are only opened by the scoring step; the
    training phase runs under a file-access recording whose hidden-mask
    hit count is stored in the report metadata.
    """
    if not manifest.evaluation_studies or any(
        ref.hidden_mask is None for ref in manifest.evaluation_studies
    ):
        raise InvalidArgumentError("manifest lacks evaluation studies with hidden masks")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n")

    with audit.recording() as reads:
        if pretrained is None:
            ckpt = pretrain_source(manifest, config, run_dir / "pretrain")
        else:
            ckpt = Path(pretrained)
        if config.variant in ADAPT_VARIANTS:
            ckpt = adapt_target(ckpt, manifest, config, run_dir / "adapt")
    hidden_reads = [p for p in reads if "hidden_mask" in p]

    payload = load_checkpoint(ckpt, expected=config)
    nets = restore_networks(payload, config)
    device = resolve_device(config)
    for net in nets.values():
        if net is not None:
            net.to(device).eval()

    pred_dir = run_dir / "predictions"
    for ref in manifest.evaluation_studies:
        vol = load_volume(manifest.resolve(ref.volume), ref.study_id)
        ps = None
        if config.variant == VARIANT_DEXTR:
            ps = points_mod.load_points(manifest.resolve(ref.ps))
        pred = infer_mask(nets, vol, config, ps, device)
        save_mask(pred_dir / f"{ref.study_id}.nii.gz", pred)

    eval_root = manifest.resolve(manifest.evaluation_studies[0].hidden_mask).parent
    ps_root = manifest.resolve(manifest.evaluation_studies[0].ps).parent
    rep = report.evaluate_run(
        pred_dir,
        eval_root,
        ps_root,
        variant=config.variant,
        ps_fraction=config.ps_fraction,
        metadata={
            "seed": config.seed,
            "checkpoint": str(ckpt),
            "hidden_mask_reads_during_training": len(hidden_reads),
        },
    )
    report.save_report(run_dir / "report.json", rep)
    report.save_per_volume_csv(run_dir / "per_volume.csv", rep)
    return rep
