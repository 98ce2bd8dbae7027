"""Command-line interface.

Subcommands: gen-data, train, eval, infer, report, serve.  The report
path writes the delimited tables and the box-whisker figure side by side.
The UGDA_DEVICE environment variable selects the compute device.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import report as report_mod
from .phantom import build_corpus, corpus_config_from_dict, load_manifest
from .points import load_points
from .trainer import (
    TrainConfig,
    infer_mask,
    load_checkpoint,
    restore_networks,
    run_variant,
)
from .volume import load_volume, save_mask


def _cmd_gen_data(args) -> int:
    config = corpus_config_from_dict(json.loads(Path(args.config).read_text()))
    manifest = build_corpus(config)
    print(
        f"wrote corpus to {manifest.root}: "
        f"{len(manifest.source_studies)} source, "
        f"{manifest.n_ps} target PS + {manifest.n_unlabelled} unlabelled, "
        f"{len(manifest.evaluation_studies)} evaluation"
    )
    return 0


def _cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    overrides = {}
    if args.config:
        overrides.update(json.loads(Path(args.config).read_text()))
    for key, value in (
        ("variant", args.variant),
        ("ps_fraction", args.ps_fraction),
        ("seed", args.seed),
        ("lambda_adv", args.lambda_adv),
        ("max_epochs", args.max_epochs),
        ("adapt_epochs", args.adapt_epochs),
    ):
        if value is not None:
            overrides[key] = value
    config = TrainConfig.from_dict({**TrainConfig().to_dict(), **overrides})
    run_dir = Path(args.out)
    rep = run_variant(manifest, config, run_dir, pretrained=args.pretrained)
    run_dir.joinpath("run_meta.json").write_text(
        json.dumps({"manifest": str(Path(args.manifest).resolve())}, indent=2) + "\n"
    )
    agg = rep.aggregates
    print(
        f"{config.variant} (PS {config.ps_fraction:.0%}, seed {config.seed}): "
        f"DSC {agg['dsc_mean']:.4f} +/- {agg['dsc_std']:.4f}, "
        f"MXA {agg['mxa_mean']:.2f} +/- {agg['mxa_std']:.2f} mm"
    )
    return 0


def _cmd_eval(args) -> int:
    run_dir = Path(args.run)
    meta = json.loads((run_dir / "run_meta.json").read_text())
    config = TrainConfig.from_dict(json.loads((run_dir / "config.json").read_text()))
    manifest = load_manifest(meta["manifest"])
    eval_ref = manifest.evaluation_studies[0]
    rep = report_mod.evaluate_run(
        run_dir / "predictions",
        manifest.resolve(eval_ref.hidden_mask).parent,
        manifest.resolve(eval_ref.ps).parent,
        variant=config.variant,
        ps_fraction=config.ps_fraction,
    )
    report_mod.save_report(run_dir / "report.json", rep)
    report_mod.save_per_volume_csv(run_dir / "per_volume.csv", rep)
    agg = rep.aggregates
    print(
        f"{config.variant}: DSC {agg['dsc_mean']:.4f} (min {agg['dsc_min']:.4f}), "
        f"MXA {agg['mxa_mean']:.2f} mm over {len(rep.per_volume)} volumes"
    )
    return 0


def _cmd_infer(args) -> int:
    payload = load_checkpoint(args.ckpt)
    config = TrainConfig.from_dict(payload["config"])
    if args.largest_cc:
        config = TrainConfig.from_dict({**config.to_dict(), "largest_cc": True})
    nets = restore_networks(payload, config)
    for net in nets.values():
        if net is not None:
            net.eval()
    volume = load_volume(args.volume)
    ps = load_points(args.ps) if args.ps else None
    mask = infer_mask(nets, volume, config, ps=ps)
    save_mask(args.out, mask)
    print(f"wrote {args.out} ({int(mask.voxels.sum())} foreground voxels)")
    return 0


def _cmd_report(args) -> int:
    reports = [report_mod.load_report(Path(r) / "report.json") for r in args.runs]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = report_mod.rows_from_reports(reports)
    csv_text, table_text = report_mod.make_table(rows)
    (out_dir / "table.csv").write_text(csv_text)
    (out_dir / "table.txt").write_text(table_text)
    groups = {}
    for rep in reports:
        label = rep.variant
        if rep.variant not in ("supervised_dual",):
            label = f"{rep.variant}@{rep.ps_fraction:.0%}"
        groups.setdefault(label, []).extend(
            r.dsc for r in rep.per_volume if not r.empty_pred
        )
    report_mod.render_box_plot(groups, out_dir / "dsc_box.png")
    if args.with_reference:
        ref_csv, ref_text = report_mod.make_table(list(report_mod.REFERENCE_RESULTS))
        (out_dir / "reference_table.csv").write_text(ref_csv)
        (out_dir / "reference_table.txt").write_text(ref_text)
    print(table_text)
    print(f"wrote table.csv, table.txt, dsc_box.png to {out_dir}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(
        args.data_dir,
        ckpt=args.ckpt,
        port=args.port,
        host=args.host,
        window=(args.window_lo, args.window_hi),
    )
    return 0


def _cmd_benchmark(args) -> int:
    from .benchmark import benchmark_table, run_benchmark

    result = run_benchmark(args.out, seeds=tuple(args.seeds), refresh=args.refresh)
    csv_text, table_text = benchmark_table(result["cells"])
    out_dir = Path(args.out)
    (out_dir / "table.csv").write_text(csv_text)
    (out_dir / "table.txt").write_text(table_text)
    groups = {}
    for cell in result["cells"].values():
        label = f"{cell.variant}@{cell.ps_fraction:.0%}"
        if cell.variant == "supervised_dual":
            label = cell.variant
        groups.setdefault(label, []).extend(cell.per_volume_dsc)
    report_mod.render_box_plot(groups, out_dir / "dsc_box.png")
    print(table_text)
    verdict = result["checks"]["verdict"]
    print(f"ordering held in {verdict['ordering_pass_count']} of "
          f"{verdict['seeds_evaluated']} seeds; "
          f"ps-fraction robustness in {verdict['ps_fraction_pass_count']}")
    return 0 if verdict["ordering_ok"] and verdict["ps_fraction_ok"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ugda",
        description="Extreme-point-guided segmentation annotation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a phantom corpus from a config JSON")
    p.add_argument("--config", required=True, help="corpus config JSON")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a variant and score it on the evaluation split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--variant", choices=["supervised_dual", "dextr", "ada_mask_no_ps",
                                          "ada_mask_with_ps", "ugda"])
    p.add_argument("--ps-fraction", type=float, dest="ps_fraction")
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda-adv", type=float, dest="lambda_adv")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--adapt-epochs", type=int, dest="adapt_epochs")
    p.add_argument("--config", help="training config JSON (flags override it)")
    p.add_argument("--pretrained", help="reuse an existing phase-1 checkpoint")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="re-score an existing run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("infer", help="segment one volume with a trained checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--volume", required=True)
    p.add_argument("--ps", help="extreme-point JSON; omit to use predicted heatmaps")
    p.add_argument("--largest-cc", action="store_true", dest="largest_cc",
                   help="keep only the largest connected component")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("report", help="tabulate runs and render the DSC box plot")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", default="report_out")
    p.add_argument("--with-reference", action="store_true",
                   help="also write the published full-scale reference table")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--ckpt")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--window-lo", type=float, default=0.0)
    p.add_argument("--window-hi", type=float, default=1.0)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("benchmark", help="run the cached variant-comparison benchmark")
    p.add_argument("--out", default="runs/benchmark")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--refresh", action="store_true", help="ignore cached runs")
    p.set_defaults(func=_cmd_benchmark)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
