"""Command-line interface.

Subcommands: import (external .npz tiles to the canonical raster layout),
stats, featurize, train, predict, evaluate, gridsearch, report. The data
root comes from --data-root or $FLOODPIX_DATA_ROOT.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bands as B
from .features import build_feature_matrix, parse_feature_space
from .harness.config import DATA_ROOT_ENV, load_config, load_snapshot
from .harness.evaluate import (
    correlation_report,
    evaluate_matrix,
    final_eval,
    load_any_model,
    predict_tile,
    save_any_model,
    train_model,
)
from .harness.exports import export_boxplot_data, export_prediction_raster
from .harness.grid import load_results, run_grid_search, select_best, write_selection
from .metrics import regionwise_to_csv, reports_to_csv
from .raster import (
    dataset_statistics,
    iter_tiles,
    load_manifest,
    save_manifest,
    write_labels,
    write_raster,
)


def _data_root(args) -> Path:
    root = args.data_root or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise SystemExit(f"no data root given; use --data-root or ${DATA_ROOT_ENV}")
    return Path(root)


def _manifest_path(root: Path, name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    candidate = root / "manifests" / f"{name}.json"
    if candidate.exists():
        return candidate
    return root / name


def _load_split(args, name: str):
    root = _data_root(args)
    return load_manifest(_manifest_path(root, name), data_root=root)


def _parse_hyper(pairs: list[str]) -> dict:
    hyper = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise SystemExit(f"bad --hyper {pair!r}; expected key=value")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        hyper[key.strip()] = value
    return hyper


def cmd_import(args):
    root = _data_root(args)
    sources = sorted(Path(args.source).glob("*.npz"))
    if not sources:
        raise SystemExit(f"no .npz tiles under {args.source}")
    split_entries: dict[str, list[dict]] = {}
    for src in sources:
        with np.load(src, allow_pickle=False) as archive:
            tile_id = str(archive["tile_id"])
            region = str(archive["region"])
            split = str(archive["split"])
            grids: dict[str, np.ndarray] = {}
            if "optical" in archive:
                cube = archive["optical"]
                if cube.shape[0] != len(B.OPTICAL_BANDS):
                    raise SystemExit(f"{src}: optical cube must have {len(B.OPTICAL_BANDS)} channels")
                grids.update({band: cube[i] for i, band in enumerate(B.OPTICAL_BANDS)})
            if "sar" in archive:
                cube = archive["sar"]
                if cube.shape[0] != len(B.SAR_BANDS):
                    raise SystemExit(f"{src}: sar cube must have {len(B.SAR_BANDS)} channels")
                grids.update({band: cube[i] for i, band in enumerate(B.SAR_BANDS)})
            if not grids:
                raise SystemExit(f"{src}: neither 'optical' nor 'sar' array present")
            labels = archive["labels"]
        write_raster(root / "rasters" / tile_id, grids, tile_id=tile_id, region=region)
        write_labels(root / "labels" / tile_id, labels)
        split_entries.setdefault(split, []).append(
            {
                "tile_id": tile_id,
                "region": region,
                "rasters": [f"rasters/{tile_id}.f32"],
                "labels": f"labels/{tile_id}.i8",
            }
        )
    for split, entries in sorted(split_entries.items()):
        path = save_manifest(root / "manifests" / f"{split}.json", entries)
        print(f"{split}: {len(entries)} tiles -> {path}")


def cmd_stats(args):
    manifests = [_load_split(args, name) for name in args.manifest]
    stats = dataset_statistics(*manifests)
    doc = {
        "class_fractions": stats.class_fractions,
        "region_fractions": stats.region_fractions,
        "total_pixels": stats.total_pixels,
        "valid_pixels": stats.valid_pixels,
    }
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)


def cmd_featurize(args):
    manifest = _load_split(args, args.manifest)
    spec = parse_feature_space(args.feature_space)
    matrix = build_feature_matrix(spec, list(iter_tiles(manifest)), speckle=args.speckle_filter)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        out,
        values=matrix.values,
        labels=matrix.labels,
        pixel_index=matrix.pixel_index,
        column_names=np.array(matrix.column_names),
        tile_ids=np.array([ts.tile_id for ts in matrix.tile_slices]),
        regions=np.array([ts.region for ts in matrix.tile_slices]),
        tile_starts=np.array([ts.start for ts in matrix.tile_slices]),
        tile_stops=np.array([ts.stop for ts in matrix.tile_slices]),
    )
    print(f"{matrix.n_rows} rows x {matrix.n_features} features ({spec.name}) -> {out}")


def _save_bundle(path: Path, model, feature_space: str, speckle: bool):
    model_path = Path(path)
    save_any_model(model, model_path)
    doc = json.loads(model_path.read_text())
    doc["feature_space"] = feature_space
    doc["speckle_filter"] = speckle
    model_path.write_text(json.dumps(doc, indent=2, sort_keys=True))


def _load_bundle(path: Path):
    doc = json.loads(Path(path).read_text())
    model = load_any_model(path)
    return model, doc.get("feature_space"), doc.get("speckle_filter", False)


def cmd_train(args):
    manifest = _load_split(args, args.manifest)
    spec = parse_feature_space(args.feature_space)
    matrix = build_feature_matrix(spec, list(iter_tiles(manifest)), speckle=args.speckle_filter)
    model = train_model(args.model, _parse_hyper(args.hyper), matrix, args.seed)
    _save_bundle(args.out, model, spec.name, args.speckle_filter)
    print(f"trained {args.model} on {matrix.n_rows} pixels ({spec.name}) -> {args.out}")


def cmd_predict(args):
    model, feature_space, speckle = _load_bundle(args.model)
    if args.feature_space:
        feature_space = args.feature_space
    if not feature_space:
        raise SystemExit("model file carries no feature space; pass --feature-space")
    spec = parse_feature_space(feature_space)
    manifest = _load_split(args, args.manifest)
    out_dir = Path(args.out_dir)
    for tile, truth in iter_tiles(manifest):
        if args.no_png:
            pred = predict_tile(model, spec, tile, speckle=speckle)
            raster = write_labels(out_dir / tile.tile_id, pred)
            print(f"{tile.tile_id}: {raster}")
        else:
            paths = export_prediction_raster(
                model, spec, tile, truth, out_dir / tile.tile_id, speckle=speckle
            )
            print(f"{tile.tile_id}: {paths['raster']} + {paths['png']}")


def cmd_evaluate(args):
    model, feature_space, speckle = _load_bundle(args.model)
    if args.feature_space:
        feature_space = args.feature_space
    if not feature_space:
        raise SystemExit("model file carries no feature space; pass --feature-space")
    spec = parse_feature_space(feature_space)
    manifest = _load_split(args, args.manifest)
    matrix = build_feature_matrix(spec, list(iter_tiles(manifest)), speckle=speckle)
    report, region_report, tile_counts = evaluate_matrix(model, matrix)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "split": manifest.split_name,
        "feature_space": spec.name,
        "report": report.as_dict(),
        "regionwise": region_report.as_dict(),
        "correlations": correlation_report(region_report),
        "tile_counts": [
            {"tile_id": t, "region": r, **c.as_dict()} for t, r, c in tile_counts
        ],
    }
    (out_dir / "evaluation.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    (out_dir / "metrics.csv").write_text(reports_to_csv([({"split": manifest.split_name}, report)]))
    (out_dir / "regionwise.csv").write_text(regionwise_to_csv(region_report))
    print(json.dumps({"total_iou": report.total.iou, "mean_iou": report.mean.iou}, indent=2))
    print(f"reports -> {out_dir}")


def cmd_gridsearch(args):
    overrides = {
        "data_root": args.data_root,
        "output_dir": args.output_dir,
        "jobs": args.jobs,
    }
    config = load_config(args.config, overrides)
    result = run_grid_search(config)
    selection = select_best(result)
    path = write_selection(config.output_dir, selection)
    winner = selection["winner"]
    print(f"{len(result.rows)} cells ({len(result.ok_rows)} ok) -> {config.output_dir}")
    print(
        f"winner: {winner['model']} on {winner['feature_space']}"
        f" mean IoU {winner['mean_iou']:.4f} (hyper {winner['hyper']})"
    )
    print(f"selection -> {path}")
    if args.final:
        summary = final_eval(config, winner)
        for split, seed_mean in summary["splits"].items():
            print(f"final {split}: total IoU {seed_mean['iou_total']:.4f}")


def cmd_report(args):
    run_dir = Path(args.run_dir)
    config = load_snapshot(run_dir)
    result = load_results(run_dir)
    selection = select_best(result)
    path = write_selection(run_dir, selection)
    print(f"selection -> {path}")
    group_bys = args.group_by or ["feature_space"]
    for group_by in group_bys:
        out_csv = run_dir / "reports" / f"boxplot_{group_by}.csv"
        export_boxplot_data(result, group_by, out_csv)
        print(f"boxplot ({group_by}) -> {out_csv}")
    if args.final:
        summary = final_eval(config, selection["winner"], out_dir=run_dir)
        for split, seed_mean in summary["splits"].items():
            print(f"final {split}: total IoU {seed_mean['iou_total']:.4f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floodpix", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--data-root", default=None, help=f"data root (default ${DATA_ROOT_ENV})")

    p = sub.add_parser("import", help="convert .npz tiles to the canonical raster layout")
    add_common(p)
    p.add_argument("source", help="directory of .npz tile archives")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("stats", help="dataset class/region statistics")
    add_common(p)
    p.add_argument("--manifest", nargs="+", required=True, help="split names or manifest paths")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("featurize", help="materialize a feature matrix as .npz")
    add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--feature-space", required=True)
    p.add_argument("--speckle-filter", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train one model on a split")
    add_common(p)
    p.add_argument("--manifest", default="train")
    p.add_argument("--feature-space", required=True)
    p.add_argument("--model", required=True, choices=("gbdt", "naive_bayes", "lda", "qda", "sgd"))
    p.add_argument("--hyper", action="append", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--speckle-filter", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="export per-tile prediction rasters and overlays")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--feature-space", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-png", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metric reports for a model on a split")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--feature-space", default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gridsearch", help="run a seeded grid search from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--data-root", default=None)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--final", action="store_true", help="run the final evaluation on the winner")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("report", help="selection, box plots and final reports for a run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--group-by", action="append")
    p.add_argument("--final", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except BrokenPipeError:  # pragma: no cover
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
