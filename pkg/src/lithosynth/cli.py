# -*- coding: utf-8 -*-
"""
Command-line entry point.

Subcommands
-----------
generate CONFIG
    Library, defect plan, rendering, annotation and export in one run.
stats DATASET_DIR
    Instance density grid and size histogram of a dataset.
evaluate GT PREDS
    AP@0.5 per class and mAP@0.5 of a prediction file.
render-one CONFIG LAYOUT_PGM
    Renders one layout image.
inspect-record RECORDS_FILE ID
    Prints one defect record and re-verifies it against the library.
default-config
    Prints the default configuration file.

Exit status is 0 on success, 2 on a configuration error and 3 on any other
pipeline error.
"""

import argparse
import csv
from dataclasses import replace
import io
import logging
import os
import sys

from lithosynth.dataset.evaluate import evaluate, format_report_table
from lithosynth.dataset.export import (
    DatasetManifest,
    ImageEntry,
    dataset_stats,
    deformation_summary,
    export_coco,
    read_dataset,
    split_dataset,
    summary_table,
    write_stats,
)
from lithosynth.geometry.layout import build_library, load_layout, read_library, write_library
from lithosynth.geometry.morphology import DEFAULT_MEEF, perturb
from lithosynth.geometry.topology import classify_rendered
from lithosynth.synthesis.annotate import annotate_pair
from lithosynth.synthesis.injection import (
    execute_plan,
    generate_plan,
    read_records,
    reverify_record,
    with_necking_width,
    with_rendered_class,
    write_records,
    write_skip_report,
)
from lithosynth.synthesis.renderer import (
    epe_correlation,
    measure_epe,
    measure_necking,
    render,
    render_overlay,
    save_rendered,
)
from lithosynth.util.config import (
    PipelineConfig,
    config_hash,
    dump_config,
    load_config,
    reproducible_config,
    with_overrides,
)
from lithosynth.util.exceptions import (
    DatasetIOError,
    EmptyAnnotationError,
    InvalidConfigError,
    LithosynthError,
    WindowEmptyError,
)
from lithosynth.util.helper import canonical_json, derive_seed, ordered_parallel_map
from lithosynth.util.imageio import write_ppm

logger = logging.getLogger(__name__)

IMAGE_DIR = "images"
LAYOUT_DIR = "layouts"


def render_seed(master_seed, layout_id):
    """
    Noise seed of the renders of one base layout.

    The base render and every defect render of a layout share it, so the
    noise cancels in their difference.
    """
    return derive_seed(master_seed, layout_id, "render")


def _render_layout(args):
    """
    Renders a base layout and its accepted defects, then annotates each pair.

    Runs in a worker process; returns the records (with their rendered
    class) in plan order, the annotated pairs and the excluded ones.
    """
    layout_id, layout, pairs, cfg, out_dir = args
    image_dir = os.path.join(out_dir, IMAGE_DIR)
    noise_seed = render_seed(cfg.master_seed, layout_id)
    b = render(layout, cfg.render, noise_seed, layout_id)
    save_rendered(os.path.join(image_dir, layout_id), b)
    records, annotated, excluded = [], [], []
    for a_prime, record in pairs:
        b_prime = render(a_prime, cfg.render, noise_seed, layout_id)
        record = with_rendered_class(
            record, classify_rendered(b, b_prime, record.spec, cfg.classify)
        )
        if record.spec.sigma < 0:
            try:
                record = with_necking_width(
                    record, measure_necking(b, b_prime, record, cfg.render)
                )
            except WindowEmptyError as err:
                logger.warning("no necking width for %s: %s", record.id, err)
        records.append(record)
        try:
            extraction = annotate_pair(b, b_prime, record, record.id, cfg.annotate)
        except EmptyAnnotationError as err:
            logger.warning("excluded %s: %s", record.id, err)
            excluded.append({"id": record.id, "error": err.errpacket()})
            continue
        try:
            measured = measure_epe(b, b_prime, record, cfg.render)
        except WindowEmptyError as err:
            logger.warning("no EPE for %s: %s", record.id, err)
            measured = None
        save_rendered(os.path.join(image_dir, record.id), b_prime)
        annotated.append((record, extraction.instances, measured))
    return {
        "layout_id": layout_id,
        "shape": b.shape,
        "records": records,
        "annotated": annotated,
        "excluded": excluded,
    }


def _write_text(path, text):
    try:
        with open(path, "w") as handle:
            handle.write(text)
    except OSError as err:
        raise DatasetIOError(f"cannot write {path}: {err}") from err


def _epe_csv(annotated):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["id", "delta_b_max", "predicted_epe_max", "measured_epe"])
    for record, _, measured in annotated:
        writer.writerow(
            [
                record.id,
                f"{record.delta_b_max:.6f}",
                f"{record.predicted_epe_max:.6f}",
                "" if measured is None else f"{measured:.6f}",
            ]
        )
    return buffer.getvalue()


def generate(cfg):
    """
    Runs the whole generation pipeline into ``cfg.output_dir``.

    Writes the split files and the defect images, plus the base-layout
    library, defect records, skip and exclusion reports, statistics,
    summary tables, the EPE table and the config the run used. The
    defect-free render of each base layout goes to ``images/`` as well but
    is not a dataset entry.

    Parameters
    ----------
    cfg : PipelineConfig

    Returns
    -------
    DatasetManifest
    """
    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    if cfg.meef == DEFAULT_MEEF:
        logger.warning(
            "meef %g is an uncalibrated placeholder; predicted EPE is relative only",
            cfg.meef,
        )
    library = build_library(cfg.library)
    write_library(os.path.join(out_dir, LAYOUT_DIR), library)
    plan = generate_plan(library, cfg.plan)
    execution = execute_plan(plan, cfg.sampler, workers=cfg.workers)
    write_skip_report(os.path.join(out_dir, "skipped.jsonl"), execution.skipped)

    pairs = {}
    for a_prime, record in execution.accepted:
        pairs.setdefault(record.base_layout_id, []).append((a_prime, record))
    items = [
        (spec.id, layout, pairs.get(spec.id, []), cfg, out_dir)
        for spec, layout in library
    ]
    results = ordered_parallel_map(_render_layout, items, workers=cfg.workers, chunksize=1)

    records, annotated, excluded = [], [], []
    for result in results:
        records += result["records"]
        annotated += result["annotated"]
        excluded += result["excluded"]
    assignment = split_dataset(
        [record for record, _, _ in annotated],
        cfg.split_ratios,
        seed=cfg.master_seed,
        layout_ids=[spec.id for spec, _ in library],
    )

    images, annotations = [], []
    for result in results:
        height, width = result["shape"]
        layout_id = result["layout_id"]
        split = assignment[layout_id]
        image_ids = [record.id for record, _, _ in result["annotated"]]
        for image_id in image_ids:
            images.append(
                ImageEntry(
                    id=image_id,
                    file_name=f"{IMAGE_DIR}/{image_id}.pgm",
                    width=width,
                    height=height,
                    base_layout_id=layout_id,
                    split=split,
                )
            )
        for _, instances, _ in result["annotated"]:
            for instance in instances:
                annotations.append(replace(instance, instance_id=len(annotations) + 1))
    manifest = DatasetManifest(
        images=images,
        annotations=annotations,
        split_ratios=cfg.split_ratios,
        config_hash=config_hash(cfg),
    )
    export_coco(manifest, out_dir)

    write_records(os.path.join(out_dir, "records.jsonl"), records)
    _write_text(
        os.path.join(out_dir, "excluded.jsonl"),
        "".join(canonical_json(entry) + "\n" for entry in excluded),
    )
    write_stats(dataset_stats(manifest, cfg.stats), os.path.join(out_dir, "stats"))
    csv_text, table_text = summary_table(manifest)
    agree = sum(record.rendered_class is record.defect_class for record in records)
    table_text += f"rendered class agrees with design class for {agree} of {len(records)} defects\n"
    _write_text(os.path.join(out_dir, "summary.csv"), csv_text)
    _write_text(os.path.join(out_dir, "summary.txt"), table_text)
    _write_text(os.path.join(out_dir, "deformation.csv"), deformation_summary(records))
    _write_text(os.path.join(out_dir, "epe.csv"), _epe_csv(annotated))
    _write_text(os.path.join(out_dir, "config.txt"), dump_config(reproducible_config(cfg)))

    measured = [(record, epe) for record, _, epe in annotated if epe is not None]
    if len(measured) >= 2:
        rho, p_value = epe_correlation([m[0] for m in measured], [m[1] for m in measured])
        logger.info("spearman rho(|delta_b_max|, EPE) = %.3f (p = %.2g)", rho, p_value)
    if excluded:
        logger.warning("%d defect pairs had no annotatable difference", len(excluded))
    return manifest


# subcommands


def _config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    return with_overrides(cfg, seed=args.seed, output_dir=args.out, workers=args.workers)


def cmd_generate(args):
    cfg = _config(args)
    manifest = generate(cfg)
    print(summary_table(manifest)[1], end="")
    return 0


def cmd_stats(args):
    cfg = _config(args)
    manifest = read_dataset(args.dataset_dir)
    out_dir = args.out or os.path.join(args.dataset_dir, "stats")
    for path in write_stats(dataset_stats(manifest, cfg.stats), out_dir):
        print(path)
    return 0


def cmd_evaluate(args):
    cfg = _config(args)
    report = evaluate(
        args.gt, args.preds, cfg.evaluate, report_path=args.report, table_path=args.table
    )
    print(format_report_table(report), end="")
    return 0


def cmd_render_one(args):
    cfg = _config(args)
    layout = load_layout(args.layout)
    layout_id = os.path.splitext(os.path.basename(args.layout))[0]
    image = render(layout, cfg.render, render_seed(cfg.master_seed, layout_id), layout_id)
    stem = os.path.join(cfg.output_dir, layout_id)
    save_rendered(stem, image)
    print(stem + ".pgm")
    return 0


def cmd_inspect_record(args):
    cfg = _config(args)
    matches = [r for r in read_records(args.records) if r.id == args.id]
    if not matches:
        raise DatasetIOError(f"no record {args.id} in {args.records}")
    record = matches[0]
    library_dir = args.library or os.path.join(os.path.dirname(args.records), LAYOUT_DIR)
    layouts = {spec.id: layout for spec, layout in read_library(library_dir)}
    if record.base_layout_id not in layouts:
        raise DatasetIOError(f"layout {record.base_layout_id} not in {library_dir}")
    layout = layouts[record.base_layout_id]
    print(canonical_json(record.to_dict(), indent=2))
    verified = reverify_record(layout, record, cfg.sampler)
    print("verified" if verified else "MISMATCH")
    if args.overlay:
        b = render(layout, cfg.render, render_seed(cfg.master_seed, record.base_layout_id))
        b_prime = render(
            perturb(layout, record.spec),
            cfg.render,
            render_seed(cfg.master_seed, record.base_layout_id),
        )
        try:
            instances = annotate_pair(b, b_prime, record, record.id, cfg.annotate).instances
        except EmptyAnnotationError as err:
            logger.warning("overlay of %s has no instances: %s", record.id, err)
            instances = []
        write_ppm(args.overlay, render_overlay(b_prime, instances))
    if not verified:
        print(f"error: {record.id} no longer reproduces its class", file=sys.stderr)
        return 3
    return 0


def cmd_default_config(args):
    print(dump_config(PipelineConfig()), end="")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=int, default=None, help="worker processes")
    common.add_argument("--seed", type=int, default=None, help="override master_seed")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug"
    )

    parser = argparse.ArgumentParser(
        prog="lithosynth",
        description="Synthesize and score lithographic defect datasets.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("generate", parents=[common], help="build a dataset")
    p.add_argument("config")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("stats", parents=[common], help="dataset statistics")
    p.add_argument("dataset_dir")
    p.add_argument("--config", default=None)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions")
    p.add_argument("gt")
    p.add_argument("preds")
    p.add_argument("--config", default=None)
    p.add_argument("--report", default=None, help="JSON report path")
    p.add_argument("--table", default=None, help="text table path")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("render-one", parents=[common], help="render one layout")
    p.add_argument("config")
    p.add_argument("layout")
    p.set_defaults(handler=cmd_render_one)

    p = sub.add_parser("inspect-record", parents=[common], help="show and re-verify a record")
    p.add_argument("records")
    p.add_argument("id")
    p.add_argument("--library", default=None, help="layout library directory")
    p.add_argument("--config", default=None)
    p.add_argument("--overlay", default=None, help="write an RGB overlay PPM here")
    p.set_defaults(handler=cmd_inspect_record)

    p = sub.add_parser("default-config", parents=[common], help="print the default config")
    p.set_defaults(handler=cmd_default_config)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        return args.handler(args)
    except InvalidConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except LithosynthError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
