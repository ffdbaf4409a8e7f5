"""Command-line entry point.

Subcommands: fidelity, prdc, privacy, conditional, rank, report, validate.
Configuration comes from one JSON document (--config); flags override it.
Every run writes a machine-readable run record next to its results. Equal
config and inputs produce byte-identical outputs at any thread count.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .conditional_analysis import ConditionalConfig, conditional_metrics
from .config import RunConfig, load_config
from .distribution_stats import FidelityResult, fit_gaussian, frechet_distance, kid
from .errors import (
    ConfigError,
    DataError,
    GenMetricsError,
    NumericalError,
)
from .leaderboard import (
    aggregate_ranks,
    align_by_model,
    conditional_report_markdown,
    emit_report,
    mean_alignment,
    metric_table_markdown,
    pearson,
    rank_table_markdown,
    read_alignment_csv,
    read_metric_table,
    spearman,
)
from .manifest_io import parse_manifest, read_embeddings
from .manifold_metrics import prdc
from .privacy_audit import audit_privacy, fill_pair_distances, read_score_csv

_EXIT_OK = 0
_EXIT_CONFIG = 2
_EXIT_DATA = 3
_EXIT_NUMERICAL = 4


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_csv_row(path: Path, row: dict) -> Path:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(row.keys())
        writer.writerow(["" if v is None else v for v in row.values()])
    return path


def _write_run_record(out: Path, subcommand: str, cfg: RunConfig,
                      inputs: dict[str, Path]) -> Path:
    import matplotlib
    import numpy
    import PIL
    import scipy

    semantic = cfg.semantic_dict()
    record = {
        "subcommand": subcommand,
        "config": semantic,
        "config_sha256": hashlib.sha256(
            json.dumps(semantic, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest(),
        "inputs": {
            role: {"path": str(p), "sha256": _sha256_file(p)} for role, p in sorted(inputs.items())
        },
        "versions": {
            "genmetrics": __version__,
            "python": ".".join(map(str, sys.version_info[:3])),
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "pillow": PIL.__version__,
            "matplotlib": matplotlib.__version__,
        },
    }
    return _write_json(out / "run_record.json", record)


def _path(args, cfg: RunConfig, role: str, required: bool = True) -> Path | None:
    flag = getattr(args, role, None)
    value = flag if flag is not None else cfg.paths.get(role)
    if value is None:
        if required:
            raise ConfigError(f"missing input path: {role} (flag --{role.replace('_', '-')})")
        return None
    p = Path(value)
    if not p.exists():
        raise DataError(f"{role} path does not exist: {p}")
    return p


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.output_dir if args.output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- subcommands ----------------------------------------------------------------


def cmd_fidelity(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    real_path = _path(args, cfg, "real_embeddings")
    fake_path = _path(args, cfg, "fake_embeddings")
    align_path = _path(args, cfg, "alignment_scores", required=False)
    real = read_embeddings(real_path)
    fake = read_embeddings(fake_path)
    kid_res = kid(real, fake, cfg.kid)
    fidelity = FidelityResult(
        fid=frechet_distance(fit_gaussian(real), fit_gaussian(fake)),
        kid_mean=kid_res.mean,
        kid_std=kid_res.std,
    )
    result = {
        "fid": fidelity.fid,
        "kid_mean": fidelity.kid_mean,
        "kid_std": fidelity.kid_std,
        "n_real": real.n,
        "n_fake": fake.n,
    }
    inputs = {"real_embeddings": real_path, "fake_embeddings": fake_path}
    if align_path is not None:
        result["alignment_mean"] = mean_alignment(align_path)
        inputs["alignment_scores"] = align_path
    _write_json(out / "fidelity.json", result)
    _write_csv_row(out / "fidelity.csv", result)
    _write_run_record(out, "fidelity", cfg, inputs)
    return _EXIT_OK


def cmd_prdc(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    real_path = _path(args, cfg, "real_embeddings")
    fake_path = _path(args, cfg, "fake_embeddings")
    result = prdc(
        read_embeddings(real_path), read_embeddings(fake_path), cfg.prdc,
        threads=cfg.resolved_threads(),
    )
    row = {
        "precision": result.precision,
        "recall": result.recall,
        "density": result.density,
        "coverage": result.coverage,
        "k": cfg.prdc.k,
    }
    _write_json(out / "prdc.json", row)
    _write_csv_row(out / "prdc.csv", row)
    _write_run_record(out, "prdc", cfg,
                      {"real_embeddings": real_path, "fake_embeddings": fake_path})
    return _EXIT_OK


def cmd_privacy(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    scores_path = _path(args, cfg, "scores")
    records = read_score_csv(scores_path)
    inputs = {"scores": scores_path}
    needs_fill = any(r.pixel_distance is None or r.latent_distance is None for r in records)
    real_manifest_path = _path(args, cfg, "real_manifest", required=False)
    fake_manifest_path = _path(args, cfg, "fake_manifest", required=False)
    if needs_fill and real_manifest_path is not None and fake_manifest_path is not None:
        real_emb_path = _path(args, cfg, "real_embeddings", required=False)
        fake_emb_path = _path(args, cfg, "fake_embeddings", required=False)
        images_root = _path(args, cfg, "images_root", required=False)
        records = fill_pair_distances(
            records,
            parse_manifest(real_manifest_path),
            parse_manifest(fake_manifest_path),
            real_embeddings=read_embeddings(real_emb_path) if real_emb_path else None,
            fake_embeddings=read_embeddings(fake_emb_path) if fake_emb_path else None,
            images_root=images_root,
            target_side=cfg.image_side,
        )
        inputs["real_manifest"] = real_manifest_path
        inputs["fake_manifest"] = fake_manifest_path
        if real_emb_path:
            inputs["real_embeddings"] = real_emb_path
        if fake_emb_path:
            inputs["fake_embeddings"] = fake_emb_path
    summary = audit_privacy(records, cfg.privacy)
    top = {
        "avg_reid": summary.avg_reid,
        "avg_latent": summary.avg_latent,
        "avg_pixel": summary.avg_pixel,
        "max_reid": summary.max_reid,
        "count_over_delta": summary.count_over_delta,
        "delta": cfg.privacy.delta,
        "num_prompts": summary.num_prompts,
    }
    _write_json(out / "privacy.json", {
        **top,
        "per_prompt": [
            {"prompt_id": p.prompt_id, "max_reid": p.max_reid, "min_pixel": p.min_pixel,
             "min_latent": p.min_latent, "n_seeds": p.n_seeds}
            for p in summary.per_prompt
        ],
    })
    _write_csv_row(out / "privacy.csv", top)
    with (out / "privacy_per_prompt.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["prompt_id", "n_seeds", "max_reid", "min_pixel", "min_latent"])
        for p in summary.per_prompt:
            writer.writerow([
                p.prompt_id, p.n_seeds, repr(p.max_reid),
                "" if p.min_pixel is None else repr(p.min_pixel),
                "" if p.min_latent is None else repr(p.min_latent),
            ])
    _write_run_record(out, "privacy", cfg, inputs)
    return _EXIT_OK


def cmd_conditional(args, cfg: RunConfig) -> int:
    from .figures import save_conditional_figure

    out = _out_dir(args, cfg)
    real_path = _path(args, cfg, "real_embeddings")
    fake_path = _path(args, cfg, "fake_embeddings")
    real_manifest_path = _path(args, cfg, "real_manifest")
    fake_manifest_path = _path(args, cfg, "fake_manifest")
    report = conditional_metrics(
        read_embeddings(real_path),
        read_embeddings(fake_path),
        parse_manifest(real_manifest_path),
        parse_manifest(fake_manifest_path),
        ConditionalConfig(min_stratum=cfg.min_stratum, kid=cfg.kid, prdc=cfg.prdc),
        threads=cfg.resolved_threads(),
    )
    emit_report({"conditional": report}, "csv", out)
    emit_report({"conditional": report}, "json", out)
    save_conditional_figure(report, "fid", out / "conditional_fid.png")
    _write_run_record(out, "conditional", cfg, {
        "real_embeddings": real_path, "fake_embeddings": fake_path,
        "real_manifest": real_manifest_path, "fake_manifest": fake_manifest_path,
    })
    return _EXIT_OK


def _correlations(rank_models: list[str], average_rank, utility_table) -> dict:
    result = {}
    for metric in utility_table.metric_names:
        x, y = align_by_model(rank_models, average_rank,
                              utility_table.model_ids, utility_table.column(metric))
        result[metric] = {"pearson": pearson(x, y), "spearman": spearman(x, y)}
    return result


def cmd_rank(args, cfg: RunConfig) -> int:
    from .figures import save_correlation_figure, save_rank_figure

    out = _out_dir(args, cfg)
    table_path = _path(args, cfg, "metric_table")
    table = read_metric_table(table_path, cfg.directions, cfg.default_direction)
    rank_table = aggregate_ranks(table)
    emit_report({"ranks": rank_table}, "csv", out)
    emit_report({"ranks": rank_table}, "json", out)
    save_rank_figure(rank_table, out / "ranks.png")
    inputs = {"metric_table": table_path}

    utility_path = _path(args, cfg, "utility_table", required=False)
    if utility_path is not None:
        utility = read_metric_table(utility_path, cfg.directions, cfg.default_direction or "lower")
        corr = _correlations(rank_table.model_ids, rank_table.average_rank, utility)
        _write_json(out / "correlations.json", corr)
        for metric in utility.metric_names:
            x, y = align_by_model(rank_table.model_ids, rank_table.average_rank,
                                  utility.model_ids, utility.column(metric))
            save_correlation_figure(
                x, y, "average rank", metric, corr[metric]["pearson"],
                out / f"correlation_{metric}.png",
            )
        inputs["utility_table"] = utility_path
    _write_run_record(out, "rank", cfg, inputs)
    return _EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    from .figures import save_metric_heatmap, save_rank_figure

    out = _out_dir(args, cfg)
    table_path = _path(args, cfg, "metric_table")
    table = read_metric_table(table_path, cfg.directions, cfg.default_direction)
    rank_table = aggregate_ranks(table)
    inputs = {"metric_table": table_path}

    sections = [
        "# Evaluation report\n",
        "## Metrics\n",
        metric_table_markdown(table),
        "\n![metric heatmap](metrics.png)\n",
        "\n## Ranking\n",
        rank_table_markdown(rank_table),
        "\n![average ranks](ranks.png)\n",
    ]
    conditional_path = _path(args, cfg, "conditional_json", required=False)
    if conditional_path is not None:
        from .conditional_analysis import ConditionalReport, StratumReport
        from .manifold_metrics import PrdcResult

        rows = json.loads(conditional_path.read_text(encoding="utf-8"))
        report_rows = []
        for row in rows:
            prdc_values = [row.get(k) for k in ("precision", "recall", "density", "coverage")]
            report_rows.append(StratumReport(
                label_name=row["label"], n_real=row["n_real"], n_fake=row["n_fake"],
                skipped=bool(row["skipped"]), reason=row.get("reason") or None,
                fid=row.get("fid"), kid_mean=row.get("kid_mean"), kid_std=row.get("kid_std"),
                prdc=PrdcResult(*prdc_values) if all(v is not None for v in prdc_values) else None,
            ))
        sections += ["\n## Per-condition analysis\n",
                     conditional_report_markdown(ConditionalReport(per_label=report_rows))]
        inputs["conditional_json"] = conditional_path

    (out / "report.md").write_text("".join(sections), encoding="utf-8")
    emit_report({"metrics": table, "ranks": rank_table}, "csv", out)
    save_metric_heatmap(table, out / "metrics.png")
    save_rank_figure(rank_table, out / "ranks.png")
    _write_run_record(out, "report", cfg, inputs)
    return _EXIT_OK


def cmd_validate(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    errors: list[str] = []
    warned: list[str] = []
    checked: list[str] = []

    def check(role: str, fn, path: Path):
        checked.append(f"{role}: {path}")
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                value = fn(path)
            for w in caught:
                warned.append(f"{role}: {w.message}")
            return value
        except GenMetricsError as exc:
            errors.append(f"{role}: {type(exc).__name__}: {exc}")
            return None

    manifests = {}
    for path in args.manifest or []:
        manifests[path] = check("manifest", parse_manifest, Path(path))
    embeddings = {}
    for path in args.embeddings or []:
        embeddings[path] = check("embeddings", read_embeddings, Path(path))

    for mpath, manifest in manifests.items():
        if manifest is None:
            continue
        for rec in manifest.records:
            if rec.split == "synthetic" and rec.seed is None:
                warned.append(f"manifest {mpath}: synthetic record {rec.sample_id!r} has no seed")
            if rec.split != "synthetic" and rec.seed is not None:
                warned.append(f"manifest {mpath}: real record {rec.sample_id!r} carries a seed")

    for epath, emb in embeddings.items():
        if emb is None:
            continue
        emb_ids = set(emb.sample_ids)
        for mpath, manifest in manifests.items():
            if manifest is None:
                continue
            manifest_ids = set(manifest.sample_ids())
            missing = manifest_ids - emb_ids
            if manifests and missing and len(missing) < len(manifest_ids):
                warned.append(
                    f"embeddings {epath}: {len(missing)} manifest ids from {mpath} missing"
                )
            extra = emb_ids - manifest_ids
            if not missing and extra:
                warned.append(f"embeddings {epath}: {len(extra)} ids not present in {mpath}")

    for path in args.scores or []:
        records = check("scores", read_score_csv, Path(path))
        if records is not None:
            sizes = {}
            for rec in records:
                sizes[rec.prompt_id] = sizes.get(rec.prompt_id, 0) + 1
            if len(set(sizes.values())) > 1:
                warned.append(f"scores {path}: prompt groups have uneven seed counts")

    for path in args.alignment_scores_file or []:
        scores = check("alignment_scores", read_alignment_csv, Path(path))
        if scores is not None:
            bad = {k: v for k, v in scores.items() if not (-1.0 <= v <= 1.0)}
            if bad:
                errors.append(f"alignment_scores {path}: {len(bad)} scores outside [-1, 1]")

    result = {"errors": errors, "warnings": warned, "checked": checked}
    _write_json(out / "validation.json", result)
    record_inputs = {
        f"input_{i}": Path(p)
        for i, p in enumerate(
            (args.manifest or []) + (args.embeddings or []) + (args.scores or [])
            + (args.alignment_scores_file or [])
        )
        if Path(p).exists()
    }
    _write_run_record(out, "validate", cfg, record_inputs)
    for line in errors:
        print(f"error: {line}", file=sys.stderr)
    for line in warned:
        print(f"warning: {line}", file=sys.stderr)
    print(f"validate: {len(errors)} errors, {len(warned)} warnings, "
          f"{len(checked)} inputs checked")
    return _EXIT_OK if not errors else _EXIT_DATA


# --- argument parsing -------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="genmetrics",
        description="Evaluation engine for generative radiograph models.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config document")
        p.add_argument("--output-dir", dest="output_dir", help="directory for result files")
        p.add_argument("--threads", type=int, help="worker pool size (default: auto)")
        p.add_argument("--rng-seed", dest="rng_seed", type=int, help="root random seed")

    p = sub.add_parser("fidelity", help="FID and KID between two embedding sets")
    common(p)
    p.add_argument("--real-embeddings", dest="real_embeddings")
    p.add_argument("--fake-embeddings", dest="fake_embeddings")
    p.add_argument("--alignment-scores", dest="alignment_scores")
    p.set_defaults(fn=cmd_fidelity)

    p = sub.add_parser("prdc", help="precision/recall/density/coverage")
    common(p)
    p.add_argument("--real-embeddings", dest="real_embeddings")
    p.add_argument("--fake-embeddings", dest="fake_embeddings")
    p.add_argument("--k", type=int, help="neighbor count")
    p.set_defaults(fn=cmd_prdc)

    p = sub.add_parser("privacy", help="re-identification risk summary")
    common(p)
    p.add_argument("--scores", help="pair score CSV")
    p.add_argument("--delta", type=float, help="high-risk threshold")
    p.add_argument("--real-manifest", dest="real_manifest")
    p.add_argument("--fake-manifest", dest="fake_manifest")
    p.add_argument("--real-embeddings", dest="real_embeddings")
    p.add_argument("--fake-embeddings", dest="fake_embeddings")
    p.add_argument("--images-root", dest="images_root")
    p.set_defaults(fn=cmd_privacy)

    p = sub.add_parser("conditional", help="per-condition stratified metrics")
    common(p)
    p.add_argument("--real-embeddings", dest="real_embeddings")
    p.add_argument("--fake-embeddings", dest="fake_embeddings")
    p.add_argument("--real-manifest", dest="real_manifest")
    p.add_argument("--fake-manifest", dest="fake_manifest")
    p.add_argument("--min-stratum", dest="min_stratum", type=int)
    p.add_argument("--k", type=int, help="neighbor count")
    p.set_defaults(fn=cmd_conditional)

    p = sub.add_parser("rank", help="direction-aware ranking and correlations")
    common(p)
    p.add_argument("--metric-table", dest="metric_table")
    p.add_argument("--utility-table", dest="utility_table")
    p.set_defaults(fn=cmd_rank)

    p = sub.add_parser("report", help="combined Markdown report with figures")
    common(p)
    p.add_argument("--metric-table", dest="metric_table")
    p.add_argument("--utility-table", dest="utility_table")
    p.add_argument("--conditional-json", dest="conditional_json")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("validate", help="schema and format checks only")
    common(p)
    p.add_argument("--manifest", action="append")
    p.add_argument("--embeddings", action="append")
    p.add_argument("--scores", action="append")
    p.add_argument("--alignment-scores", dest="alignment_scores_file", action="append")
    p.set_defaults(fn=cmd_validate)
    return parser


def _apply_overrides(args, cfg: RunConfig) -> None:
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    if args.threads is not None:
        cfg.threads = args.threads
    if args.rng_seed is not None:
        cfg.rng_seed = args.rng_seed
    if getattr(args, "k", None) is not None:
        from .manifold_metrics import PrdcConfig

        cfg.prdc = PrdcConfig(k=args.k)
    if getattr(args, "delta", None) is not None:
        from dataclasses import replace

        cfg.privacy = replace(cfg.privacy, delta=args.delta)
    if getattr(args, "min_stratum", None) is not None:
        cfg.min_stratum = args.min_stratum


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        _apply_overrides(args, cfg)
        if args.rng_seed is not None:
            from dataclasses import replace

            cfg.kid = replace(cfg.kid, rng_seed=args.rng_seed)
        return args.fn(args, cfg)
    except ConfigError as exc:
        _report_error(exc, _EXIT_CONFIG)
        return _EXIT_CONFIG
    except NumericalError as exc:
        _report_error(exc, _EXIT_NUMERICAL)
        return _EXIT_NUMERICAL
    except DataError as exc:
        _report_error(exc, _EXIT_DATA)
        return _EXIT_DATA
    except GenMetricsError as exc:
        _report_error(exc, _EXIT_DATA)
        return _EXIT_DATA


def _report_error(exc: Exception, code: int) -> None:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}),
          file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
