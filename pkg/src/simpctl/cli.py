"""Command-line entry point wiring the pipeline stages together.

Exit codes: 0 success, 1 usage/config error, 2 data/contract error,
3 external-simplifier error. With ``--json-errors`` failures are reported
as one JSON object on stderr.

A JSON config file (``--config``) can pre-set any value; explicit flags
win. Recognized sections: ``bucket`` (step/min/max), ``bridge`` (see
SimplifierSpec.from_config), ``search`` (dtd_values/wr_values/lv_values/
lr_values/budget/lambda/seed/budget_cap).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import agreement as agr
from . import corpus as corpus_mod
from . import ct_search, metrics
from .bridge import SimplifierSpec
from .control_tokens import (
    BucketSpec,
    DEFAULT_BUCKET_SPEC,
    FrequencyTable,
    annotate_corpus,
    write_annotation,
)
from .conllu import TreeBank
from .errors import BridgeError, ConfigError, DataError, ToolError
from .server import compact_ratings, create_app, item_id

METRIC_COLUMNS = ("BLEU", "ROUGE-1", "ROUGE-2", "ROUGE-L", "SARI", "SemF1")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors must exit 1, not argparse's 2
        raise ConfigError(message)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config


def _bucket_spec(args, config: dict) -> BucketSpec:
    section = config.get("bucket", {})
    step = args.bucket_step if args.bucket_step is not None else section.get("step", DEFAULT_BUCKET_SPEC.step)
    lo = args.bucket_min if args.bucket_min is not None else section.get("min", DEFAULT_BUCKET_SPEC.min)
    hi = args.bucket_max if args.bucket_max is not None else section.get("max", DEFAULT_BUCKET_SPEC.max)
    return BucketSpec(step=float(step), min=float(lo), max=float(hi))


def _parse_ratios(text: str):
    from fractions import Fraction

    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"ratios must look like 8:1:1, got {text!r}")
    try:
        weights = [Fraction(p) for p in parts]
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad ratios {text!r}: {exc}") from exc
    total = sum(weights)
    if total == 0:
        raise ConfigError(f"ratios sum to zero: {text!r}")
    return tuple(w / total for w in weights)


def _parse_values(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value list {text!r}: {exc}") from exc


def _load_pairs(path: str, format: str):
    corpus = corpus_mod.load_corpus(path, format)
    return corpus_mod.filter_one_to_zero(corpus)


def _read_lines(path: str) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


# ---------------------------------------------------------------- commands


def cmd_split(args, config) -> int:
    ratios = _parse_ratios(args.ratios)
    corpus = corpus_mod.load_corpus(args.corpus, args.format)
    filtered = corpus_mod.filter_one_to_zero(corpus)
    result = corpus_mod.split(filtered, ratios, args.seed)
    manifest = corpus_mod.write_split(result, args.out_dir)
    print(
        f"split {len(filtered)} pairs -> train {manifest['counts']['train']}, "
        f"validation {manifest['counts']['validation']}, test {manifest['counts']['test']}"
        + (f" (shortfall {result.shortfall})" if result.shortfall else "")
    )
    return 0


def cmd_annotate_ct(args, config) -> int:
    corpus = _load_pairs(args.corpus, args.format)
    trees = TreeBank.load(args.trees, args.tree_index)
    table = FrequencyTable.from_file(args.freq_table)
    spec = _bucket_spec(args, config)
    result = annotate_corpus(
        corpus,
        trees,
        table,
        spec=spec,
        stage=f"stage{args.stage}",
        error_threshold=args.error_threshold,
    )
    write_annotation(result, args.out)
    print(
        f"wrote {len(result.lines)} tagged lines to {args.out}.tsv "
        f"({len(result.errors)} line errors)"
    )
    return 0


def cmd_evaluate(args, config) -> int:
    pairs = list(_load_pairs(args.pairs, args.format))
    outputs = _read_lines(args.outputs)
    output_emb = metrics.load_embeddings_jsonl(args.output_embeddings) if args.output_embeddings else None
    reference_emb = (
        metrics.load_embeddings_jsonl(args.reference_embeddings) if args.reference_embeddings else None
    )
    report = metrics.evaluate_system(
        pairs,
        outputs,
        per_sentence=args.per_sentence,
        output_embeddings=output_emb,
        reference_embeddings=reference_emb,
    )
    row = report.to_dict(decimals=2)
    widths = [max(len(c), 8) for c in METRIC_COLUMNS]
    header = "  ".join(c.rjust(w) for c, w in zip(METRIC_COLUMNS, widths))
    values = [row["bleu"], row["rouge1"], row["rouge2"], row["rougeL"], row["sari"], row["semantic_f1"]]
    rendered = "  ".join(
        (f"{v:.2f}" if isinstance(v, float) else "-").rjust(w) for v, w in zip(values, widths)
    )
    print(f"{'System':<12}  {header}")
    print(f"{args.name:<12}  {rendered}")
    if args.report:
        Path(args.report).write_text(
            json.dumps(report.to_dict(decimals=2), indent=2) + "\n", encoding="utf-8"
        )
        print(f"report written to {args.report}")
    return 0


def _simplifier_from_args(args, config) -> SimplifierSpec:
    if args.mock:
        return SimplifierSpec(mode="builtin", builtin=args.mock)
    section = config.get("bridge")
    if not section:
        raise ConfigError("search needs --mock or a config file with a 'bridge' section")
    return SimplifierSpec.from_config(section)


def cmd_search(args, config) -> int:
    section = config.get("search", {})
    pairs = list(_load_pairs(args.validation, args.format))
    spec = _bucket_spec(args, config)

    def values_for(flag_value, key) -> tuple[float, ...]:
        if flag_value is not None:
            return _parse_values(flag_value)
        if key in section:
            return tuple(float(v) for v in section[key])
        return spec.grid()

    lr_mode = (
        ct_search.LrMode.predicted()
        if args.lr_predictor
        else ct_search.LrMode.fixed(*values_for(args.lr_values, "lr_values"))
    )
    space = ct_search.SearchSpace(
        dtd_values=values_for(args.dtd_values, "dtd_values"),
        wr_values=values_for(args.wr_values, "wr_values"),
        lv_values=values_for(args.lv_values, "lv_values"),
        lr_mode=lr_mode,
    )
    space.validate_on_grid(spec)
    predictor = ct_search.PredictorModel.load(args.lr_predictor) if args.lr_predictor else None
    table = FrequencyTable.from_file(args.freq_table) if args.freq_table else None
    feature_fn = (lambda source: ct_search.lr_features(source, table)) if table else None

    log_records: list[dict] = []

    def log(candidate, score, wall):
        log_records.append(
            {"candidate": candidate.to_dict(), "score": score, "wall_time_s": wall}
        )

    objective_fn = ct_search.Objective(
        pairs,
        _simplifier_from_args(args, config),
        predictor=predictor,
        spec=spec,
        feature_fn=feature_fn,
        log=log,
    )
    if args.strategy == "grid":
        budget_cap = args.budget or section.get("budget_cap", ct_search.DEFAULT_GRID_BUDGET_CAP)
        best, _ = ct_search.grid_search(space, objective_fn, budget_cap=budget_cap)
    else:
        budget = args.budget or section.get("budget", 150)
        best = ct_search.one_plus_lambda_es(
            space,
            objective_fn,
            budget=budget,
            lam=args.es_lambda or section.get("lambda", 5),
            seed=args.seed,
        )
    ct_search.write_search_outputs(best, log_records, args.out_dir)
    print(
        f"best candidate dtd={best.dtd} wr={best.wr} lv={best.lv} lr={best.lr} "
        f"score={best.score:.4f} ({objective_fn.evaluations} evaluations)"
    )
    return 0


def cmd_fit_lr(args, config) -> int:
    corpus = _load_pairs(args.pairs, args.format)
    table = FrequencyTable.from_file(args.freq_table) if args.freq_table else None
    training = ct_search.build_lr_training_pairs(corpus, table)
    model = ct_search.fit_lr_predictor(training, ridge_lambda=args.ridge_lambda)
    model.save(args.out)
    weights, intercept = model.raw_coefficients()
    print(
        f"fitted LR predictor on {len(training)} pairs "
        f"(lambda={args.ridge_lambda}); intercept={intercept:.4f}; saved to {args.out}"
    )
    return 0


def cmd_predict_lr(args, config) -> int:
    model = ct_search.PredictorModel.load(args.model)
    table = FrequencyTable.from_file(args.freq_table) if args.freq_table else None
    spec = _bucket_spec(args, config)
    for line in _read_lines(args.sources):
        if not line.strip():
            continue
        features = ct_search.lr_features(line, table)
        print(f"{ct_search.predict_lr(model, features, spec):.2f}")
    return 0


def cmd_assign(args, config) -> int:
    try:
        records = json.loads(Path(args.items).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.items}:{exc.lineno}: {exc.msg}") from exc
    systems = tuple(args.systems.split(","))
    if len(systems) != 2:
        raise ConfigError(f"--systems must name exactly two systems, got {args.systems!r}")
    items: list[tuple[str, int]] = []
    payloads: dict[str, dict] = {}
    for i, rec in enumerate(records):
        try:
            item = (str(rec["doc_id"]), int(rec["sent_index"]))
            payload = {"source": rec["source"], "outputs": dict(rec["outputs"])}
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{args.items}[{i}]: bad item record ({exc})") from exc
        missing = [s for s in systems if s not in payload["outputs"]]
        if missing:
            raise DataError(f"{args.items}[{i}]: no output for systems {missing}")
        items.append(item)
        payloads[item_id(item)] = payload
    plan = agr.assign_annotation(
        items,
        annotators=args.annotators.split(","),
        load=args.load,
        seed=args.seed,
        systems=systems,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(
        json.dumps({"plan": plan.to_json(), "items": payloads}, indent=2) + "\n",
        encoding="utf-8",
    )
    print(
        f"planned {len(items)} items across {len(plan.tasks)} annotators "
        f"(load {args.load}); wrote {out}"
    )
    return 0


def _agreement_results(table: agr.RatingTable, system_a: str, system_b: str) -> dict:
    means = {
        f"{system}|{criterion}": round(value, 3)
        for (system, criterion), value in sorted(likert_cells(table).items())
    }
    annotators = table.annotators
    kappa: dict[str, dict[str, float | None]] = {}
    alpha: dict[str, dict[str, float | None]] = {}
    for i, a in enumerate(annotators):
        for b in annotators[i + 1 :]:
            pair_label = f"{a} & {b}"
            kappa_row: dict[str, float | None] = {}
            overlapping = False
            for criterion in agr.CRITERIA:
                oa = agr.to_outcomes(table, a, criterion, system_a, system_b).by_item()
                ob = agr.to_outcomes(table, b, criterion, system_a, system_b).by_item()
                common = sorted(set(oa) & set(ob))
                if common:
                    overlapping = True
                    kappa_row[criterion] = agr.cohen_kappa(
                        [oa[item] for item in common], [ob[item] for item in common]
                    )
                else:
                    kappa_row[criterion] = None
                for system in (system_a, system_b):
                    sub = table.filtered(annotators=(a, b), system=system)
                    try:
                        value = agr.krippendorff_alpha(sub, criterion, system=system)
                    except DataError:
                        value = None
                    alpha.setdefault(f"{pair_label}|{system}", {})[criterion] = value
            if overlapping:
                kappa[pair_label] = kappa_row
    # pairs with no shared units produce all-None alpha rows; drop them
    alpha = {key: row for key, row in alpha.items() if any(v is not None for v in row.values())}
    return {"likert_means": means, "cohen_kappa": kappa, "krippendorff_alpha": alpha}


def likert_cells(table: agr.RatingTable) -> dict[tuple[str, str], float]:
    return agr.likert_means(table)


def _print_agreement(results: dict) -> None:
    def fmt(v):
        return "-" if v is None else f"{v:.3f}"

    print("Likert means")
    print(f"  {'System':<24}{'Meaning preservation':>22}{'Simplicity':>12}")
    systems = sorted({key.split("|")[0] for key in results["likert_means"]})
    for system in systems:
        mp = results["likert_means"].get(f"{system}|meaning_preservation")
        si = results["likert_means"].get(f"{system}|simplicity")
        print(f"  {system:<24}{fmt(mp):>22}{fmt(si):>12}")
    print()
    print("Cohen's kappa over win/lose/tie outcomes")
    print(f"  {'Annotators':<24}{'Meaning preservation':>22}{'Simplicity':>12}")
    for pair_label, row in results["cohen_kappa"].items():
        print(
            f"  {pair_label:<24}{fmt(row.get('meaning_preservation')):>22}"
            f"{fmt(row.get('simplicity')):>12}"
        )
    print()
    print("Krippendorff's alpha (ordinal, 5-point scale)")
    print(f"  {'Annotators | system':<34}{'Meaning preservation':>22}{'Simplicity':>12}")
    for key, row in results["krippendorff_alpha"].items():
        print(
            f"  {key:<34}{fmt(row.get('meaning_preservation')):>22}"
            f"{fmt(row.get('simplicity')):>12}"
        )


def cmd_agreement(args, config) -> int:
    table = agr.load_ratings(args.ratings)
    if args.systems:
        systems = tuple(args.systems.split(","))
    else:
        systems = tuple(sorted(table.systems))
    if len(systems) != 2:
        raise ConfigError(
            f"agreement compares exactly two systems; table has {sorted(table.systems)}, "
            "narrow with --systems a,b"
        )
    results = _agreement_results(table, systems[0], systems[1])
    _print_agreement(results)
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(results, indent=2) + "\n", encoding="utf-8")
        print(f"\nresults written to {args.json_out}")
    return 0


def cmd_serve(args, config) -> int:
    import uvicorn

    app = create_app(args.data_dir, ui_dir=args.ui_dir, cors_origins=tuple(args.cors_origin))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_compact_ratings(args, config) -> int:
    summary = compact_ratings(args.data_dir)
    print(f"compacted ratings: kept {summary['kept']}, dropped {summary['dropped']}")
    return 0


# ----------------------------------------------------------------- parser


def _add_bucket_flags(parser) -> None:
    parser.add_argument("--bucket-step", type=float, default=None)
    parser.add_argument("--bucket-min", type=float, default=None)
    parser.add_argument("--bucket-max", type=float, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="simpctl", description=__doc__)
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--json-errors", action="store_true", help="emit errors as JSON on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="filter a corpus and write train/validation/test TSVs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", choices=corpus_mod.CORPUS_FORMATS, default="plaba-json")
    p.add_argument("--ratios", default="8:1:1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("annotate-ct", help="write a control-token-tagged parallel file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", choices=corpus_mod.CORPUS_FORMATS, default="tsv")
    p.add_argument("--trees", required=True, help="CoNLL-U file")
    p.add_argument("--tree-index", required=True, help="sidecar index JSON")
    p.add_argument("--freq-table", required=True)
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--error-threshold", type=float, default=0.0)
    p.add_argument("--out", required=True, help="output prefix")
    _add_bucket_flags(p)
    p.set_defaults(func=cmd_annotate_ct)

    p = sub.add_parser("evaluate", help="score a system-outputs file against a pairs TSV")
    p.add_argument("--pairs", required=True)
    p.add_argument("--format", choices=corpus_mod.CORPUS_FORMATS, default="tsv")
    p.add_argument("--outputs", required=True, help="one output line per pair")
    p.add_argument("--name", default="system")
    p.add_argument("--per-sentence", action="store_true")
    p.add_argument("--output-embeddings", default=None)
    p.add_argument("--reference-embeddings", default=None)
    p.add_argument("--report", default=None, help="write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("search", help="search control-token values against a simplifier")
    p.add_argument("--validation", required=True, help="pairs TSV")
    p.add_argument("--format", choices=corpus_mod.CORPUS_FORMATS, default="tsv")
    p.add_argument("--strategy", choices=("grid", "es"), default="grid")
    p.add_argument("--dtd-values", default=None)
    p.add_argument("--wr-values", default=None)
    p.add_argument("--lv-values", default=None)
    p.add_argument("--lr-values", default=None)
    p.add_argument("--lr-predictor", default=None, help="predictor JSON for flexible LR")
    p.add_argument("--freq-table", default=None)
    p.add_argument("--mock", choices=("identity", "truncate_to_lr", "lexical_sub"), default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--es-lambda", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    _add_bucket_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("fit-lr", help="fit the LENGTHRATIO ridge predictor")
    p.add_argument("--pairs", required=True)
    p.add_argument("--format", choices=corpus_mod.CORPUS_FORMATS, default="tsv")
    p.add_argument("--freq-table", default=None)
    p.add_argument("--ridge-lambda", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_lr)

    p = sub.add_parser("predict-lr", help="predict bucketed LR values for source lines")
    p.add_argument("--model", required=True)
    p.add_argument("--sources", required=True)
    p.add_argument("--freq-table", default=None)
    _add_bucket_flags(p)
    p.set_defaults(func=cmd_predict_lr)

    p = sub.add_parser("assign", help="plan the annotation tasks")
    p.add_argument("--items", required=True, help="items JSON with source and per-system outputs")
    p.add_argument("--annotators", required=True, help="comma-separated ids")
    p.add_argument("--load", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--systems", required=True, help="the two system ids, comma-separated")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("agreement", help="Likert means, Cohen's kappa, Krippendorff's alpha")
    p.add_argument("--ratings", required=True, help=".csv/.json/.jsonl ratings file")
    p.add_argument("--systems", default=None, help="two system ids, comma-separated")
    p.add_argument("--json-out", default=None)
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("serve", help="serve the annotation API and UI")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", default=None)
    p.add_argument("--cors-origin", action="append", default=["*"])
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("compact-ratings", help="deduplicate the ratings store in place")
    p.add_argument("--data-dir", required=True)
    p.set_defaults(func=cmd_compact_ratings)

    return parser


def _report_error(exc: ToolError, json_errors: bool) -> None:
    if json_errors:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    json_errors = "--json-errors" in (argv if argv is not None else sys.argv[1:])
    try:
        args = build_parser().parse_args(argv)
        config = _load_config(args.config)
        return args.func(args, config)
    except ConfigError as exc:
        _report_error(exc, json_errors)
        return 1
    except BridgeError as exc:
        _report_error(exc, json_errors)
        return 3
    except DataError as exc:
        _report_error(exc, json_errors)
        return 2
    except OSError as exc:
        _report_error(DataError(str(exc)), json_errors)
        return 2


if __name__ == "__main__":
    sys.exit(main())
