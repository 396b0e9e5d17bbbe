"""Command-line driver: thin argument parsing over the pipeline layer.

Exit codes: 0 success, 1 usage, 2 data error, 3 endpoint error. Defaults may
come from a JSON config file (--config); explicit flags win, and the resolved
values are echoed into the run manifest.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .client import (
    EndpointError,
    GenerationClient,
    InferenceClient,
    fetch_predictions,
    load_prompt_items,
)
from .evals.report import render_table
from .pipeline import (
    EVAL_METRICS,
    build_dataset,
    eval_chessboard,
    fuzz_roundtrip,
    gen_chessboard,
    make_registry,
    run_eval,
)
from .templates import TaskKind, expand_via_endpoint, save_template_sets

USAGE_EXIT = 1
DATA_EXIT = 2
ENDPOINT_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _load_config(path) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _resolve(args, config, key, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    return config.get(key, default)


def _echo(config: dict, **resolved) -> dict:
    return {**config, **{k: v for k, v in resolved.items() if v is not None}}


def cmd_build_dataset(args, config) -> int:
    seed = int(_resolve(args, config, "seed", 0))
    decimals = int(_resolve(args, config, "decimals", 3))
    stage_tag = _resolve(args, config, "stage_tag", "stage1")
    kind = _resolve(args, config, "kind")
    holdout = _resolve(args, config, "holdout")
    templates = _resolve(args, config, "templates")
    task = TaskKind(args.task)
    manifest = build_dataset(
        input_path=args.input,
        output_path=args.output,
        task=task,
        kind=kind,
        holdout_path=holdout,
        decimals=decimals,
        seed=seed,
        stage_tag=stage_tag,
        templates_path=templates,
        manifest_path=args.manifest,
        config_echo=_echo(
            config, task=task.value, seed=seed, decimals=decimals,
            stage_tag=stage_tag, kind=kind,
        ),
    )
    print(
        f"built {manifest['records_built']} records "
        f"(dropped {manifest['dropped_for_leakage']} for leakage) -> {args.output}"
    )
    return 0


def cmd_gen_chessboard(args, config) -> int:
    seed = int(_resolve(args, config, "seed", 0))
    quota = int(_resolve(args, config, "quota", 600))
    epsilon = float(_resolve(args, config, "epsilon", 0.0))
    manifest = gen_chessboard(
        input_path=args.input,
        output_path=args.output,
        per_part_quota=quota,
        seed=seed,
        epsilon=epsilon,
        config_echo=_echo(config, seed=seed, quota=quota, epsilon=epsilon),
    )
    print(f"built {manifest['items']} probe items -> {args.output}")
    return 0


def _emit_report(report, output) -> None:
    if output:
        report.save(output)
    print(render_table(report))


def cmd_eval_chessboard(args, config) -> int:
    report = eval_chessboard(args.items, args.predictions)
    _emit_report(report, args.output)
    return 0


def cmd_eval(args, config) -> int:
    threshold = float(_resolve(args, config, "threshold", 0.5))
    report = run_eval(args.metric, args.predictions, args.ground_truth, threshold=threshold)
    _emit_report(report, args.output)
    return 0


def cmd_fetch_predictions(args, config) -> int:
    endpoint = _resolve(args, config, "endpoint")
    if not endpoint:
        print("fetch-predictions: an --endpoint address is required", file=sys.stderr)
        return USAGE_EXIT
    items = load_prompt_items(args.items)
    client = InferenceClient(
        endpoint,
        auth_token=_resolve(args, config, "auth_token"),
        timeout=float(_resolve(args, config, "timeout", 30.0)),
        max_retries=int(_resolve(args, config, "max_retries", 3)),
    )
    with client:
        result = fetch_predictions(
            items, args.output, client, concurrency=int(_resolve(args, config, "concurrency", 4))
        )
    print(
        f"fetched {result.completed} predictions "
        f"({result.resumed} resumed, {len(result.failed)} failed) -> {args.output}"
    )
    return 0


def cmd_expand_templates(args, config) -> int:
    endpoint = _resolve(args, config, "endpoint")
    if not endpoint:
        print("expand-templates: an --endpoint address is required", file=sys.stderr)
        return USAGE_EXIT
    registry = make_registry(_resolve(args, config, "templates"))
    task = TaskKind(args.task)
    template_set = registry.get_set(task)
    seed_template = template_set.variants[0]
    if args.template_id:
        matches = [t for t in template_set.variants if t.id == args.template_id]
        if not matches:
            print(f"expand-templates: no template {args.template_id!r} for {task.value}", file=sys.stderr)
            return DATA_EXIT
        seed_template = matches[0]
    client = GenerationClient(
        endpoint,
        auth_token=_resolve(args, config, "auth_token"),
        timeout=float(_resolve(args, config, "timeout", 60.0)),
        max_retries=int(_resolve(args, config, "max_retries", 3)),
    )
    expansion_kwargs = {}
    prompt_file = _resolve(args, config, "expansion_prompt")
    if prompt_file:
        expansion_kwargs["prompt_template"] = Path(prompt_file).read_text(encoding="utf-8")
    with client:
        result = expand_via_endpoint(
            seed_template, args.purpose, int(args.count), client, **expansion_kwargs
        )
    save_template_sets([result.templates], args.output)
    print(
        f"expansion for {task.value}: requested {result.requested}, "
        f"accepted {result.accepted}, rejected {len(result.rejected)} -> {args.output}"
    )
    for candidate, reason in result.rejected:
        print(f"  rejected: {reason}")
    return 0


def cmd_fuzz_roundtrip(args, config) -> int:
    result = fuzz_roundtrip(
        cases=int(_resolve(args, config, "cases", 100_000)),
        seed=int(_resolve(args, config, "seed", 7)),
        corpus_out=args.corpus_out,
    )
    status = "ok" if result.failures == 0 else "FAILED"
    print(f"round-trip fuzz: {result.cases} cases, {result.failures} failures [{status}]")
    if result.corpus_path:
        print(f"parity corpus -> {result.corpus_path}")
    return 0 if result.failures == 0 else DATA_EXIT


def cmd_serve(args, config) -> int:
    import uvicorn

    host = _resolve(args, config, "host", "127.0.0.1")
    port = int(_resolve(args, config, "port", 8128))
    uvicorn.run("refdial.service:app", host=host, port=port, log_level="warning")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="refdial", description=__doc__)
    parser.add_argument("--version", action="version", version=f"refdial {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("build-dataset", help="turn source annotations into instruction records")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--task", required=True, choices=[t.value for t in TaskKind])
    p.add_argument("--kind", help="source annotation kind (defaults to the task's kind)")
    p.add_argument("--holdout", help="image-key file for leakage exclusion")
    p.add_argument("--seed", type=int)
    p.add_argument("--decimals", type=int)
    p.add_argument("--stage-tag", dest="stage_tag", choices=["stage1", "stage2"])
    p.add_argument("--templates", help="template-set file overriding the built-ins")
    p.add_argument("--manifest", help="manifest path (default: <output>.manifest.json)")
    p.add_argument("--config")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("gen-chessboard", help="build the balanced 2x2 probe set")
    p.add_argument("--input", required=True, help="detection file (pixel boxes)")
    p.add_argument("--output", required=True)
    p.add_argument("--quota", type=int, help="items per quadrant (default 600)")
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--config")
    p.set_defaults(func=cmd_gen_chessboard)

    p = sub.add_parser("eval-chessboard", help="grade probe predictions")
    p.add_argument("--items", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--output", help="machine-readable report path")
    p.add_argument("--config")
    p.set_defaults(func=cmd_eval_chessboard)

    p = sub.add_parser("eval", help="run one evaluation metric")
    p.add_argument("--metric", required=True, choices=EVAL_METRICS)
    p.add_argument("--predictions", required=True)
    p.add_argument("--ground-truth", dest="ground_truth", required=True)
    p.add_argument("--threshold", type=float, help="IoU cutoff for rec (default 0.5)")
    p.add_argument("--output", help="machine-readable report path")
    p.add_argument("--config")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fetch-predictions", help="pull model outputs from an inference endpoint")
    p.add_argument("--items", required=True, help="{item_id, prompt} file")
    p.add_argument("--output", required=True)
    p.add_argument("--endpoint")
    p.add_argument("--auth-token", dest="auth_token")
    p.add_argument("--timeout", type=float)
    p.add_argument("--max-retries", dest="max_retries", type=int)
    p.add_argument("--concurrency", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_fetch_predictions)

    p = sub.add_parser("expand-templates", help="grow a template set via the generation endpoint")
    p.add_argument("--task", required=True, choices=[t.value for t in TaskKind])
    p.add_argument("--purpose", required=True, help="one-line description of the task")
    p.add_argument("--count", required=True, type=int)
    p.add_argument("--output", required=True)
    p.add_argument("--endpoint")
    p.add_argument("--auth-token", dest="auth_token")
    p.add_argument("--timeout", type=float)
    p.add_argument("--max-retries", dest="max_retries", type=int)
    p.add_argument("--templates", help="template-set file providing the seed template")
    p.add_argument("--template-id", dest="template_id")
    p.add_argument(
        "--expansion-prompt",
        dest="expansion_prompt",
        help="file holding the rewriting instructions ({purpose}/{body}/{count}/{placeholders} slots)",
    )
    p.add_argument("--config")
    p.set_defaults(func=cmd_expand_templates)

    p = sub.add_parser("fuzz-roundtrip", help="serialize/parse fuzz; optional parity corpus")
    p.add_argument("--cases", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--corpus-out", dest="corpus_out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_fuzz_roundtrip)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_EXIT
    try:
        config = _load_config(getattr(args, "config", None))
        return args.func(args, config)
    except EndpointError as exc:
        print(f"refdial: endpoint error: {exc}", file=sys.stderr)
        return ENDPOINT_EXIT
    except (ValueError, OSError) as exc:
        print(f"refdial: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
