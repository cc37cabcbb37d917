"""Command-line front door.

Subcommands: search (run the loop from a config file), analyze (cost figures
for one architecture), fairness (metrics from a predictions CSV), validate
(architecture against a choices file), log (inspect a run log).

Exit codes: 0 success, 1 a validation or metric failure was reported,
2 usage or input-file error, 3 backend or transport failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .arch import ValidationReport, Violation, parse_architecture, parse_choices, \
    validate
from .cost import cost_report, cost_report_to_dict, parse_profile
from .errors import ApiError, ConfigError, CorruptLogError, EmptyInput, \
    ExhaustedRetries, FairarchError, MalformedResponse, ParseError, ProtocolError, \
    SchemaError, SchemaMismatch, ShapeError, SpawnError, TrainerFailure, \
    TrainerTimeout, TransportError
from .fairness import eodd, eopp1, eopp2, format_metrics_report, group_accuracies, \
    group_stat_to_dict, overall_accuracy, parse_predictions_csv, parse_schema, \
    unfairness
from .search import get_best_metrics, load_run, load_search_config, run_search


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as f:
        return f.read()


def _fmt4(x: float | None) -> str:
    return "undefined" if x is None else f"{x:.4f}"


# ---------------------------------------------------------------------------
# validation report rendering

def validation_report_to_dict(report: ValidationReport) -> dict:
    return {
        "valid": report.valid,
        "violations": [
            {"layer_index": v.layer_index, "code": v.code, "message": v.message}
            for v in report.violations
        ],
        "per_layer_shapes": None if report.per_layer_shapes is None
        else [[s.channels, s.height, s.width] for s in report.per_layer_shapes],
    }


def render_validation_report(report: ValidationReport) -> str:
    lines = [f"valid: {'true' if report.valid else 'false'}"]
    if report.per_layer_shapes is not None:
        chain = " -> ".join(f"{s.channels}x{s.height}x{s.width}"
                            for s in report.per_layer_shapes)
        lines.append(f"shapes: {chain}")
    for v in report.violations:
        where = "architecture" if v.layer_index < 0 else f"layer {v.layer_index}"
        lines.append(f"- {where}: {v.code}: {v.message}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# subcommands

def cmd_search(args) -> int:
    cfg = load_search_config(args.config)
    if args.iters is not None:
        if args.iters < 1:
            print("error: --iters must be >= 1", file=sys.stderr)
            return 2
        cfg = dataclasses.replace(cfg, iter_max=args.iters)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, run_log_path=args.out)
    if args.mock_replies is not None and args.llm is None:
        args.llm = "mock"
    if args.llm == "mock":
        mock_path = args.mock_replies or cfg.llm.mock_replies_path
        if mock_path is None:
            print("error: mock backend needs --mock-replies or a configured path",
                  file=sys.stderr)
            return 2
        cfg = dataclasses.replace(
            cfg, llm=dataclasses.replace(cfg.llm, mock_replies_path=mock_path))
    elif args.llm == "http":
        cfg = dataclasses.replace(
            cfg, llm=dataclasses.replace(cfg.llm, mock_replies_path=None))

    result = run_search(cfg, resume=args.resume)
    print(f"best: {result.name} {format_metrics_report(result.metrics)}")
    return 0


def cmd_analyze(args) -> int:
    arch = parse_architecture(_read(args.arch))
    profile = parse_profile(_read(args.device))
    if args.batch < 1:
        print("error: --batch must be >= 1", file=sys.stderr)
        return 2
    try:
        report = cost_report(arch, args.batch, profile)
    except ShapeError as e:
        vr = ValidationReport(
            valid=False,
            per_layer_shapes=None,
            violations=(Violation(e.layer_index, "SHAPE_ERROR", e.message),),
        )
        if args.json:
            print(json.dumps(validation_report_to_dict(vr), indent=2))
        else:
            print(render_validation_report(vr))
        return 1
    if args.json:
        print(json.dumps(cost_report_to_dict(report), indent=2))
    else:
        print(f"param_count: {report.param_count}")
        print(f"flops: {report.flops}")
        print(f"peak_memory_bytes: {report.peak_memory_bytes}")
        print(f"latency_s: {report.latency_s:.6e}")
        print(f"throughput_items_per_s: {report.throughput_items_per_s:.2f}")
    return 0


def cmd_fairness(args) -> int:
    schema = parse_schema(_read(args.schema))
    records = parse_predictions_csv(_read(args.csv), schema)
    acc = overall_accuracy(records)
    stats = group_accuracies(records, schema)
    scores = {
        "overall_acc": acc,
        "unfairness": unfairness(records, schema),
        "eodd": eodd(records, schema),
        "eopp1": eopp1(records, schema),
        "eopp2": eopp2(records, schema),
    }
    if args.json:
        doc = dict(scores)
        doc["group_detail"] = {g: group_stat_to_dict(s) for g, s in stats.items()}
        print(json.dumps(doc, indent=2))
    else:
        detail = ", ".join(
            f"{g}: ({'undefined' if s.accuracy is None else f'{s.accuracy * 100:.2f}%'}, "
            f"{s.correct})"
            for g, s in stats.items()
        )
        print(
            f"Overall Acc: {acc * 100:.2f}%, "
            f"Unfairness Score: {_fmt4(scores['unfairness'])}, "
            f"EODD: {_fmt4(scores['eodd'])}, "
            f"EOPP1: {_fmt4(scores['eopp1'])}, "
            f"EOPP2: {_fmt4(scores['eopp2'])}, "
            f"Fairness Detail: [{detail}]"
        )
    undefined = any(scores[k] is None for k in ("eodd", "eopp1", "eopp2"))
    return 1 if undefined else 0


def cmd_validate(args) -> int:
    arch = parse_architecture(_read(args.arch))
    choices = parse_choices(_read(args.choices))
    report = validate(arch, choices)
    if args.json:
        print(json.dumps(validation_report_to_dict(report), indent=2))
    else:
        print(render_validation_report(report))
    return 0 if report.valid else 1


def cmd_log(args) -> int:
    loaded = load_run(args.run)
    if loaded.dropped_lines:
        print(f"warning: dropped {loaded.dropped_lines} torn trailing line(s)",
              file=sys.stderr)
    best = get_best_metrics(loaded.archive)
    if args.json:
        doc = {
            "iterations": [
                {
                    "iteration": r.iteration,
                    "status": r.status,
                    "name": r.name,
                    "attempts": r.attempts,
                    "error": r.error,
                }
                for r in loaded.records
            ],
            "dropped_lines": loaded.dropped_lines,
            "best": best.name if best else None,
        }
        print(json.dumps(doc, indent=2))
    else:
        for r in loaded.records:
            line = f"iter {r.iteration}: {r.status}"
            if r.status == "ok":
                m = r.metrics
                line += (f" {r.name} attempts={r.attempts}"
                         f" unfairness={_fmt4(m.unfairness)}"
                         f" valid_acc={m.valid_acc * 100:.2f}%"
                         f" params={m.cost.param_count}")
            else:
                line += f" attempts={r.attempts} error: {r.error}"
            print(line)
        if best is not None:
            print(f"best: {best.name}")
    return 0


# ---------------------------------------------------------------------------
# parser and dispatch

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairarch",
        description="Search over small CNN architectures for accuracy, group "
                    "fairness, and hardware cost.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the search loop from a config file")
    p.add_argument("--config", required=True, help="search config JSON")
    p.add_argument("--iters", type=int, default=None, help="override iter_max")
    p.add_argument("--llm", choices=["mock", "http"], default=None,
                   help="override the backend kind")
    p.add_argument("--mock-replies", default=None,
                   help="scripted reply file (one JSON string per line)")
    p.add_argument("--out", default=None, help="override the run log path")
    p.add_argument("--resume", action="store_true",
                   help="continue from an existing run log")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("analyze", help="static cost report for one architecture")
    p.add_argument("arch", help="architecture JSON file")
    p.add_argument("--device", required=True, help="device profile JSON")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fairness", help="fairness metrics from a predictions CSV")
    p.add_argument("csv", help="predictions CSV file")
    p.add_argument("--schema", required=True, help="demographic schema JSON")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_fairness)

    p = sub.add_parser("validate", help="check an architecture against a choices file")
    p.add_argument("arch", help="architecture JSON file")
    p.add_argument("--choices", required=True, help="choices JSON file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("log", help="inspect a run log")
    p.add_argument("run", help="run log JSONL file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_log)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, SchemaError, SchemaMismatch, EmptyInput,
            CorruptLogError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (TransportError, ApiError, MalformedResponse, ExhaustedRetries,
            SpawnError, ProtocolError, TrainerFailure, TrainerTimeout) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except FairarchError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


def main_entry() -> None:
    sys.exit(main())
