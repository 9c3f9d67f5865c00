"""``alr`` command line.

Exit codes: 0 success, 2 validation failure (including malformed input or
output that fails the template), 3 transport failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import int_list, load_config_file, resolve
from .distill import HttpChatClient, TransportError, run_pipeline, task_from_json
from .egra import EgraConfig, allocate
from .evaluation import (EvalRecord, error_breakdown, evidence_prf, length_truncate,
                         metric_accuracy, metric_anls, metric_token_f1, rag_sweep)
from .grammar import parse_alr
from .grpo import group_advantages, score_group, zero_advantage_filter, RolloutGroup
from .rewards import GroundTruth, RewardWeights, total_reward
from .service import ServiceConfig, canonicalize, serve, serve_stdio

EXIT_OK, EXIT_INVALID, EXIT_TRANSPORT = 0, 2, 3


class CliError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


# key -> (converter, default)
SETTINGS = {
    "weights": (RewardWeights.parse, RewardWeights()),
    "beta": (float, 2.0),
    "tau": (float, 0.5),
    "epsilon": (float, 1e-8),
    "tol": (float, 1e-9),
    "host": (str, "127.0.0.1"),
    "port": (int, 8000),
    "max_batch_size": (int, 1024),
    "request_timeout": (float, 60.0),
    "seed": (int, 0),
    "fraction": (float, 0.7),
    "hi": (int, 1024),
    "lo": (int, 256),
    "page_id_overhead": (int, 3),
    "question_tokens": (int, 0),
    "prompt": (str, "alr"),
    "distractors": (int, 2),
    "concurrency": (int, 8),
    "attempts": (int, 3),
    "eval_beta": (float, 1.0),
    "metric": (str, "anls"),
    "mode": (str, "relaxed"),
    "ks": (int_list, [1, 2, 5, 10, 20]),
    "targets": (int_list, [10, 20, 40]),
}


class _Settings:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file = load_config_file(args.config) if args.config else {}

    def __getitem__(self, key: str):
        convert, default = SETTINGS[key]
        return resolve(key, getattr(self.args, key, None), self.file, default, convert)


def read_jsonl(path: str) -> list[dict]:
    stream = sys.stdin if path == "-" else open(path, encoding="utf-8")
    rows = []
    with stream:
        for n, line in enumerate(stream, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CliError(f"{path}:{n}: bad JSON: {exc}") from None
            if not isinstance(row, dict):
                raise CliError(f"{path}:{n}: expected a JSON object")
            rows.append(row)
    return rows


def _pair_rows(preds: list[dict], gts: list[dict]) -> list[tuple[dict, dict]]:
    """Join on sample_id when every gold row has one, otherwise by line position."""
    if gts and all("sample_id" in g for g in gts):
        index = {str(g["sample_id"]): g for g in gts}
        pairs = []
        for i, p in enumerate(preds):
            sid = str(p.get("sample_id", ""))
            if sid not in index:
                raise CliError(f"prediction {i} ({sid!r}) has no matching gold row")
            pairs.append((p, index[sid]))
        return pairs
    if len(preds) != len(gts):
        raise CliError(f"{len(preds)} predictions vs {len(gts)} gold rows")
    return list(zip(preds, gts))


def _emit(obj) -> None:
    print(json.dumps(canonicalize(obj), ensure_ascii=False))


def cmd_parse(args, s: _Settings) -> int:
    raw = sys.stdin.read() if args.file == "-" else Path(args.file).read_text(encoding="utf-8")
    outcome = parse_alr(raw, strict=not args.lenient)
    _emit(outcome.to_dict())
    return EXIT_OK if outcome.ok else EXIT_INVALID


def cmd_score(args, s: _Settings) -> int:
    w, beta, tau = s["weights"], s["beta"], s["tau"]
    for pred, gt in _pair_rows(read_jsonl(args.pred), read_jsonl(args.gt)):
        b = total_reward(pred.get("response", ""), GroundTruth.from_dict(gt), w, beta, tau)
        _emit(b.to_dict())
    return EXIT_OK


def cmd_advantages(args, s: _Settings) -> int:
    w, beta, tau, eps, tol = s["weights"], s["beta"], s["tau"], s["epsilon"], s["tol"]
    for i, row in enumerate(read_jsonl(args.input)):
        qid = str(row.get("question_id", i))
        if "rewards" in row:
            rewards = tuple(float(r) for r in row["rewards"])
            group = RolloutGroup(qid, rewards, tuple(group_advantages(rewards, eps)))
            group = zero_advantage_filter(group, tol)
        else:
            group = score_group(row["responses"], GroundTruth.from_dict(row), w, beta, tau,
                                eps, tol, qid)
        _emit(group.to_dict())
    return EXIT_OK


def cmd_allocate(args, s: _Settings) -> int:
    cfg = EgraConfig(hi_budget=s["hi"], lo_budget=s["lo"], downsample_fraction=s["fraction"],
                     page_id_overhead=s["page_id_overhead"], question_tokens=s["question_tokens"])
    plan = allocate(args.pages, args.evidence or [], cfg, s["seed"])
    _emit(plan.to_dict())
    return EXIT_OK


def cmd_distill(args, s: _Settings) -> int:
    kind, n, seed = s["prompt"], s["distractors"], s["seed"]
    tasks = [task_from_json(row, n, seed, kind) for row in read_jsonl(args.tasks)]
    teacher = HttpChatClient.from_env("TEACHER")
    judge = HttpChatClient.from_env("JUDGE")
    with open(args.out, "w", encoding="utf-8") as out:
        summary = run_pipeline(tasks, teacher, judge, out, s["concurrency"], s["attempts"])
    print(json.dumps(summary.to_dict()), file=sys.stderr)
    return EXIT_TRANSPORT if summary.transport_failures else EXIT_OK


def _records(args) -> list[EvalRecord]:
    return [EvalRecord.from_json(p, g) for p, g in _pair_rows(read_jsonl(args.pred), read_jsonl(args.gt))]


def cmd_eval(args, s: _Settings) -> int:
    records = _records(args)
    metric = s["metric"]
    if metric == "anls":
        result = {"anls": metric_anls(records)}
    elif metric == "acc":
        mode = s["mode"]
        result = {"accuracy": metric_accuracy(records, mode), "mode": mode}
    elif metric == "prf":
        p, r, f = evidence_prf(records, s["eval_beta"])
        result = {"precision": p, "recall": r, "f_beta": f, "beta": s["eval_beta"]}
    elif metric == "token-f1":
        result = {"token_f1": metric_token_f1(records)}
    else:
        raise CliError(f"unknown metric {metric!r}")
    result["n"] = len(records)
    _emit(result)
    return EXIT_OK


def cmd_breakdown(args, s: _Settings) -> int:
    table = error_breakdown(_records(args))
    if args.format in ("json", "both"):
        _emit(table.to_dict())
    if args.format in ("text", "both"):
        print(table.to_text())
    return EXIT_OK


def cmd_rag_sweep(args, s: _Settings) -> int:
    gts = {str(g["sample_id"]): g for g in read_jsonl(args.gt)}
    samples = []
    for row in read_jsonl(args.scores):
        sid = str(row["sample_id"])
        if sid not in gts:
            raise CliError(f"scores for {sid!r} have no gold row")
        scores = {int(p): float(v) for p, v in row["scores"].items()}
        samples.append((scores, gts[sid].get("evidence_pages", [])))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["k", "precision", "recall", "f1"])
    for row in rag_sweep(samples, s["ks"]):
        writer.writerow([row.k] + [canonicalize(x) for x in (row.precision, row.recall, row.f1)])
    return EXIT_OK


def cmd_length_sweep(args, s: _Settings) -> int:
    evidence = args.evidence or []
    for target in s["targets"]:
        pages = length_truncate(args.doc_pages, evidence, target, f"{s['seed']}:{target}")
        _emit({"target_len": target, "pages": pages})
    return EXIT_OK


def cmd_serve(args, s: _Settings) -> int:
    cfg = ServiceConfig(host=s["host"], port=s["port"], weights=s["weights"], beta=s["beta"],
                        tau=s["tau"], epsilon=s["epsilon"], tol=s["tol"],
                        max_batch_size=s["max_batch_size"], request_timeout=s["request_timeout"])
    if args.stdio:
        serve_stdio(cfg)
    else:
        serve(cfg)
    return EXIT_OK


def _reward_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--weights", type=RewardWeights.parse, help="format,evidence,answer (default 0.1,0.3,0.6)")
    p.add_argument("--beta", type=float, help="evidence F-beta (default 2.0)")
    p.add_argument("--tau", type=float, help="ANLS threshold (default 0.5)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value defaults file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", parents=[common], help="validate one response file")
    p.add_argument("file")
    p.add_argument("--lenient", action="store_true", help="ignore text outside the tags")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("score", parents=[common], help="reward each prediction")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    _reward_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("advantages", parents=[common], help="group-relative advantages per JSONL group")
    p.add_argument("--input", required=True)
    _reward_flags(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_advantages)

    p = sub.add_parser("allocate", parents=[common], help="per-page token budgets")
    p.add_argument("--pages", type=int, required=True)
    p.add_argument("--evidence", type=int_list)
    p.add_argument("--seed", type=int)
    p.add_argument("--fraction", type=float)
    p.add_argument("--hi", type=int)
    p.add_argument("--lo", type=int)
    p.add_argument("--page-id-overhead", dest="page_id_overhead", type=int)
    p.add_argument("--question-tokens", dest="question_tokens", type=int)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("distill", parents=[common], help="teacher distillation with verification")
    p.add_argument("--tasks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prompt", choices=["alr", "vanilla"])
    p.add_argument("--distractors", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--concurrency", type=int)
    p.add_argument("--attempts", type=int)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("eval", parents=[common], help="benchmark metrics")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--metric", choices=["anls", "acc", "prf", "token-f1"])
    p.add_argument("--mode", choices=["relaxed", "strict"])
    p.add_argument("--beta", dest="eval_beta", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("breakdown", parents=[common], help="recall x accuracy error table")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--format", choices=["json", "text", "both"], default="both")
    p.set_defaults(func=cmd_breakdown)

    p = sub.add_parser("rag-sweep", parents=[common], help="retrieval P/R/F1 per k as CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--ks", type=int_list)
    p.set_defaults(func=cmd_rag_sweep)

    p = sub.add_parser("length-sweep", parents=[common], help="evidence-preserving truncations")
    p.add_argument("--doc-pages", dest="doc_pages", type=int, required=True)
    p.add_argument("--evidence", type=int_list)
    p.add_argument("--targets", type=int_list)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_length_sweep)

    p = sub.add_parser("serve", parents=[common], help="run the reward service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--stdio", action="store_true", help="JSON line protocol on stdin/stdout")
    _reward_flags(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-batch-size", dest="max_batch_size", type=int)
    p.add_argument("--request-timeout", dest="request_timeout", type=float)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, _Settings(args))
    except TransportError as exc:
        print(f"alr: transport failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (CliError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"alr {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
