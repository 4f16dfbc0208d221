"""Command line interface: mine rules, evaluate ranking, score candidates.

Every command writes its primary artifact to --out plus a JSON run
manifest at <out>.manifest.json recording arguments, input digests,
timings, and result counts.  Exit codes: 0 ok, 1 runtime failure
(unreadable data, unreachable endpoint), 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

from . import __version__
from .graph import GraphIndex
from .ingest import ParseError, iter_statements, load_dataset
from .mining import MiningConfig, RuleSet, mine
from .prediction import AGGREGATORS, aggregate, evaluate, fired_confidences, head_index
from .sparql import BackendError, EndpointConfig, SparqlEndpoint, mine_remote
from .types import ALL_RULE_TYPES


class UsageError(Exception):
    """Bad flag combination detected after parsing."""


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _theta(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("theta must be in [0, 1]")
    return value


def _rule_types(text: str) -> tuple[int, ...]:
    try:
        types = tuple(sorted({int(part) for part in text.split(",") if part.strip()}))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")
    if not types or any(t not in ALL_RULE_TYPES for t in types):
        raise argparse.ArgumentTypeError("rule types must be a non-empty subset of 1..6")
    return types


def _effective_threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("HC_THREADS", "")
    if env:
        try:
            value = int(env)
            if value >= 1:
                return value
        except ValueError:
            pass
        print(f"warning: ignoring invalid HC_THREADS={env!r}", file=sys.stderr)
    return 1


def _fmt(args) -> str | None:
    return None if args.format == "auto" else args.format


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _input_entry(path: str) -> dict:
    return {"path": path, "sha256": _sha256(path)}


def _write_manifest(out_path: str, command: str, arguments: dict, inputs: dict, outputs: dict, counts: dict, timings: dict) -> str:
    manifest = {
        "command": command,
        "version": __version__,
        "arguments": arguments,
        "inputs": inputs,
        "outputs": outputs,
        "counts": counts,
        "timings_sec": {k: round(v, 3) for k, v in timings.items()},
    }
    path = out_path + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _mining_config(args, threads: int) -> MiningConfig:
    return MiningConfig(
        theta=args.theta,
        top_properties=args.top_properties,
        top_adjacencies=args.top_adjacencies,
        rule_types=args.rule_types,
        threads=threads,
        scoring=args.scoring,
    )


def _mining_arguments(args, threads: int) -> dict:
    return {
        "theta": args.theta,
        "top_properties": args.top_properties,
        "top_adjacencies": args.top_adjacencies,
        "rule_types": ",".join(str(t) for t in args.rule_types),
        "threads": threads,
        "scoring": args.scoring,
        "format": args.format,
        "lenient": args.lenient,
    }


def cmd_mine(args) -> None:
    threads = _effective_threads(args)
    config = _mining_config(args, threads)
    t0 = time.perf_counter()
    timings: dict[str, float] = {}
    inputs: dict[str, dict] = {}
    arguments = _mining_arguments(args, threads)
    arguments.update(
        {"out": args.out, "train": args.train, "valid": args.valid, "endpoint": args.endpoint, "graph": args.graph}
    )
    if args.endpoint:
        endpoint = SparqlEndpoint(
            EndpointConfig(url=args.endpoint, graph=args.graph, timeout=args.timeout, retries=args.retries)
        )
        arguments.update({"timeout": args.timeout, "retries": args.retries})
        inputs["endpoint"] = {"url": args.endpoint, "graph": args.graph}
        ruleset, properties = mine_remote(endpoint, config)
        timings["mine"] = time.perf_counter() - t0
        n_triples = None
    else:
        if not args.train:
            raise UsageError("mine needs --train or --endpoint")
        split = load_dataset(args.train, args.valid, fmt=_fmt(args), lenient=args.lenient)
        inputs["train"] = _input_entry(args.train)
        if args.valid:
            inputs["valid"] = _input_entry(args.valid)
        timings["load"] = time.perf_counter() - t0
        t1 = time.perf_counter()
        triples = split.evidence(include_valid=True)
        index = GraphIndex(triples, split.n_nodes, split.n_properties)
        ruleset = mine(index, config)
        properties = split.vocab.properties
        timings["mine"] = time.perf_counter() - t1
        n_triples = len(triples)
    text = ruleset.to_tsv(properties)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    timings["total"] = time.perf_counter() - t0
    counts = {"n_rules": len(ruleset)}
    if n_triples is not None:
        counts["n_triples"] = n_triples
    manifest = _write_manifest(args.out, "mine", arguments, inputs, {"rules": args.out}, counts, timings)
    print(f"mined {len(ruleset)} rules -> {args.out}")
    print(f"manifest -> {manifest}")


def cmd_evaluate(args) -> None:
    if bool(args.rules) == bool(args.mine_first):
        raise UsageError("evaluate needs exactly one of --rules or --mine-first")
    threads = _effective_threads(args)
    t0 = time.perf_counter()
    timings: dict[str, float] = {}
    split = load_dataset(args.train, args.valid, args.test, fmt=_fmt(args), lenient=args.lenient)
    timings["load"] = time.perf_counter() - t0
    inputs = {"train": _input_entry(args.train)}
    if args.valid:
        inputs["valid"] = _input_entry(args.valid)
    inputs["test"] = _input_entry(args.test)
    arguments = _mining_arguments(args, threads)
    arguments.update(
        {
            "train": args.train,
            "valid": args.valid,
            "test": args.test,
            "rules": args.rules,
            "mine_first": args.mine_first,
            "agg": args.agg,
            "raw": args.raw,
            "train_only": args.train_only,
            "sample": args.sample,
            "out": args.out,
            "ranks": args.ranks,
        }
    )
    t1 = time.perf_counter()
    if args.mine_first:
        index = GraphIndex(split.train, split.n_nodes, split.n_properties)
        ruleset = mine(index, _mining_config(args, threads))
        timings["mine"] = time.perf_counter() - t1
    else:
        with open(args.rules, "r", encoding="utf-8") as fh:
            ruleset = RuleSet.from_tsv(fh.read(), split.vocab.properties)
        inputs["rules"] = _input_entry(args.rules)
    t2 = time.perf_counter()
    result = evaluate(
        split,
        ruleset,
        agg=args.agg,
        filtered=not args.raw,
        include_valid=not args.train_only,
        threads=threads,
        sample=args.sample,
    )
    timings["evaluate"] = time.perf_counter() - t2
    timings["total"] = time.perf_counter() - t0
    print(result.table())
    print()
    print(result.machine_lines(), end="")
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(result.machine_lines())
    outputs = {"metrics": args.out}
    if args.ranks:
        nodes, properties = split.vocab.nodes, split.vocab.properties
        with open(args.ranks, "w", encoding="utf-8") as fh:
            fh.write("subject\tproperty\tobject\tsubject_rank\tobject_rank\n")
            for (s, p, o), sr, orank in result.ranks:
                fh.write(
                    f"{nodes.resolve(s)}\t{properties.resolve(p)}\t{nodes.resolve(o)}\t{sr:g}\t{orank:g}\n"
                )
        outputs["ranks"] = args.ranks
    counts = {
        "n_rules": len(ruleset),
        "n_test_ranked": result.n_test,
        "n_rankings": result.n_rankings,
        "mrr": round(result.mrr, 6),
        **{f"hits{k}": round(v, 3) for k, v in result.hits.items()},
    }
    manifest = _write_manifest(args.out, "evaluate", arguments, inputs, outputs, counts, timings)
    print(f"metrics -> {args.out}")
    print(f"manifest -> {manifest}")


def cmd_predict(args) -> None:
    threads = _effective_threads(args)
    t0 = time.perf_counter()
    timings: dict[str, float] = {}
    split = load_dataset(args.train, args.valid, fmt=_fmt(args), lenient=args.lenient)
    inputs = {"train": _input_entry(args.train)}
    if args.valid:
        inputs["valid"] = _input_entry(args.valid)
    with open(args.rules, "r", encoding="utf-8") as fh:
        ruleset = RuleSet.from_tsv(fh.read(), split.vocab.properties)
    inputs["rules"] = _input_entry(args.rules)
    candidates = list(iter_statements(args.candidates, fmt=_fmt(args), lenient=args.lenient))
    inputs["candidates"] = _input_entry(args.candidates)
    timings["load"] = time.perf_counter() - t0
    arguments = {
        "train": args.train,
        "valid": args.valid,
        "rules": args.rules,
        "candidates": args.candidates,
        "agg": args.agg,
        "train_only": args.train_only,
        "format": args.format,
        "lenient": args.lenient,
        "out": args.out,
    }
    t1 = time.perf_counter()
    evidence = split.evidence(include_valid=not args.train_only)
    index = GraphIndex(evidence, split.n_nodes, split.n_properties)
    hidx = head_index(ruleset.rules)
    nodes, properties = split.vocab.nodes, split.vocab.properties
    unknown = 0
    lines = []
    for s_label, p_label, o_label in candidates:
        s, p, o = nodes.get(s_label), properties.get(p_label), nodes.get(o_label)
        if s is None or p is None or o is None:
            unknown += 1
            confs: list[float] = []
        else:
            confs = fired_confidences(index, hidx.get(p, ()), s, o)
        score = aggregate(confs, args.agg)
        lines.append(f"{s_label}\t{p_label}\t{o_label}\t{score:.10f}\t{len(confs)}")
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("subject\tproperty\tobject\tscore\tn_fired\n")
        fh.write("".join(line + "\n" for line in lines))
    timings["predict"] = time.perf_counter() - t1
    timings["total"] = time.perf_counter() - t0
    if unknown:
        print(f"warning: {unknown} candidates mention labels outside the evidence", file=sys.stderr)
    counts = {"n_candidates": len(candidates), "n_unknown_label": unknown, "n_rules": len(ruleset)}
    manifest = _write_manifest(args.out, "predict", arguments, inputs, {"scores": args.out}, counts, timings)
    print(f"scored {len(candidates)} candidates -> {args.out}")
    print(f"manifest -> {manifest}")


def _add_data_flags(p: argparse.ArgumentParser, train_required: bool) -> None:
    p.add_argument("--train", required=train_required, help="training triples file")
    p.add_argument("--format", choices=("auto", "tsv", "nt"), default="auto", help="input format (default: by extension)")
    p.add_argument("--lenient", action="store_true", help="skip malformed lines instead of failing")


def _add_mining_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--theta", type=_theta, default=0.001, help="minimum confidence, inclusive (default 0.001)")
    p.add_argument("--top-properties", type=_positive_int, default=200, help="body property pool size P (default 200)")
    p.add_argument("--top-adjacencies", type=_positive_int, default=10, help="second body pool size T (default 10)")
    p.add_argument("--rule-types", type=_rule_types, default=ALL_RULE_TYPES, help="comma list from 1..6 (default all)")
    p.add_argument("--scoring", choices=("standard", "pca"), default="standard", help="rule scoring mode")


def _add_threads_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=_positive_int, default=None, help="worker threads (default: HC_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hornmine",
        description="Horn rule mining on labelled graphs and rule-based link prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_mine = sub.add_parser("mine", help="mine rules from a triples file or SPARQL endpoint")
    _add_data_flags(p_mine, train_required=False)
    p_mine.add_argument("--valid", help="extra triples file mined together with --train")
    _add_mining_flags(p_mine)
    _add_threads_flag(p_mine)
    p_mine.add_argument("--endpoint", help="SPARQL endpoint URL (instead of --train)")
    p_mine.add_argument("--graph", help="named graph IRI for endpoint queries")
    p_mine.add_argument("--timeout", type=float, default=30.0, help="endpoint timeout seconds")
    p_mine.add_argument("--retries", type=int, default=2, help="endpoint retry count")
    p_mine.add_argument("--out", required=True, help="output rules TSV path")
    p_mine.set_defaults(func=cmd_mine)

    p_eval = sub.add_parser("evaluate", help="rank test triples against corruptions")
    _add_data_flags(p_eval, train_required=True)
    p_eval.add_argument("--valid", help="validation triples file (part of evidence by default)")
    p_eval.add_argument("--test", required=True, help="test triples file")
    p_eval.add_argument("--rules", help="rules TSV produced by mine")
    p_eval.add_argument("--mine-first", action="store_true", help="mine rules from --train before evaluating")
    _add_mining_flags(p_eval)
    _add_threads_flag(p_eval)
    p_eval.add_argument("--agg", choices=AGGREGATORS, default="max", help="score aggregation (default max)")
    p_eval.add_argument("--raw", action="store_true", help="raw protocol: known-true corruptions stay in the pool")
    p_eval.add_argument("--train-only", action="store_true", help="exclude valid split from evidence")
    p_eval.add_argument("--sample", type=_positive_int, default=None, help="rank every n-th test triple only")
    p_eval.add_argument("--ranks", help="optional per-triple ranks TSV path")
    p_eval.add_argument("--out", required=True, help="metrics key=value output path")
    p_eval.set_defaults(func=cmd_evaluate)

    p_pred = sub.add_parser("predict", help="score candidate triples with mined rules")
    _add_data_flags(p_pred, train_required=True)
    p_pred.add_argument("--valid", help="additional evidence triples file")
    p_pred.add_argument("--rules", required=True, help="rules TSV produced by mine")
    p_pred.add_argument("--candidates", required=True, help="candidate triples file to score")
    p_pred.add_argument("--agg", choices=AGGREGATORS, default="max", help="score aggregation (default max)")
    p_pred.add_argument("--train-only", action="store_true", help="exclude valid split from evidence")
    _add_threads_flag(p_pred)
    p_pred.add_argument("--out", required=True, help="scored candidates TSV path")
    p_pred.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, ParseError, BackendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
