"""Command-line front end: walks, train, encode, search, eval.

Every subcommand accepts ``--config FILE``: a flat ``key = value`` file whose
keys are flag names (``walk-length = 80``). Explicit flags override the file,
which overrides built-in defaults.
"""
from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
from pathlib import Path

from . import __version__
from .codes import binarize, load_codes, save_codes
from .evaluation import DEFAULT_KS, EvalConfig, feature_codes, format_table, format_tsv, run_benchmark
from .graph import (AttributeMatrix, GraphFormatError, graph_from_vocab, load_attributes,
                    load_edge_list, load_labels, read_vocab, write_vocab)
from .model import TrainConfig, TrainHistory, default_iterations, load_checkpoint, save_checkpoint, train
from .search import top_k
from .walks import PairCounts, WalkConfig, collect_pairs, count_context_pairs, generate_walks

log = logging.getLogger("binaryne")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def read_config(path) -> dict[str, str]:
    """Parse a flat ``key = value`` (or ``key value``) file; ``#`` starts a comment."""
    entries = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
        else:
            parts = line.split(None, 1)
            key, value = parts[0], parts[1].strip() if len(parts) > 1 else ""
        if not key:
            raise GraphFormatError("missing key", path, lineno)
        entries[key.replace("_", "-")] = value
    return entries


def _config_argv(parser: argparse.ArgumentParser, entries: dict[str, str], path) -> list[str]:
    actions = {opt: a for a in parser._actions for opt in a.option_strings}
    argv = []
    for key, value in entries.items():
        opt = f"--{key}"
        action = actions.get(opt)
        if action is None or key == "config":
            raise GraphFormatError(f"unknown config key {key!r}", path)
        if isinstance(action, argparse._StoreTrueAction):
            low = value.lower()
            if low not in _TRUE | _FALSE:
                raise GraphFormatError(f"{key} expects true/false, got {value!r}", path)
            if low in _TRUE:
                argv.append(opt)
        elif isinstance(action, argparse._AppendAction):
            for item in value.split(","):
                argv += [opt, item.strip()]
        else:
            argv += [opt, value]
    return argv


def _positive(kind):
    def parse(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _ks(text):
    try:
        ks = tuple(int(k) for k in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("cutoffs must be positive")
    return ks


def _add_common(p):
    p.add_argument("--config", metavar="FILE", help="flat key = value file of flag defaults")
    p.add_argument("--seed", type=int, default=1, help="seed for every stochastic stage (default 1)")
    p.add_argument("--threads", type=_positive(int), default=1,
                   help="worker threads; >1 makes training non-deterministic (default 1)")
    p.add_argument("--delimiter", default=None, help="field delimiter of input files (default: whitespace)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")


def _add_walk_flags(p):
    p.add_argument("--walk-length", type=_positive(int), default=100)
    p.add_argument("--walks-per-node", type=_positive(int), default=40)
    p.add_argument("--window", type=_positive(int), default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="binaryne", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("walks", help="random walks and context-pair counts")
    p.add_argument("--edges", required=True)
    p.add_argument("--out", required=True, metavar="PREFIX", help="writes PREFIX.pairs and PREFIX.vocab")
    p.add_argument("--dump-walks", metavar="FILE", help="also write walks, one per line")
    _add_walk_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_walks)

    p = sub.add_parser("train", help="train BinaryNE and emit binary codes")
    p.add_argument("--edges", required=True)
    p.add_argument("--attrs", help="node attr weight triplets")
    p.add_argument("--structure-only", action="store_true", help="ignore attributes")
    p.add_argument("--skip-unknown", action="store_true", help="skip attribute lines with unknown node ids")
    p.add_argument("--pairs", help="precomputed pair counts from 'walks' (skips walk generation)")
    p.add_argument("--out", required=True, metavar="PREFIX", help="writes PREFIX.ckpt, PREFIX.codes, PREFIX.vocab")
    p.add_argument("--dim", type=_positive(int), default=128)
    p.add_argument("--iters", type=int, default=None,
                   help="SGD iterations (default 1e8 below 5k nodes, 2e8 below 1M, else 1e9)")
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--eta-start", type=float, default=0.025)
    p.add_argument("--eta-end", type=float, default=2.5e-6)
    p.add_argument("--beta-start", type=float, default=0.01)
    p.add_argument("--beta-end", type=float, default=1.0)
    p.add_argument("--switch-prob", type=float, default=0.5)
    p.add_argument("--noise-power", type=float, default=0.75)
    p.add_argument("--grad-clip", type=float, default=None)
    p.add_argument("--log-every", type=_positive(int), default=1_000_000)
    _add_walk_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="binarize a checkpoint into a code file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="code file to write")
    _add_common(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("search", help="top-K Hamming search for query nodes")
    p.add_argument("--codes", required=True)
    p.add_argument("--vocab", help="id sidecar (default: codes path with .vocab suffix)")
    p.add_argument("--query", action="append", default=[], metavar="ID", help="query node id (repeatable)")
    p.add_argument("--queries", metavar="FILE", help="file of query ids, one per line")
    p.add_argument("-k", "--top-k", type=_positive(int), default=10)
    p.add_argument("--include-self", action="store_true", help="keep the query node among candidates")
    p.add_argument("--timing", action="store_true", help="append per-query distance-pass milliseconds")
    p.add_argument("--output", metavar="FILE", help="write TSV here instead of stdout")
    _add_common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="precision@K and MAP@K over all labeled nodes")
    p.add_argument("--codes", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--vocab", help="id sidecar (default: codes path with .vocab suffix)")
    p.add_argument("--ks", type=_ks, default=DEFAULT_KS, help="comma-separated cutoffs (default 100,200,500)")
    p.add_argument("--include-query", action="store_true", help="count the query node as a candidate")
    p.add_argument("--features", metavar="ATTRS", help="add the raw-feature Hamming baseline from this file")
    p.add_argument("--name", default="BinaryNE", help="method name for the report row")
    p.add_argument("--format", choices=("table", "tsv"), default="table")
    p.add_argument("--output", metavar="FILE", help="also write the TSV report here")
    _add_common(p)
    p.set_defaults(func=cmd_eval)
    return parser


def _find_config(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    config = _find_config(argv)
    if config is not None:
        choices = parser._subparsers._group_actions[0].choices
        command = next((tok for tok in argv if tok in choices), None)
        if command is not None:
            extra = _config_argv(choices[command], read_config(config), config)
            at = argv.index(command) + 1
            argv = argv[:at] + extra + argv[at:]
    return parser.parse_args(argv)


def _vocab_path(codes_path, explicit):
    return explicit if explicit else str(Path(codes_path).with_suffix(".vocab"))


def _walk_config(args) -> WalkConfig:
    return WalkConfig(walk_length=args.walk_length, walks_per_node=args.walks_per_node,
                      window=args.window, seed=args.seed)


def cmd_walks(args) -> int:
    graph = load_edge_list(args.edges, args.delimiter)
    cfg = _walk_config(args)
    log.info("generating %d walks (%d per node)", graph.node_count * cfg.walks_per_node, cfg.walks_per_node)
    if args.dump_walks:
        walks = generate_walks(graph, cfg)
        walks.dump(args.dump_walks, graph.ids)
        counts = count_context_pairs(walks, cfg.window, graph.node_count)
        if counts.size == 0:
            log.warning("no context pairs collected")
    else:
        counts = collect_pairs(graph, cfg, args.threads)
    counts.save(f"{args.out}.pairs")
    write_vocab(graph.ids, f"{args.out}.vocab")
    log.info("wrote %s.pairs (%d pairs, total %d)", args.out, counts.size, counts.total)
    return 0


def cmd_train(args) -> int:
    graph = load_edge_list(args.edges, args.delimiter)
    if args.structure_only or not args.attrs:
        if not args.structure_only:
            log.warning("no --attrs given; training on structure only")
        attrs = AttributeMatrix.empty(graph.node_count)
    else:
        attrs = load_attributes(args.attrs, graph, args.delimiter, strict=not args.skip_unknown)
    if args.pairs:
        counts = PairCounts.load(args.pairs, graph.node_count)
    else:
        counts = collect_pairs(graph, _walk_config(args), args.threads)
    iters = args.iters if args.iters is not None else default_iterations(graph.node_count)
    cfg = TrainConfig(max_iters=iters, negatives=args.negatives, eta_start=args.eta_start,
                      eta_end=args.eta_end, beta_start=args.beta_start, beta_end=args.beta_end,
                      seed=args.seed, switch_prob=args.switch_prob, noise_power=args.noise_power,
                      grad_clip=args.grad_clip, log_every=args.log_every, threads=args.threads)
    history = TrainHistory()
    outputs = [f"{args.out}.ckpt", f"{args.out}.codes", f"{args.out}.vocab"]
    try:
        params = train(graph, counts, attrs, cfg, d=args.dim, history=history)
        save_checkpoint(params, outputs[0])
        save_codes(binarize(params), outputs[1])
        write_vocab(graph.ids, outputs[2])
    except BaseException:
        for path in outputs:
            if os.path.exists(path):
                os.remove(path)
        raise
    log.info("branch counts: structure %d, attribute %d", history.structure_steps, history.attribute_steps)
    log.info("wrote %s", ", ".join(outputs))
    return 0


def cmd_encode(args) -> int:
    params = load_checkpoint(args.checkpoint)
    save_codes(binarize(params), args.out)
    src_vocab = Path(args.checkpoint).with_suffix(".vocab")
    dst_vocab = Path(args.out).with_suffix(".vocab")
    if src_vocab.exists() and src_vocab.resolve() != dst_vocab.resolve():
        shutil.copyfile(src_vocab, dst_vocab)
    log.info("wrote %s (%d codes, %d bits)", args.out, params.node_count, params.d)
    return 0


def cmd_search(args) -> int:
    codes = load_codes(args.codes)
    ids = read_vocab(_vocab_path(args.codes, args.vocab))
    if len(ids) != codes.node_count:
        raise GraphFormatError(f"vocab has {len(ids)} ids but code file has {codes.node_count} rows")
    index = {s: i for i, s in enumerate(ids)}
    queries = list(args.query)
    if args.queries:
        queries += [q.strip() for q in Path(args.queries).read_text(encoding="utf-8").splitlines() if q.strip()]
    if not queries:
        raise ValueError("no query ids given (use --query or --queries)")
    unknown = [q for q in queries if q not in index]
    if unknown:
        raise KeyError(f"unknown query id(s): {', '.join(unknown[:5])}")
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for q in queries:
            result = top_k(codes, index[q], args.top_k, exclude_self=not args.include_self)
            for rank, (node, dist) in enumerate(result.entries(), 1):
                row = f"{q}\t{rank}\t{ids[node]}\t{dist}"
                if args.timing:
                    row += f"\t{1000.0 * result.elapsed:.4f}"
                out.write(row + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_eval(args) -> int:
    codes = load_codes(args.codes)
    graph = graph_from_vocab(_vocab_path(args.codes, args.vocab))
    if graph.node_count != codes.node_count:
        raise GraphFormatError(f"vocab has {graph.node_count} ids but code file has {codes.node_count} rows")
    labels = load_labels(args.labels, graph, args.delimiter)
    if len(labels) == 0:
        raise ValueError(f"{args.labels}: no labels; nothing to evaluate")
    cfg = EvalConfig(ks=args.ks, exclude_query=not args.include_query)
    reports = [run_benchmark(codes, labels, cfg, method=args.name)]
    if args.features:
        attrs = load_attributes(args.features, graph, args.delimiter, strict=False)
        reports.append(run_benchmark(feature_codes(attrs), labels, cfg, method="Feature"))
    for r in reports:
        if r.zero_denominator:
            log.warning("%s: %d singleton-class queries scored AP 0", r.method, r.zero_denominator)
    sys.stdout.write(format_table(reports) if args.format == "table" else format_tsv(reports))
    if args.output:
        Path(args.output).write_text(format_tsv(reports), encoding="utf-8")
    return 0


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except GraphFormatError as exc:
        print(f"binaryne: error: {exc}", file=sys.stderr)
        return 2
    level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    # basicConfig is a no-op when the host already configured logging
    log.setLevel(level)
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    log.info("resolved config: %s", resolved)
    try:
        return args.func(args)
    except (GraphFormatError, ValueError, KeyError, OSError, FloatingPointError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        log.error("%s", msg)
        return 1


if __name__ == "__main__":
    sys.exit(main())
