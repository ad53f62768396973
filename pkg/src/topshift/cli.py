"""Command-line interface: ``topshift <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus
from .config import ConfigError, default_seed, load_config, parse_config_text
from .errors import (
    CheckpointError,
    DataError,
    InconsistentMask,
    LengthMismatch,
    TopShiftError,
    TransitionError,
    TreeError,
)
from .metrics import AXES, breakdown_report, evaluate, format_breakdown, format_report
from .oracle import oracle_actions
from .transitions import ALL_SYSTEMS, format_actions
from .tree import parse_tree, serialize_tree

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
SYSTEMS = [s.value for s in ALL_SYSTEMS]


class UsageError(Exception):
    pass


class _ArgParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write(text: str, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load(args):
    return corpus.load_dataset(args.data, args.format)


def cmd_validate(args):
    ds = _load(args)
    print(f"OK\t{len(ds)} examples\t{len(ds.label_vocab)} labels")


def cmd_stats(args):
    print(corpus.dataset_stats(_load(args)).format())


def cmd_oracle(args):
    ds = _load(args)
    _write("".join(format_actions(oracle_actions(ex.tree, args.system)) + "\n" for ex in ds), args.out)


def cmd_gen(args):
    data = parse_config_text(Path(args.spec).read_text(encoding="utf-8")) if args.spec else {}
    data["seed"] = args.seed
    spec = corpus.GrammarSpec.from_dict(data)
    ds = corpus.gen_synthetic(spec, args.count)
    _write(corpus.dump_dataset(ds, args.format), args.out)
    print(f"generated {len(ds)} examples, {100 * corpus.compositional_fraction(ds):.2f}% compositional",
          file=sys.stderr)


def cmd_spis(args):
    res = corpus.spis_sample(_load(args), args.n, args.seed)
    _write(corpus.dump_dataset(res.dataset, args.format), args.out)
    print(f"selected {res.size} examples", file=sys.stderr)
    if res.under_supported:
        print("under-supported: " + " ".join(map(str, res.under_supported)), file=sys.stderr)


def _parse_sets(pairs):
    out = {}
    for p in pairs or ():
        if "=" not in p:
            raise UsageError(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_train(args):
    from .training import load_features, save_checkpoint, train

    overrides = _parse_sets(args.set)
    if args.system:
        overrides["system"] = args.system
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    cfg = load_config(args.config, **overrides)
    train_set = corpus.load_dataset(args.data, args.format, split="train")
    valid_set = corpus.load_dataset(args.valid, args.format, split="valid") if args.valid else None
    features = None
    if args.features:
        features = _feature_map(load_features(args.features), train_set, valid_set)
    logf = open(args.log, "w", encoding="utf-8") if args.log else None

    def progress(entry):
        line = json.dumps(entry)
        print(line, file=logf or sys.stderr, flush=True)

    try:
        res = train(train_set, valid_set, cfg, features=features, progress=progress)
    finally:
        if logf:
            logf.close()
    save_checkpoint(res.parser, args.out)
    print(f"saved {args.out}\tvalid_em={res.final_em:.4f}", file=sys.stderr)


def _feature_map(blocks, *datasets):
    utts = [ex.utterance for ds in datasets if ds is not None for ex in ds]
    if len(blocks) != len(utts):
        raise DataError(f"feature file has {len(blocks)} utterances, data has {len(utts)}")
    out = {}
    for u, b in zip(utts, blocks):
        if b.shape[0] != len(u):
            raise DataError(f"feature block has {b.shape[0]} rows for a {len(u)}-token utterance")
        out[u] = b
    return out


def _read_utterances(path):
    utts = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("["):
            utts.append(parse_tree(line).utterance)
        else:
            utts.append(tuple(line.split("\t")[-1].split()) if "\t" in line else tuple(line.split()))
    if not utts:
        raise DataError(f"{path} contains no utterances")
    return utts


def cmd_parse(args):
    from .training import load_checkpoint, load_features

    if args.beam < 1:
        raise UsageError("--beam must be >= 1")
    parser = load_checkpoint(args.model)
    utts = _read_utterances(args.data)
    features = None
    if args.features:
        features = {}
        blocks = load_features(args.features)
        if len(blocks) != len(utts):
            raise DataError(f"feature file has {len(blocks)} utterances, input has {len(utts)}")
        features = dict(zip(utts, blocks))
    results = parser.parse(utts, args.beam, features)
    lines = []
    for u, r in zip(utts, results):
        cols = [" ".join(u)]
        if r is None:
            cols += ["-", "-inf"]
            trace = ""
        else:
            cols += [serialize_tree(r.tree), f"{r.score:.6f}"]
            trace = format_actions(r.actions)
        if args.trace:
            cols.append(trace)
        lines.append("\t".join(cols) + "\n")
    _write("".join(lines), args.out)


def _read_trees(path, allow_missing):
    trees = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        # bare trees, tsv3 rows and `parse` output all carry the tree in the first "[" column
        cols = line.split("\t")
        text = next((c for c in cols if c.lstrip().startswith("[")),
                    "-" if "-" in cols[1:2] else line)
        if allow_missing and text.strip() == "-":
            trees.append(None)
            continue
        try:
            trees.append(parse_tree(text))
        except TreeError as e:
            if allow_missing:
                trees.append(None)
            else:
                raise corpus.ParseErrorAt(lineno, str(e)) from e
    return trees


def cmd_eval(args):
    preds = _read_trees(args.pred, allow_missing=True)
    golds = _read_trees(args.gold, allow_missing=False)
    print(format_report(evaluate(preds, golds)))
    if args.breakdown is not None:
        axes = [a for a in args.breakdown.split(",") if a] or list(AXES)
        print(format_breakdown(breakdown_report(preds, golds, axes)))


def build_parser() -> argparse.ArgumentParser:
    p = _ArgParser(prog="topshift", description="Transition-based TOP semantic parsing.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_ArgParser)

    def data_cmd(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("data")
        sp.add_argument("--format", choices=corpus.FORMATS, default="lines")
        sp.set_defaults(fn=fn)
        return sp

    data_cmd("validate", cmd_validate, "check a dataset file")
    data_cmd("stats", cmd_stats, "dataset statistics")
    sp = data_cmd("oracle", cmd_oracle, "gold action sequences")
    sp.add_argument("--system", choices=SYSTEMS, required=True)
    sp.add_argument("-o", "--out")

    sp = sub.add_parser("gen", help="generate a synthetic corpus")
    sp.add_argument("--spec", help="grammar spec (key = value lines)")
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--format", choices=corpus.FORMATS, default="lines")
    sp.add_argument("-o", "--out")
    sp.set_defaults(fn=cmd_gen)

    sp = data_cmd("spis", cmd_spis, "samples-per-intent-and-slot subset")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("-o", "--out")

    sp = data_cmd("train", cmd_train, "train a parser")
    sp.add_argument("--valid")
    sp.add_argument("--system", choices=SYSTEMS)
    sp.add_argument("--config")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--features", help="frozen per-token vectors for train then valid utterances")
    sp.add_argument("--log", help="write the per-epoch metrics log here (JSON lines)")
    sp.add_argument("--out", required=True, help="checkpoint path")

    sp = sub.add_parser("parse", help="parse utterances with a trained model")
    sp.add_argument("data", help="one utterance per line (trees and TSV rows also accepted)")
    sp.add_argument("--model", required=True)
    sp.add_argument("--beam", type=int, default=1)
    sp.add_argument("--trace", action="store_true", help="append the action sequence column")
    sp.add_argument("--features")
    sp.add_argument("-o", "--out")
    sp.set_defaults(fn=cmd_parse)

    sp = sub.add_parser("eval", help="score predictions against gold trees")
    sp.add_argument("pred")
    sp.add_argument("gold")
    sp.add_argument("--breakdown", nargs="?", const="", default=None,
                    help="comma-separated axes (default: all) from " + ",".join(AXES))
    sp.set_defaults(fn=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "seed", "n/a") is None:
        args.seed = default_seed()
    try:
        args.fn(args)
    except (UsageError, ConfigError, ValueError) as e:
        if isinstance(e, (TreeError, LengthMismatch)):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_DATA
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, TreeError, CheckpointError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (TransitionError, InconsistentMask, TopShiftError, AssertionError) as e:
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
