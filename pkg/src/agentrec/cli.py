"""Command-line entry point: ``agentrec <command> [options]``.

Exit codes: 0 success, 2 I/O error, 3 empty data, 4 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

from agentrec.corpus import Corpus
from agentrec.encoder import Encoder, load_external_embeddings
from agentrec.evaluation import (
    TOKEN_VARIANTS,
    EvalConfig,
    TokenCostParams,
    evaluate,
    token_cost,
    train_model,
)
from agentrec.ingest import ingest, load_corpus, save_corpus, write_issues
from agentrec.pipeline import DEFAULT_K, recommend
from agentrec.ranker import ModelFileError, TrainConfig, load_model, save_model, slate_top1
from agentrec.synth import SynthConfig, synth_corpus, write_synth

log = logging.getLogger("agentrec")

EXIT_OK, EXIT_IO, EXIT_EMPTY, EXIT_USAGE = 0, 2, 3, 4
KINDS = {"sarl": "agent", "asrl": "system"}


class UsageError(Exception):
    pass


class EmptyDataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("AGENTREC_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"AGENTREC_SEED must be an integer, got {env!r}") from None


def _encoder(args) -> Encoder:
    if getattr(args, "sidecar", None):
        return Encoder(sidecar=load_external_embeddings(args.sidecar))
    return Encoder()


def _corpus(args) -> Corpus:
    trees, pool = load_corpus(args.corpus)
    if not trees:
        raise EmptyDataError(f"{args.corpus}: corpus has no sessions")
    return Corpus(trees, pool, _encoder(args))


def _check_model(model, corpus: Corpus) -> None:
    if model.encoder_dim != corpus.encoder.dim:
        raise UsageError(f"model expects encoder dimension {model.encoder_dim}, corpus encoder has {corpus.encoder.dim}")
    if model.sidecar_digest != corpus.encoder.digest:
        warnings.warn("embedding sidecar differs from the one the model was trained with")


def cmd_synth(args) -> int:
    depths = tuple(int(d) for d in args.depths.split(","))
    cfg = SynthConfig(
        n_agents=args.agents,
        n_sessions=args.sessions,
        depths=depths,
        max_extra_children=args.branching,
        planted=not args.no_planted,
    )
    events, manifest = synth_corpus(_seed(args), cfg)
    write_synth(events, manifest, args.out, args.manifest)
    print(f"wrote {len(events)} events across {cfg.n_sessions} sessions to {args.out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    with open(args.events, encoding="utf-8") as fh:
        result = ingest(fh, prune=args.prune)
    if args.issues:
        write_issues(args.issues, result.issues)
    if not result.trees:
        raise EmptyDataError("no sessions survived ingestion")
    save_corpus(args.out, result.trees, result.pool)
    stats = result.stats
    print(
        f"sessions={len(result.trees)} agents={len(result.pool)} pruned={result.pruned} "
        f"issues={len(result.issues)} calls_per_agent={stats.avg_calls_per_tool:.2f} "
        f"nodes_per_graph={stats.avg_nodes_per_graph:.2f}"
    )
    for issue in result.issues:
        log.info("%s: %s %s", issue.session_id, issue.rule, issue.detail)
    return EXIT_OK


def cmd_train(args) -> int:
    corpus = _corpus(args)
    kind = KINDS[args.mode]
    if kind == "system" and not args.allow_flat and not any(len(t.nodes) > 2 for t in corpus.trees):
        raise EmptyDataError("system-level training needs at least one session with more than one worker call")
    config = TrainConfig(
        lam=args.lam,
        lr=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        seed=_seed(args),
        k=args.k,
        train_fraction=args.train_fraction,
    )
    try:
        model, slates = train_model(corpus, kind, config)
    except ValueError as exc:
        if "empty" in str(exc) or "need at least" in str(exc):
            raise EmptyDataError(str(exc)) from exc
        raise
    save_model(model, args.out)
    loss = f"{model.loss_curve[-1]:.6f}" if model.loss_curve else "n/a (no epochs)"
    print(f"trained {args.mode} on {len(slates)} instances; final loss {loss}")
    print(f"training top-1 {slate_top1(model, slates):.4f}")
    return EXIT_OK


def cmd_recommend(args) -> int:
    if not args.query.strip():
        raise UsageError("query must be non-empty")
    model = load_model(args.model)
    corpus = _corpus(args)
    _check_model(model, corpus)
    rec = recommend(model, args.query, corpus, mode="direct" if args.direct else "two_stage", k=args.k)
    print(rec.to_json())
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    corpus = _corpus(args)
    _check_model(model, corpus)
    config = EvalConfig(
        dataset=args.dataset or Path(args.corpus).stem,
        k=args.k,
        k_eval=tuple(int(k) for k in args.k_eval.split(",")),
        seed=_seed(args),
        train_fraction=args.train_fraction,
        lower_is_better=args.lower_is_better,
        deterministic=args.deterministic,
    )
    try:
        report = evaluate(corpus, model, config)
    except ValueError as exc:
        if "empty" in str(exc) or "need at least" in str(exc):
            raise EmptyDataError(str(exc)) from exc
        raise
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    print(report.summary())
    return EXIT_OK


def cmd_tokencost(args) -> int:
    params = TokenCostParams(
        N=args.N, K=args.K, M=args.M, K_g=args.Kg, L=args.L, s=args.s, L_s=args.Ls,
        ctx_nodes=args.ctx or 0, L_g=args.Lg,
    )
    print(token_cost(params, args.variant, expected=args.expected))
    return EXIT_OK


_TOKEN_HELP = {
    "N": "agent pool size",
    "K": "agent shortlist size",
    "M": "subgraph pool size",
    "Kg": "subgraph shortlist size",
    "L": "tokens per item",
    "s": "nodes per subgraph",
    "Ls": "tokens per subgraph node",
    "ctx": "context nodes at the decision",
    "Lg": "tokens per context node",
}


def _common(config: dict) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=config.get("seed"), help="random seed (falls back to $AGENTREC_SEED, then 0)")
    p.add_argument("-v", "--verbose", action="store_true", help="log ingestion issues and progress")
    p.add_argument("--config", help="JSON file of option defaults; command-line flags win")
    return p


def _corpus_args(p: argparse.ArgumentParser, config: dict) -> None:
    p.add_argument("--corpus", required="corpus" not in config, default=config.get("corpus"), help="unified corpus JSON")
    p.add_argument("--sidecar", default=config.get("sidecar"), help="JSON Lines embedding overrides")
    p.add_argument("--k", type=int, default=config.get("k", DEFAULT_K), help="stage-1 shortlist size")
    p.add_argument("--train-fraction", type=float, default=config.get("train_fraction", 0.8), help="hashed train share")


def build_parser(config: dict | None = None) -> argparse.ArgumentParser:
    config = config or {}
    common = _common(config)
    parser = _Parser(prog="agentrec", description="Two-stage agent and agent-system recommendation.")
    parser.add_argument("--config", help="JSON file of option defaults; command-line flags win")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], formatter_class=argparse.ArgumentDefaultsHelpFormatter, help="generate a synthetic event log")
    p.add_argument("--out", required=True, help="events JSON Lines to write")
    p.add_argument("--manifest", help="ground-truth manifest JSON to write")
    p.add_argument("--agents", type=int, default=config.get("agents", 10), help="worker agents in the pool")
    p.add_argument("--sessions", type=int, default=config.get("sessions", 20), help="sessions to generate")
    p.add_argument("--depths", default=config.get("depths", "1,2,3"), help="comma-separated tree depths to draw from")
    p.add_argument("--branching", type=int, default=config.get("branching", 1), help="max extra children per inner node")
    p.add_argument("--no-planted", action="store_true", default=config.get("no_planted", False), help="random vocabulary with no recoverable signal")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], formatter_class=argparse.ArgumentDefaultsHelpFormatter, help="normalise an event log into a corpus file")
    p.add_argument("events", help="events JSON Lines")
    p.add_argument("--out", required=True, help="corpus JSON to write")
    p.add_argument("--issues", help="write the validation report here (JSON Lines)")
    p.add_argument("--prune", action="store_true", default=config.get("prune", False), help="drop single-call trees")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", parents=[common], formatter_class=argparse.ArgumentDefaultsHelpFormatter, help="fit a reranker")
    _corpus_args(p, config)
    p.add_argument("--mode", choices=sorted(KINDS), default=config.get("mode", "sarl"), help="sarl: single agents; asrl: whole systems")
    p.add_argument("--out", required=True, help="model JSON to write")
    p.add_argument("--lambda", dest="lam", type=float, default=config.get("lambda", 1e-4), help="L2 penalty")
    p.add_argument("--lr", type=float, default=config.get("lr", 1e-4), help="learning rate")
    p.add_argument("--batch", type=int, default=config.get("batch", 64), help="mini-batch size")
    p.add_argument("--epochs", type=int, default=config.get("epochs", 200), help="passes over the training slates")
    p.add_argument("--allow-flat", action="store_true", help="permit system training on single-call sessions")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recommend", parents=[common], formatter_class=argparse.ArgumentDefaultsHelpFormatter, help="recommend for one query")
    _corpus_args(p, config)
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--query", required=True, help="task text to route")
    p.add_argument("--direct", action="store_true", help="score the whole pool instead of a shortlist")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("evaluate", parents=[common], formatter_class=argparse.ArgumentDefaultsHelpFormatter, help="score the held-out split")
    _corpus_args(p, config)
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--dataset", help="dataset label in the report (default: corpus file stem)")
    p.add_argument("--k-eval", default=config.get("k_eval", "1,5,10"), help="comma-separated cutoffs")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--csv", help="write the metric table here")
    p.add_argument("--lower-is-better", action="store_true", default=config.get("lower_is_better", False), help="negative dataset: lower Top-1 is better")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=config.get("deterministic", True), help="omit the wall-clock timestamp from reports")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tokencost", parents=[common], formatter_class=argparse.ArgumentDefaultsHelpFormatter, help="prompt tokens per decision node")
    p.add_argument("--variant", choices=TOKEN_VARIANTS, required=True)
    for name in ("N", "K", "M", "Kg", "L", "s", "Ls", "ctx", "Lg"):
        p.add_argument(f"--{name}", type=float, default=config.get(name), help=_TOKEN_HELP[name])
    p.add_argument("--expected", action="store_true", help="accept averaged (non-integer) counts")
    p.set_defaults(func=cmd_tokencost)
    return parser


def _load_config(argv: list[str]) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    try:
        doc = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{known.config}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"{known.config}: expected a JSON object")
    return doc


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config = _load_config(argv)
        args = build_parser(config).parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"agentrec: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EmptyDataError as exc:
        print(f"agentrec: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (OSError, ModelFileError) as exc:
        print(f"agentrec: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"agentrec: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
