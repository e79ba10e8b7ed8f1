"""Single executable exposing the pipeline as subcommands.

Exit codes: 0 ok, 1 pipeline failure, 2 usage or config error.
All subcommands are bit-deterministic with ``--backend mock --seed S``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import builder, corpus, metrics, retrieval, runner, skeleton
from .config import DEFAULTS, RunConfig, merge_settings
from .errors import ConfigError, SkelgenError
from .gateway import API_KEY_ENV, LiveBackend, MockBackend
from .retrieval import FileVectorProvider, HashingProvider, RemoteEmbeddingProvider, strategy_from_name

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PIPELINE = 1
EXIT_USAGE = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="seed for every random choice")
    parser.add_argument("--jobs", type=int, default=None, help="worker pool size")
    parser.add_argument("--backend", choices=("mock", "live"), default=None, help="chat-completion backend")
    parser.add_argument("--mock-fixtures", type=Path, default=None, help="JSON prompt-hash -> responses map")
    parser.add_argument("--verbose", action="store_true", help="debug logging")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skelgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-data", help="construct the skeleton training dataset")
    p.add_argument("--in", dest="in_path", type=Path, required=True, help="raw corpus (JSONL)")
    p.add_argument("--out", dest="out_path", type=Path, required=True, help="skeleton dataset to write")
    p.add_argument("--report", type=Path, default=None, help="per-example build report (enables resume)")
    p.add_argument("--fraction", type=float, default=None, help="subsample this fraction of the corpus first")
    p.add_argument("--vocab", type=Path, default=None, help="vocabulary override file")
    p.add_argument("--max-drop-rate", type=float, default=0.05, help="fail if more examples are dropped")
    _add_common(p)

    p = sub.add_parser("embed", help="build and persist an embedding store")
    p.add_argument("--in", dest="in_path", type=Path, required=True, help="corpus to embed (JSONL)")
    p.add_argument("--out", dest="out_path", type=Path, required=True, help="store file to write")
    p.add_argument("--strategy", choices=("input_emb", "input_skeleton_emb"), default="input_skeleton_emb")
    p.add_argument("--provider", choices=("hash", "file", "remote"), default="hash", help="embedding provider")
    p.add_argument("--dim", type=int, default=None, help="hash provider dimension")
    p.add_argument("--vectors", type=Path, default=None, help="precomputed vectors (.npz) for --provider file")
    _add_common(p)

    p = sub.add_parser("generate", help="generate questions for a test split")
    p.add_argument("--test", dest="test_path", type=Path, required=True, help="test corpus (JSONL)")
    p.add_argument("--train", dest="train_path", type=Path, required=True, help="skeleton dataset (JSONL)")
    p.add_argument("--out", dest="out_path", type=Path, required=True, help="results file to write")
    p.add_argument("--store", type=Path, default=None, help="persisted selection store (built if omitted)")
    p.add_argument("--skeleton-store", type=Path, default=None, help="persisted input_emb store for the provider")
    p.add_argument("--mode", choices=("skeleton", "vanilla"), default=None)
    p.add_argument("--strategy", choices=retrieval.STRATEGY_KINDS, default=None)
    p.add_argument("--k", type=int, default=None, help="in-context examples per prompt")
    p.add_argument("--n", type=int, default=None, help="samples per prompt for majority voting")
    p.add_argument("--sample", type=int, default=None, help="seeded subsample of the test split")
    p.add_argument("--skeleton-provider", choices=("nn", "llm", "remote"), default=None)
    p.add_argument("--head", type=Path, default=None, help="prompt head template override")
    p.add_argument("--no-resume", action="store_true", help="ignore existing results file")
    _add_common(p)

    p = sub.add_parser("evaluate", help="score a results file")
    p.add_argument("--results", type=Path, required=True, help="results file from generate")
    p.add_argument("--json", dest="json_path", type=Path, default=None, help="also write the report as JSON")
    _add_common(p)

    p = sub.add_parser("ablate", help="strategy x k sweep with one comparative table")
    p.add_argument("--test", dest="test_path", type=Path, required=True)
    p.add_argument("--train", dest="train_path", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, default=Path("ablation"), help="where per-arm results files go")
    p.add_argument("--k", dest="k_list", type=str, default="8,16", help="comma-separated k values")
    p.add_argument("--strategy", dest="strategy_list", type=str, default="random,input_emb,input_skeleton_emb")
    p.add_argument("--mode", choices=("skeleton", "vanilla"), default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--sample", type=int, default=None)
    _add_common(p)

    return parser


def _settings(args: argparse.Namespace) -> dict:
    overrides = {key: getattr(args, key, None) for key in DEFAULTS}
    return merge_settings(getattr(args, "config", None), overrides)


def _make_backend(args: argparse.Namespace, settings: dict):
    if settings["backend"] == "mock":
        fixtures_path = getattr(args, "mock_fixtures", None)
        if fixtures_path is not None:
            return MockBackend.from_fixture_file(fixtures_path, seed=settings["seed"])
        return MockBackend(seed=settings["seed"])
    return LiveBackend(
        model=settings["model"],
        base_url=settings["base_url"],
        timeout=settings["timeout"],
        max_retries=settings["retries"],
        concurrency=settings["concurrency"],
    )


def _make_embedder(args: argparse.Namespace, settings: dict):
    provider = getattr(args, "provider", "hash")
    if provider == "file":
        vectors = getattr(args, "vectors", None)
        if vectors is None:
            raise ConfigError("--provider file requires --vectors")
        return FileVectorProvider(vectors)
    if provider == "remote":
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise ConfigError(f"--provider remote needs {API_KEY_ENV}")
        return RemoteEmbeddingProvider(
            model=settings["model"], base_url=settings["base_url"], api_key=key, timeout=settings["timeout"]
        )
    dim = getattr(args, "dim", None) or settings["hash_dim"]
    return HashingProvider(dim)


def _load_store(path: Path, expected_kind: str, provider) -> retrieval.EmbeddingStore:
    store = retrieval.EmbeddingStore.load(path)
    if store.strategy_kind != expected_kind:
        raise ConfigError(f"store {path} was built with {store.strategy_kind!r}, need {expected_kind!r}")
    if store.provider_id != provider.provider_id:
        raise ConfigError(f"store {path} was embedded by {store.provider_id!r}, configured {provider.provider_id!r}")
    return store


def cmd_build_data(args: argparse.Namespace) -> int:
    settings = _settings(args)
    split = corpus.load_corpus(args.in_path)
    if args.fraction is not None:
        split = builder.subsample_for_budget(split, args.fraction, settings["seed"])
    vocab = skeleton.load_vocabulary(args.vocab) if args.vocab else skeleton.default_vocabulary()
    backend = _make_backend(args, settings)
    built = builder.build_skeleton_dataset(
        split, vocab, backend, report_path=args.report, jobs=settings["jobs"]
    )
    corpus.save_skeleton_dataset(built, args.out_path)
    dropped = len(split) - len(built)
    drop_rate = dropped / len(split) if len(split) else 0.0
    print(f"built {len(built)}/{len(split)} skeletons -> {args.out_path} (dropped {dropped})")
    if drop_rate > args.max_drop_rate:
        print(f"error: drop rate {drop_rate:.3f} exceeds --max-drop-rate {args.max_drop_rate}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


def cmd_embed(args: argparse.Namespace) -> int:
    settings = _settings(args)
    split = corpus.load_corpus(args.in_path)
    embedder = _make_embedder(args, settings)
    strategy = strategy_from_name(args.strategy, seed=settings["seed"])
    store = retrieval.build_store(split, embedder, strategy, path=args.out_path, jobs=settings["jobs"])
    print(f"embedded {len(store)} examples (dim={store.dim}, strategy={store.strategy_kind}) -> {args.out_path}")
    return EXIT_OK


def _make_skeleton_provider(args: argparse.Namespace, settings: dict, train, embedder, backend):
    kind = settings["skeleton_provider"]
    if kind == "llm":
        return runner.LlmSkeletonProvider(backend)
    if kind == "remote":
        if not settings["skeleton_url"]:
            raise ConfigError("skeleton_provider=remote needs skeleton_url in the config")
        return runner.RemoteSkeletonProvider(settings["skeleton_url"], timeout=settings["timeout"])
    store_path = getattr(args, "skeleton_store", None)
    if store_path is not None:
        nn_store = _load_store(store_path, "input_emb", embedder)
    else:
        nn_store = retrieval.build_store(train, embedder, retrieval.SelectionStrategy.input_emb())
    return runner.NearestNeighborSkeletonProvider(nn_store, train, embedder)


def cmd_generate(args: argparse.Namespace) -> int:
    settings = _settings(args)
    config = RunConfig.from_settings(settings)
    test_split = corpus.load_corpus(args.test_path, name="test")
    train = corpus.load_corpus(args.train_path, name="train")
    backend = _make_backend(args, settings)
    embedder = _make_embedder(args, settings)
    strategy = strategy_from_name(config.strategy, seed=config.seed)
    if strategy.kind == "random":
        store = None
    elif args.store is not None:
        store = _load_store(args.store, strategy.kind, embedder)
    else:
        store = retrieval.build_store(train, embedder, strategy)
    skeleton_provider = _make_skeleton_provider(args, settings, train, embedder, backend)
    providers = runner.RunnerProviders(backend=backend, embedder=embedder, skeleton_provider=skeleton_provider)
    head = args.head.read_text(encoding="utf-8") if args.head else None
    _, report = runner.run_batch(
        test_split,
        train,
        store,
        providers,
        config,
        args.out_path,
        sample_size=args.sample,
        resume=not args.no_resume,
        head=head,
    )
    print(f"generated {report.count} questions -> {args.out_path}")
    print(metrics.format_report(report))
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    report = metrics.score_run(args.results)
    print(metrics.format_report(report))
    if args.json_path is not None:
        args.json_path.write_text(json.dumps(metrics.report_to_dict(report), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    settings = _settings(args)
    try:
        k_values = [int(part) for part in args.k_list.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"--k must be comma-separated integers, got {args.k_list!r}")
    strategies = [part.strip() for part in args.strategy_list.split(",") if part.strip()]
    for name in strategies:
        if name not in retrieval.STRATEGY_KINDS:
            raise ConfigError(f"unknown strategy {name!r}")
    if not k_values or not strategies:
        raise ConfigError("ablation needs at least one k and one strategy")

    test_split = corpus.load_corpus(args.test_path, name="test")
    train = corpus.load_corpus(args.train_path, name="train")
    backend = _make_backend(args, settings)
    embedder = _make_embedder(args, settings)
    args.out_dir.mkdir(parents=True, exist_ok=True)

    stores = {
        kind: retrieval.build_store(train, embedder, retrieval.SelectionStrategy(kind))
        for kind in ("input_emb", "input_skeleton_emb")
        if kind in strategies
    }
    # the nearest-neighbor skeleton provider always needs an input_emb store
    if "input_emb" not in stores:
        stores["input_emb"] = retrieval.build_store(train, embedder, retrieval.SelectionStrategy.input_emb())
    skeleton_provider = runner.NearestNeighborSkeletonProvider(stores["input_emb"], train, embedder)
    providers = runner.RunnerProviders(backend=backend, embedder=embedder, skeleton_provider=skeleton_provider)

    rows = []
    for strategy_name in strategies:
        for k in k_values:
            config = RunConfig.from_settings({**settings, "strategy": strategy_name, "k": k})
            out_path = args.out_dir / f"results_{strategy_name}_k{k}.jsonl"
            _, report = runner.run_batch(
                test_split,
                train,
                stores.get(strategy_name),
                providers,
                config,
                out_path,
                sample_size=args.sample,
                resume=False,
            )
            rows.append((strategy_name, k, report))

    header = f"{'strategy':<20}{'k':>4}  " + "".join(f"{f'BLEU-{n}':>9}" for n in (1, 2, 3, 4)) + f"{'ROUGE-L':>9}"
    print(header)
    for strategy_name, k, report in rows:
        cells = "".join(f"{report.bleu[n]:>9.4f}" for n in (1, 2, 3, 4))
        print(f"{strategy_name:<20}{k:>4}  {cells}{report.rouge_l:>9.4f}")
    return EXIT_OK


_COMMANDS = {
    "build-data": cmd_build_data,
    "embed": cmd_embed,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SkelgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
