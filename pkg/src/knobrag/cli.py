"""Command line entry point: ``knobrag <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from knobrag.errors import IoFailure, KnobragError

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2

_PATH_KEYS = {"registry", "corpus", "questions", "index", "checkpoint", "telemetry_dir", "catalog", "transcript"}
_LIST_KEYS = {"corpus"}


@dataclass
class RunConfig:
    registry: Path | None = None
    corpus: list[Path] = field(default_factory=list)
    questions: Path | None = None
    index: Path | None = None
    checkpoint: Path | None = None
    telemetry_dir: Path | None = None
    catalog: Path | None = None
    backend: str = "mock"
    transcript: Path | None = None
    base_url: str = ""
    model: str = "mock"
    token_env: str = "KNOBRAG_CHAT_TOKEN"
    timeout: float = 60.0
    parallelism: int = 4
    embed_url: str = ""
    embed_model: str = ""
    dim: int = 768
    k: int = 5
    top_k: int = 3
    tau: float = 0.1
    alpha: float = 0.05
    max_anomalies: int | None = None
    period: int | None = None
    seed: int = 42
    strategy: str = "Rag"

    @classmethod
    def kinds(cls) -> dict[str, str]:
        return {f.name: str(f.type) for f in fields(cls)}


def _convert(key: str, raw: str, base: Path):
    kind = RunConfig.kinds()[key]
    if key in _LIST_KEYS:
        return [base / p.strip() for p in raw.split(",") if p.strip()]
    if key in _PATH_KEYS:
        return base / raw if raw else None
    if raw == "" and "None" in kind:
        return None
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        return float(raw)
    return raw


def load_config(path: str | Path) -> RunConfig:
    """Flat ``key = value`` lines; relative paths resolve against the file's directory."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc.strerror or exc}") from None
    values = {}
    known = RunConfig.kinds()
    for lineno, line in enumerate(lines, 1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        key, sep, raw = text.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in known:
            raise ValueError(f"{path}:{lineno}: expected a known key = value, got {text!r}")
        try:
            values[key] = _convert(key, raw.strip(), path.parent)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: bad value for {key}: {raw.strip()!r}") from None
    return RunConfig(**values)


def merged_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for key in RunConfig.kinds():
        value = getattr(args, key, None)
        if value is None or value == []:
            continue
        if key in _LIST_KEYS:
            value = [Path(v) for v in value]
        elif key in _PATH_KEYS:
            value = Path(value)
        overrides[key] = value
    return replace(cfg, **overrides)


# ---------------------------------------------------------------------------
# shared loaders


def _need(cfg: RunConfig, key: str):
    value = getattr(cfg, key)
    if value in (None, []):
        raise ValueError(f"--{key.replace('_', '-')} is required")
    return value


def _registry(cfg: RunConfig):
    from knobrag.knobspace import load_registry
    path = _need(cfg, "registry")
    try:
        return load_registry(path)
    except OSError as exc:
        raise IoFailure(f"cannot read registry {path}: {exc.strerror or exc}") from None


def _read(loader, path, *a):
    try:
        return loader(path, *a)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from None


def _documents(cfg: RunConfig, registry):
    from knobrag.corpus import load_corpora
    paths = list(_need(cfg, "corpus"))
    for p in paths:
        if not Path(p).exists():
            raise IoFailure(f"cannot read corpus {p}: no such file")
    return load_corpora(paths, registry)


def _embedder(cfg: RunConfig):
    from knobrag.embed.backends import HashingEmbedder, RemoteEmbedder
    if cfg.embed_url:
        return RemoteEmbedder(cfg.embed_url, cfg.embed_model, cfg.dim, timeout=cfg.timeout,
                              parallelism=cfg.parallelism)
    return HashingEmbedder(cfg.dim)


def _net(cfg: RunConfig):
    from knobrag.embed.align import load_checkpoint
    if cfg.checkpoint is None:
        return None
    try:
        return load_checkpoint(cfg.checkpoint)
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {cfg.checkpoint}: {exc.strerror or exc}") from None


def _chat_backend(cfg: RunConfig):
    from knobrag.reasoner.backends import BoundedBackend, MockBackend, RemoteChatBackend
    if cfg.backend == "mock":
        inner = MockBackend(_read(_transcripts, _need(cfg, "transcript")))
    elif cfg.backend == "remote":
        inner = RemoteChatBackend(_need(cfg, "base_url"), cfg.token_env, cfg.timeout)
    else:
        raise ValueError(f"backend must be mock or remote, not {cfg.backend!r}")
    return BoundedBackend(inner, cfg.parallelism)


def _transcripts(path):
    from knobrag.reasoner.backends import load_transcript
    return load_transcript(path)


def _reasoner_config(cfg: RunConfig, registry, documents):
    from knobrag.reasoner.pipeline import ReasonerConfig
    from knobrag.telemetry.series import load_catalog
    catalog = _read(load_catalog, cfg.catalog, registry) if cfg.catalog else None
    return ReasonerConfig(registry, {d.id: d for d in documents}, _chat_backend(cfg), _embedder(cfg), catalog,
                          cfg.model, cfg.k, cfg.top_k, cfg.alpha, cfg.max_anomalies, cfg.period, seed=cfg.seed)


def _index(cfg: RunConfig, documents, net):
    from knobrag.reasoner.pipeline import build_document_index
    from knobrag.vectorstore import load
    if cfg.index is not None and Path(cfg.index).exists():
        return load(cfg.index)
    return build_document_index(documents, _embedder(cfg), net)


def _emit(args, records, human):
    """Print JSON lines with --format=lines, otherwise the human text."""
    if args.format == "lines":
        for rec in records:
            print(json.dumps(rec, ensure_ascii=False, sort_keys=True))
    else:
        for line in human:
            print(line)


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args, cfg):
    from knobrag.corpus import load_corpora, save_corpus, segment_manual
    registry = _registry(cfg)
    docs = load_corpora(cfg.corpus, registry) if cfg.corpus else []
    for i, path in enumerate(args.manual_text):
        text = _read(lambda p: Path(p).read_text(encoding="utf-8"), path)
        docs.extend(segment_manual(text, registry, source=Path(path).stem, id_prefix=f"m{i}-"))
    ids = [d.id for d in docs]
    if len(set(ids)) != len(ids):
        raise ValueError("ingested documents have clashing ids")
    save_corpus(docs, args.out)
    counts = {}
    for d in docs:
        counts[d.kind.value] = counts.get(d.kind.value, 0) + 1
    _emit(args, [{"out": str(args.out), "documents": len(docs), "by_kind": counts}],
          [f"wrote {len(docs)} documents to {args.out}"] + [f"  {k}: {v}" for k, v in sorted(counts.items())])


def cmd_index(args, cfg):
    from knobrag.reasoner.pipeline import build_document_index
    from knobrag.vectorstore import persist
    registry = _registry(cfg)
    docs = _documents(cfg, registry)
    index = build_document_index(docs, _embedder(cfg), _net(cfg))
    out = _need(cfg, "index")
    persist(index, out)
    _emit(args, [{"index": str(out), "entries": len(index), "dim": index.dim}],
          [f"indexed {len(index)} vectors (d={index.dim}) into {out}"])


def cmd_mine_pairs(args, cfg):
    from knobrag.corpus import load_questions
    from knobrag.corpus import atomic_write_text as write
    from knobrag.embed.contrastive import mine_training_pairs
    registry = _registry(cfg)
    docs = _documents(cfg, registry)
    questions = _read(load_questions, _need(cfg, "questions"), registry)
    emb = _embedder(cfg)
    mined = mine_training_pairs(questions, docs, args.per_anchor, cfg.seed,
                                question_vectors=emb.embed_many([q.text for q in questions]),
                                doc_vectors=emb.embed_many([d.text for d in docs]))
    lines = [json.dumps({"anchor_id": t.anchor_id, "positive_id": t.positive_id,
                         "negative_ids": list(t.negative_ids), "pair_type": t.pair_type}) for t in mined]
    write(args.out, "".join(line + "\n" for line in lines))
    summary = {"out": str(args.out), "triples": len(mined), "skipped": len(mined.skipped), **mined.by_type()}
    _emit(args, [summary], [f"mined {len(mined)} triples into {args.out} ({len(mined.skipped)} anchors skipped)"]
          + [f"  {k}: {v}" for k, v in mined.by_type().items()])


def cmd_train_align(args, cfg):
    import numpy as np

    from knobrag.corpus import load_questions
    from knobrag.embed.align import AlignmentNetwork, save_checkpoint, source_of
    from knobrag.embed.contrastive import TrainingTriple, train_alignment
    registry = _registry(cfg)
    docs = {d.id: d for d in _documents(cfg, registry)}
    questions = {q.id: q for q in _read(load_questions, _need(cfg, "questions"), registry)}
    emb = _embedder(cfg)
    texts = {**{i: d.text for i, d in docs.items()}, **{i: q.text for i, q in questions.items()}}
    cache = {}

    def vec(doc_id):
        if doc_id not in cache:
            if doc_id not in texts:
                raise ValueError(f"pairs file names unknown document {doc_id!r}")
            cache[doc_id] = emb.embed_many([texts[doc_id]])[0]
        return cache[doc_id]

    triples = []
    with Path(args.pairs).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            pos = docs[rec["positive_id"]] if rec["positive_id"] in docs else None
            neg_src = source_of(docs[rec["negative_ids"][0]].kind)
            triples.append(TrainingTriple(
                rec["anchor_id"], vec(rec["anchor_id"]), rec["positive_id"], vec(rec["positive_id"]),
                source_of(pos.kind) if pos else "question", tuple(rec["negative_ids"]),
                np.array([vec(n) for n in rec["negative_ids"]]), neg_src, rec["pair_type"]))
    net = AlignmentNetwork.initialize(emb.dim, args.layers, cfg.seed)
    run = train_alignment(net, triples, args.epochs, args.lr, cfg.tau, cfg.seed)
    out = _need(cfg, "checkpoint")
    save_checkpoint(run.net, out)
    trace = [{"phase": p.phase, "epoch": p.epoch, "mean_loss": p.mean_loss} for p in run.trace]
    _emit(args, trace + [{"checkpoint": str(out), "triples": len(triples)}],
          [f"{p['phase']} epoch {p['epoch']}: loss {p['mean_loss']:.6f}" for p in trace]
          + [f"saved alignment checkpoint to {out}"])


def cmd_synthesize(args, cfg):
    from knobrag.augment import ChatSettings, synthesize_dataset
    registry = _registry(cfg)
    docs = _documents(cfg, registry)
    settings = ChatSettings(cfg.model, 0.0, cfg.seed)
    report = synthesize_dataset(registry, docs, args.per_knob, _chat_backend(cfg), cfg.seed,
                                settings=settings, workers=cfg.parallelism)
    report.save(args.out, args.report)
    summary = {"out": str(args.out), "questions": len(report), "ok": report.count("ok"),
               "failed": report.count("failed"), "skipped": report.count("skipped")}
    _emit(args, [summary], [f"synthesized {len(report)} questions into {args.out}",
                            f"  chains ok {summary['ok']}, failed {summary['failed']}, "
                            f"knobs skipped {summary['skipped']}"])


def cmd_analyze_telemetry(args, cfg):
    from knobrag.telemetry.narrate import analyze_telemetry
    from knobrag.telemetry.series import MetricCatalog, load_catalog, load_telemetry_dir
    registry = _registry(cfg) if cfg.registry else None
    tdir = _need(cfg, "telemetry_dir")
    if not Path(tdir).is_dir():
        raise IoFailure(f"telemetry directory {tdir} does not exist")
    catalog = _read(load_catalog, cfg.catalog, registry) if cfg.catalog else MetricCatalog()
    reports = analyze_telemetry(load_telemetry_dir(tdir, cfg.period), catalog, cfg.alpha, cfg.max_anomalies,
                                workers=cfg.parallelism)
    records, human = [], []
    for r in reports:
        records.append({"metric": r.metric, "anomalies": [a.index for a in r.anomalies],
                        "narrative": r.narrative.text if r.narrative else None, "skipped": r.skipped})
        if r.narrative:
            human.append(f"{r.metric}: {len(r.anomalies)} anomalies; {r.narrative.text}")
        elif r.skipped:
            human.append(f"{r.metric}: skipped ({r.skipped})")
        else:
            human.append(f"{r.metric}: no anomalies")
    _emit(args, records, human)


def _question(args):
    from knobrag.corpus import DebugQuestion
    if args.question_file:
        text = _read(lambda p: Path(p).read_text(encoding="utf-8"), args.question_file)
        qid = args.question_id or Path(args.question_file).stem
    elif args.question:
        text, qid = args.question, args.question_id or "question"
    else:
        raise ValueError("give --question or --question-file")
    return DebugQuestion(qid, text.strip(), frozenset())


def cmd_diagnose(args, cfg):
    from knobrag.reasoner.pipeline import diagnose
    from knobrag.reasoner.prompts import PromptStrategy
    registry = _registry(cfg)
    docs = _documents(cfg, registry)
    rcfg = _reasoner_config(cfg, registry, docs)
    net = _net(cfg)
    question = _question(args)
    result = diagnose(question, _index(cfg, docs, net), net, cfg.telemetry_dir, PromptStrategy.parse(cfg.strategy),
                      rcfg)
    rec = result.to_record()
    human = [f"question {rec['question_id']} ({rec['strategy']})",
             f"retrieved: {', '.join(rec['retrieved_doc_ids']) or '-'}"]
    human += [f"telemetry: {n}" for n in rec["narratives"]]
    if result.failure:
        human.append(f"FAILED: {result.error}")
    human.append(f"knobs: {', '.join(rec['predicted_knobs']) or '-'}")
    human += [f"  {k} = {v}" for k, v in rec["recommendations"].items()]
    human += [f"  note: {i['detail']}" for i in rec["issues"]]
    if rec["hallucinated"]:
        human.append(f"dropped unknown knobs: {', '.join(rec['hallucinated'])}")
    _emit(args, [rec], human)


def cmd_evaluate(args, cfg):
    from knobrag.corpus import load_questions
    from knobrag.evalharness import record_runnable, run_nl_eval
    if args.verdicts:
        if not args.results:
            raise ValueError("--verdicts needs --results (a diagnose/evaluate lines file)")
        with _read(lambda p: Path(p).open(encoding="utf-8"), args.results) as fh:
            results = [json.loads(line) for line in fh if line.strip()]
        report = record_runnable(args.verdicts, results)
        _emit(args, [report.to_record()], [f"success rate {report.success_rate:.4f} ({report.solved}/{report.n})",
                                           f"mean recommended knobs {report.mean_recommended:.2f}"])
        return
    from knobrag.reasoner.prompts import PromptStrategy
    registry = _registry(cfg)
    docs = _documents(cfg, registry)
    questions = _read(load_questions, _need(cfg, "questions"), registry)
    net = _net(cfg)
    rcfg = _reasoner_config(cfg, registry, docs)
    report, records = run_nl_eval(questions, _index(cfg, docs, net), net, rcfg, PromptStrategy.parse(cfg.strategy),
                                  parallelism=cfg.parallelism)
    if args.out:
        from knobrag.corpus import atomic_write_text
        atomic_write_text(args.out, "".join(json.dumps(r.to_record(), sort_keys=True) + "\n" for r in records))
    _emit(args, [r.to_record() for r in records] + [{"summary": report.to_record()}], report.lines())


COMMANDS = {
    "ingest": cmd_ingest, "index": cmd_index, "mine-pairs": cmd_mine_pairs, "train-align": cmd_train_align,
    "synthesize": cmd_synthesize, "analyze-telemetry": cmd_analyze_telemetry, "diagnose": cmd_diagnose,
    "evaluate": cmd_evaluate,
}


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (flags override --config)")
    g.add_argument("--config", help="key=value run configuration file")
    g.add_argument("--registry")
    g.add_argument("--corpus", action="append", default=[], help="corpus file; repeatable")
    g.add_argument("--questions")
    g.add_argument("--index")
    g.add_argument("--checkpoint")
    g.add_argument("--telemetry-dir", dest="telemetry_dir")
    g.add_argument("--catalog")
    g.add_argument("--backend", choices=("mock", "remote"))
    g.add_argument("--transcript")
    g.add_argument("--base-url", dest="base_url")
    g.add_argument("--model")
    g.add_argument("--token-env", dest="token_env")
    g.add_argument("--timeout", type=float)
    g.add_argument("--parallelism", type=int)
    g.add_argument("--embed-url", dest="embed_url")
    g.add_argument("--embed-model", dest="embed_model")
    g.add_argument("--dim", type=int)
    g.add_argument("--k", type=int, help="retrieved documents (default 5)")
    g.add_argument("--top-k", dest="top_k", type=int, help="telemetry narratives (default 3)")
    g.add_argument("--tau", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--max-anomalies", dest="max_anomalies", type=int)
    g.add_argument("--period", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--strategy", help="Rag, Plain, AllKnobs, ChainOfThought or TaskDecomposition")
    p.add_argument("--format", choices=("human", "lines"), default="human")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="knobrag", description="Retrieval-augmented DBMS configuration debugging")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    p = sub.add_parser("ingest", help="validate corpora and segment raw manual text")
    p.add_argument("--manual-text", action="append", default=[], help="raw manual text file; repeatable")
    p.add_argument("--out", required=True)
    p = sub.add_parser("index", help="embed documents and write the vector index")
    p = sub.add_parser("mine-pairs", help="mine contrastive training triples")
    p.add_argument("--per-anchor", type=int, default=5)
    p.add_argument("--out", required=True)
    p = sub.add_parser("train-align", help="train the alignment network from mined triples")
    p.add_argument("--pairs", required=True)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--layers", type=int, default=2)
    p = sub.add_parser("synthesize", help="generate logic-chain training questions")
    p.add_argument("--per-knob", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    sub.add_parser("analyze-telemetry", help="detect and narrate metric anomalies")
    p = sub.add_parser("diagnose", help="diagnose one question")
    p.add_argument("--question")
    p.add_argument("--question-file")
    p.add_argument("--question-id")
    p = sub.add_parser("evaluate", help="NL-setting evaluation or Runnable verdict bookkeeping")
    p.add_argument("--out", help="per-question records (lines)")
    p.add_argument("--verdicts", help="verdict file {question_id, solved, note} per line")
    p.add_argument("--results", help="diagnosis records to join verdicts against")
    for name, sp in sub.choices.items():
        _common(sp)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        cfg = merged_config(args)
        COMMANDS[args.command](args, cfg)
    except (KnobragError, ValueError, OSError, KeyError) as exc:
        name = type(exc).__name__
        print(f"knobrag {args.command}: {name}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
