"""Command-line interface: ingest, query, eval, snapshot, stats, serve.

State persists between invocations through graph snapshots: commands
that need an existing graph accept --store pointing at a snapshot file,
and mutating commands write the snapshot back unless told otherwise.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click

from .embedding import HashEmbedder, embedder_from_env
from .errors import ConvmemError
from .evaluation import EvalHarness, load_corpus
from .gateway import LlmGateway, MockChatProvider, gateway_from_env
from .ingest import IngestPipeline
from .model import RetrievalConfig
from .retrieval import RetrievalEngine
from .service import config_with_overrides, create_app
from .store import GraphStore

logger = logging.getLogger(__name__)


def _fail(message: str, code: int = 1) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config(path: str | None, overrides: dict) -> RetrievalConfig:
    base = RetrievalConfig()
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            _fail(f"cannot read config file: {exc}")
        base = config_with_overrides(base, data)
    return replace(base, **overrides) if overrides else base


def _mock_gateway(path: str) -> LlmGateway:
    """Gateway scripted from a JSON file of mock responses.

    Format: list of {"template": id, "response": str|list, "contains": str?}.
    """
    try:
        rules = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        _fail(f"cannot read mock responses: {exc}")
    provider = MockChatProvider()
    if not isinstance(rules, list):
        _fail("mock responses must be a JSON list")
    for rule in rules:
        provider.respond(
            rule["template"], rule["response"], contains=rule.get("contains")
        )
    return LlmGateway(provider)


class AppContext:
    """Collaborators shared by the subcommands."""

    def __init__(self, store_path: str | None, dim: int | None, mock_responses: str | None) -> None:
        self.store_path = Path(store_path) if store_path else None
        # --dim pins the offline hash embedder; otherwise env config decides
        self.embedder = HashEmbedder(dim=dim) if dim is not None else embedder_from_env()
        self.gateway = _mock_gateway(mock_responses) if mock_responses else gateway_from_env()
        self._store: GraphStore | None = None

    @property
    def store(self) -> GraphStore:
        if self._store is None:
            if self.store_path and self.store_path.exists():
                self._store = GraphStore.snapshot_load(self.store_path, self.embedder)
            else:
                self._store = GraphStore(self.embedder)
        return self._store

    def adopt(self, store: GraphStore) -> None:
        self._store = store

    def persist(self) -> None:
        if self.store_path and self._store is not None:
            self.store.snapshot_save(self.store_path)


pass_app = click.make_pass_decorator(AppContext)


@click.group()
@click.option("--store", "store_path", type=click.Path(), default=None,
              help="Graph snapshot file; loaded if present, written back after mutations.")
@click.option("--dim", type=int, default=None, help="Embedding dimension for the hash embedder.")
@click.option("--mock-responses", type=click.Path(exists=True), default=None,
              help="JSON file scripting chat-model responses (offline runs).")
@click.option("--verbose", is_flag=True, help="Log at DEBUG level.")
@click.pass_context
def main(ctx: click.Context, store_path: str | None, dim: int | None,
         mock_responses: str | None, verbose: bool) -> None:
    """Graph-structured conversational memory."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        ctx.obj = AppContext(store_path, dim, mock_responses)
    except ConvmemError as exc:
        _fail(str(exc))


def _config_options(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                     help="JSON file of retrieval config fields."),
        click.option("--uniform-weights", is_flag=True, help="Weigh every edge 1.0."),
        click.option("--full-graph", is_flag=True, help="Walk the whole graph, skip subgraph pruning."),
        click.option("--no-selective", is_flag=True, help="Retain every turn during ingestion."),
        click.option("--no-triplets", is_flag=True, help="Skip triplet enrichment of results."),
        click.option("--k-seed", type=int, default=None, help="Seeds per aspect."),
        click.option("--top-m", type=int, default=None, help="Turns returned per query."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _build_config(config_path: str | None, uniform_weights: bool, full_graph: bool,
                  no_selective: bool, no_triplets: bool, k_seed: int | None,
                  top_m: int | None) -> RetrievalConfig:
    overrides: dict = {}
    if uniform_weights:
        overrides["uniform_weights"] = True
    if full_graph:
        overrides["full_graph"] = True
    if no_selective:
        overrides["disable_selective_filter"] = True
    if no_triplets:
        overrides["disable_triplet_enrichment"] = True
    if k_seed is not None:
        overrides["k_seed"] = k_seed
    if top_m is not None:
        overrides["top_m_turns"] = top_m
    return _load_config(config_path, overrides)


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True))
@_config_options
@click.option("--json", "as_json", is_flag=True, help="Emit reports as JSON.")
@pass_app
def ingest(app: AppContext, corpus_path: str, as_json: bool, **config_kwargs) -> None:
    """Ingest every session of a corpus file into the store."""
    cfg = _build_config(**config_kwargs)
    try:
        corpus = load_corpus(corpus_path)
        pipeline = IngestPipeline(app.store, app.gateway, cfg)
        reports = [
            pipeline.ingest_session(list(session.turns))
            for conversation in corpus.conversations
            for session in conversation.sessions
        ]
        app.persist()
    except ConvmemError as exc:
        _fail(str(exc))
    if as_json:
        click.echo(json.dumps([r.as_dict() for r in reports], indent=2))
    else:
        for report in reports:
            click.echo(
                f"{report.session_id}: {report.segment_count} segments, "
                f"{report.retained_turn_count}/{report.turn_count} turns retained, "
                f"{report.entity_count} entities, {report.triplet_count} triplets"
            )


@main.command()
@click.argument("query_text")
@_config_options
@click.option("--generate", is_flag=True, help="Also generate an answer from the evidence.")
@click.option("--json", "as_json", is_flag=True, help="Emit the bundle as JSON.")
@pass_app
def query(app: AppContext, query_text: str, generate: bool, as_json: bool, **config_kwargs) -> None:
    """Retrieve evidence (and optionally an answer) for one query."""
    cfg = _build_config(**config_kwargs)
    try:
        engine = RetrievalEngine(app.store, app.embedder, cfg)
        bundle = engine.retrieve(query_text, cfg)
        answer_text = None
        if generate:
            from .answer import AnswerComposer

            answer_text = AnswerComposer(app.gateway).answer(bundle)
    except ConvmemError as exc:
        _fail(str(exc))
    if as_json:
        payload = bundle.to_dict()
        if answer_text is not None:
            payload["answer"] = answer_text
        click.echo(json.dumps(payload, indent=2))
        return
    for position, (turn, score) in enumerate(bundle.ranked_turns, start=1):
        click.echo(f"{position:>2}. [{turn.session_id}:{turn.turn_id}] "
                   f"({score:.6f}) {turn.speaker}: {turn.text}")
    if bundle.triplets:
        click.echo("facts:")
        for edge in bundle.triplets:
            subject = bundle.entity_names.get(edge.subject, edge.subject)
            obj = bundle.entity_names.get(edge.object, edge.object)
            click.echo(f"  {subject} | {edge.relation} | {obj}")
    if answer_text is not None:
        click.echo(f"answer: {answer_text}")


@main.command("eval")
@click.argument("corpus_path", type=click.Path(exists=True))
@_config_options
@click.option("--generate", is_flag=True, help="Generate answers and score token F1.")
@click.option("--judge", is_flag=True, help="Judge generated answers (implies --generate).")
@click.option("--json", "as_json", is_flag=True, help="Emit the report as JSON.")
@click.option("--out", type=click.Path(), default=None, help="Write the JSON report to a file.")
@pass_app
def eval_corpus(app: AppContext, corpus_path: str, generate: bool, judge: bool,
                as_json: bool, out: str | None, **config_kwargs) -> None:
    """Run the evaluation harness over a corpus."""
    cfg = _build_config(**config_kwargs)
    try:
        corpus = load_corpus(corpus_path)
        harness = EvalHarness(app.embedder, app.gateway, cfg)
        report = harness.run(corpus, generate=generate, judge=judge)
    except ConvmemError as exc:
        _fail(str(exc))
    if out:
        Path(out).write_text(
            json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    if as_json:
        click.echo(json.dumps(report.to_dict(), indent=2, ensure_ascii=False))
    else:
        click.echo(report.to_text())


@main.group()
def snapshot() -> None:
    """Save or load graph snapshots."""


@snapshot.command("save")
@click.argument("path", type=click.Path())
@pass_app
def snapshot_save(app: AppContext, path: str) -> None:
    """Write the current graph to a snapshot file."""
    try:
        written = app.store.snapshot_save(path)
    except ConvmemError as exc:
        _fail(str(exc))
    click.echo(f"saved {written}")


@snapshot.command("load")
@click.argument("path", type=click.Path(exists=True))
@pass_app
def snapshot_load(app: AppContext, path: str) -> None:
    """Validate a snapshot file and adopt it as the current store."""
    try:
        store = GraphStore.snapshot_load(path, app.embedder)
        app.adopt(store)
        app.persist()
    except ConvmemError as exc:
        _fail(str(exc))
    stats = store.stats()
    click.echo(f"loaded {path}: {stats.node_count} nodes")


@main.command()
@click.option("--json", "as_json", is_flag=True, help="Emit stats as JSON.")
@pass_app
def stats(app: AppContext, as_json: bool) -> None:
    """Show graph statistics."""
    data = app.store.stats().as_dict()
    if as_json:
        click.echo(json.dumps(data, indent=2))
    else:
        for key, value in data.items():
            click.echo(f"{key}: {value}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8031, show_default=True, type=int)
@_config_options
@pass_app
def serve(app: AppContext, host: str, port: int, **config_kwargs) -> None:
    """Run the HTTP service."""
    import uvicorn

    cfg = _build_config(**config_kwargs)
    service = create_app(store=app.store, gateway=app.gateway,
                         embedder=app.embedder, config=cfg)
    uvicorn.run(service, host=host, port=port)


if __name__ == "__main__":
    main()
