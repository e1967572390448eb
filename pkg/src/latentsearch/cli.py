"""Command-line interface; every subcommand prints the same JSON the API serves."""

from __future__ import annotations

import json
import sys
import time

import click

from .patterns import PatternSyntaxError
from .relevance import UnknownFinding
from .runtime import Agent, Topic
from .search import SearchConstraints
from .webenv import LiveEnvironment, MockEnvironment, build_mock_env


def _build_agent(ctx: click.Context) -> Agent:
    opts = ctx.obj
    if opts["mock_web"]:
        with open(opts["mock_web"], encoding="utf-8") as fh:
            env = build_mock_env(json.load(fh))
    elif opts["offline"]:
        env = MockEnvironment({})
    else:
        env = LiveEnvironment()
    return Agent(data_dir=opts["data"], env=env)


def _emit(payload) -> None:
    click.echo(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))


def _fail(message: str, **extra) -> None:
    _emit({"error": message, **extra})
    sys.exit(1)


@click.group()
@click.option(
    "--data",
    envvar="AGENT_DATA_DIR",
    default="./agent-data",
    show_default=True,
    help="Data directory for graph and text logs.",
)
@click.option("--mock-web", type=click.Path(exists=True), default=None, help="Mock site-graph JSON file.")
@click.option("--offline", is_flag=True, help="Never touch the network (implied by --mock-web).")
@click.pass_context
def main(ctx, data, mock_web, offline):
    """Self-hosted latent search agent."""
    ctx.obj = {"data": data, "mock_web": mock_web, "offline": offline or bool(mock_web)}


@main.command()
@click.option("--port", envvar="AGENT_PORT", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--static", "static_dir", default=None, help="Directory with the built UI.")
@click.pass_context
def serve(ctx, port, host, static_dir):
    """Run the HTTP API server."""
    import uvicorn

    from .api import create_app

    agent = _build_agent(ctx)
    uvicorn.run(create_app(agent, static_dir=static_dir), host=host, port=port, log_level="warning")


@main.command()
@click.argument("query")
@click.option("--scope", default="auto", type=click.Choice(["auto", "findings", "index", "live"]))
@click.option("--url", default=None, help="Site to search when scope=live.")
@click.option("--user", default="default", show_default=True)
@click.option("--limit", default=20, show_default=True, type=int)
@click.option("--quick", is_flag=True, help="Stop at the first match (live scope).")
@click.pass_context
def search(ctx, query, scope, url, user, limit, quick):
    """Ad-hoc search over findings, the index, or a live site."""
    agent = _build_agent(ctx)
    constraints = SearchConstraints(modality="quick" if quick else "exhaustive")
    try:
        _emit(agent.adhoc_search(user, query, scope=scope, constraints=constraints, url=url, limit=limit))
    except PatternSyntaxError as exc:
        _fail(str(exc), position=exc.position)
    except ValueError as exc:
        _fail(str(exc))
    finally:
        agent.close()


@main.command()
@click.option("--once", is_flag=True, help="Run a single cycle and exit.")
@click.option("--every", default=60, show_default=True, type=int, help="Loop interval in seconds.")
@click.option("--budget", default=None, type=int, help="Cycle time budget in milliseconds.")
@click.pass_context
def cycle(ctx, once, every, budget):
    """Run the scheduler: search every due (topic, URL) pair."""
    agent = _build_agent(ctx)
    try:
        while True:
            _emit(agent.run_cycle(cycle_budget=budget))
            if once:
                break
            time.sleep(every)
    finally:
        agent.close()


@main.group()
def topics():
    """Manage standing search topics."""


@topics.command("add")
@click.argument("name")
@click.option("--pattern", required=True, help="Pattern-language source for the goal.")
@click.option("--url", "urls", multiple=True, required=True, help="Starting URL (repeatable).")
@click.option("--period", default=3600, show_default=True, type=int, help="Seconds between runs.")
@click.option("--user", default="default", show_default=True)
@click.option("--depth", default=3, show_default=True, type=int)
@click.option("--same-domain/--any-domain", default=False, show_default=True)
@click.option("--disabled", is_flag=True)
@click.pass_context
def topics_add(ctx, name, pattern, urls, period, user, depth, same_domain, disabled):
    agent = _build_agent(ctx.parent)
    topic = Topic(
        name=name,
        pattern_source=pattern,
        starting_urls=list(urls),
        period=period,
        constraints=SearchConstraints(max_depth=depth, same_domain_only=same_domain),
        enabled=not disabled,
    )
    try:
        _emit(agent.upsert_topic(user, topic))
    except PatternSyntaxError as exc:
        _fail(str(exc), position=exc.position)
    except ValueError as exc:
        _fail(str(exc))
    finally:
        agent.close()


@topics.command("rm")
@click.argument("name")
@click.option("--user", default="default", show_default=True)
@click.pass_context
def topics_rm(ctx, name, user):
    agent = _build_agent(ctx.parent)
    try:
        removed = agent.remove_topic(user, name)
        _emit({"removed": name if removed else None})
        if not removed:
            sys.exit(1)
    finally:
        agent.close()


@topics.command("list")
@click.option("--user", default="default", show_default=True)
@click.pass_context
def topics_list(ctx, user):
    agent = _build_agent(ctx.parent)
    try:
        _emit({"user": user, "topics": [t.to_dict() for t in agent.list_topics(user)]})
    finally:
        agent.close()


@main.command()
@click.option("--seeds", required=True, help="Comma-separated node ids.")
@click.option("--hops", default=2, show_default=True, type=int)
@click.option("--max-nodes", default=100, show_default=True, type=int)
@click.option("--t0", default=None, type=int)
@click.option("--t1", default=None, type=int)
@click.pass_context
def graph(ctx, seeds, hops, max_nodes, t0, t1):
    """Query a bounded subgraph slice around seed nodes."""
    agent = _build_agent(ctx)
    try:
        seed_list = [s for s in seeds.split(",") if s]
        _emit(agent.graph_slice(seed_list, hops, max_nodes, t0, t1))
    finally:
        agent.close()


@main.command()
@click.argument("topic", default="all")
@click.option("--user", default="default", show_default=True)
@click.option("--limit", default=20, show_default=True, type=int)
@click.pass_context
def rss(ctx, topic, user, limit):
    """Print the RSS 2.0 document for a topic ('all' for the whole feed)."""
    agent = _build_agent(ctx)
    try:
        name = None if topic == "all" else topic
        click.echo(agent.render_rss(topic=name, user=user, limit=limit))
    finally:
        agent.close()


@main.command()
@click.option("--user", default="default", show_default=True)
@click.option("--limit", default=20, show_default=True, type=int)
@click.option("--topic", default=None)
@click.pass_context
def feed(ctx, user, limit, topic):
    """Print the ranked feed as JSON."""
    agent = _build_agent(ctx)
    try:
        _emit({"user": user, "items": agent.feed(user, limit=limit, topic=topic)})
    finally:
        agent.close()


@main.command()
@click.argument("finding")
@click.option("--polarity", type=click.Choice(["1", "-1"]), required=True)
@click.option("--user", default="default", show_default=True)
@click.pass_context
def feedback(ctx, finding, polarity, user):
    """Record positive or negative feedback for a finding id."""
    agent = _build_agent(ctx)
    try:
        _emit(agent.give_feedback(user, finding, int(polarity)))
    except UnknownFinding:
        _fail(f"unknown finding {finding!r}")
    finally:
        agent.close()


@main.command()
@click.option("--min-support", default=2, show_default=True, type=int)
@click.option("--user", default="default", show_default=True)
@click.pass_context
def mined(ctx, min_support, user):
    """Print mined candidate patterns from positively checked findings."""
    agent = _build_agent(ctx)
    try:
        _emit({"user": user, "candidates": agent.mined(user, min_support)})
    except ValueError as exc:
        _fail(str(exc))
    finally:
        agent.close()


if __name__ == "__main__":
    main()
