"""HTTP JSON API over the agent runtime.

Every endpoint is a thin wrapper around an Agent method returning plain
dicts, so the CLI can reuse the same methods and emit identical JSON.
When AGENT_API_TOKEN is set, /api/* requires `Authorization: Bearer <token>`;
the RSS feed and the static UI stay public.
"""

from __future__ import annotations

import os

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import JSONResponse

from .patterns import PatternSyntaxError
from .relevance import UnknownFinding
from .runtime import Agent, Topic, UnknownScope
from .search import SearchConstraints


def create_app(agent: Agent, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="latentsearch agent", docs_url=None, redoc_url=None)
    token = os.environ.get("AGENT_API_TOKEN")

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        if token and request.url.path.startswith("/api/"):
            header = request.headers.get("Authorization", "")
            if header != f"Bearer {token}":
                return JSONResponse({"error": "unauthorized"}, status_code=401)
        return await call_next(request)

    @app.get("/api/topics")
    def get_topics(user: str = "default") -> dict:
        return {"user": user, "topics": [t.to_dict() for t in agent.list_topics(user)]}

    @app.put("/api/topics")
    def put_topics(payload: dict, user: str = "default") -> dict:
        incoming = payload.get("topics")
        if not isinstance(incoming, list):
            raise HTTPException(400, detail="body must be {'topics': [...]}")
        topics = []
        for data in incoming:
            try:
                topic = Topic.from_dict(data)
                topic.validate()
            except PatternSyntaxError as exc:
                return JSONResponse(
                    {"error": str(exc), "position": exc.position, "topic": data.get("name")},
                    status_code=400,
                )
            except (KeyError, TypeError, ValueError) as exc:
                return JSONResponse(
                    {"error": str(exc), "topic": data.get("name")}, status_code=400
                )
            topics.append(topic)
        keep = {t.name for t in topics}
        for existing in agent.list_topics(user):
            if existing.name not in keep:
                agent.remove_topic(user, existing.name)
        for topic in topics:
            agent.upsert_topic(user, topic)
        return get_topics(user)

    @app.get("/api/feed")
    def get_feed(user: str = "default", limit: int = 20, topic: str | None = None) -> dict:
        return {"user": user, "items": agent.feed(user, limit=limit, topic=topic)}

    @app.post("/api/feedback")
    def post_feedback(payload: dict) -> dict:
        user = payload.get("user", "default")
        finding = payload.get("finding")
        polarity = payload.get("polarity")
        if not finding or polarity not in (1, -1):
            raise HTTPException(400, detail="need finding and polarity of 1 or -1")
        try:
            return agent.give_feedback(user, finding, polarity)
        except UnknownFinding:
            raise HTTPException(404, detail=f"unknown finding {finding!r}")

    @app.post("/api/search")
    def post_search(payload: dict) -> dict:
        query = payload.get("query", "")
        constraints = SearchConstraints(**payload.get("constraints", {}))
        try:
            return agent.adhoc_search(
                user=payload.get("user", "default"),
                query=query,
                scope=payload.get("scope", "auto"),
                constraints=constraints,
                url=payload.get("url"),
                limit=int(payload.get("limit", 20)),
            )
        except PatternSyntaxError as exc:
            return JSONResponse({"error": str(exc), "position": exc.position}, status_code=400)
        except (UnknownScope, ValueError) as exc:
            raise HTTPException(400, detail=str(exc))

    @app.get("/api/graph")
    def get_graph(
        seeds: str,
        hops: int = 2,
        max_nodes: int = 100,
        t0: int | None = None,
        t1: int | None = None,
        predicates: str | None = None,
    ) -> dict:
        seed_list = [s for s in seeds.split(",") if s]
        preds = [p for p in predicates.split(",") if p] if predicates else None
        return agent.graph_slice(seed_list, hops, max_nodes, t0, t1, preds)

    @app.get("/api/patterns/mined")
    def get_mined(user: str = "default", min_support: int = 2) -> dict:
        try:
            return {"user": user, "candidates": agent.mined(user, min_support)}
        except ValueError as exc:
            raise HTTPException(400, detail=str(exc))

    @app.get("/rss/{topic}")
    def get_rss(topic: str, user: str = "default", limit: int = 20) -> Response:
        name = None if topic == "all" else topic
        xml = agent.render_rss(topic=name, user=user, limit=limit)
        return Response(content=xml, media_type="application/rss+xml")

    if static_dir and os.path.isdir(static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:

        @app.get("/")
        def root() -> dict:
            return {"service": "latentsearch agent", "api": "/api", "rss": "/rss/{topic}"}

    return app
