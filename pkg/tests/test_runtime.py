"""Agent runtime tests: topic config, scheduling, cycles, feed, ad-hoc, RSS."""

from __future__ import annotations

import email.utils
import random
import unittest
import xml.etree.ElementTree as ET
from pathlib import Path
from tempfile import TemporaryDirectory

import pytest

from latentsearch.runtime import (
    Agent,
    Quota,
    Topic,
    UnknownScope,
    render_rss_document,
)
from latentsearch.search import SearchConstraints
from latentsearch.webenv import build_mock_env

START = 1_700_000_000


def demo_spec() -> dict:
    return {
        "pages": {
            "http://c.test/": {
                "text": "welcome home",
                "links": [
                    {"href": "http://c.test/about", "anchor": "about us"},
                    {"href": "http://c.test/news", "anchor": "daily news"},
                ],
            },
            "http://c.test/about": {"text": "plain about text", "links": []},
            "http://c.test/news": {"text": "good news today", "links": []},
        },
        "default_latency_ms": 10,
        "start_time": START,
    }


def make_agent(data_dir=None, spec=None, poster=None):
    env = build_mock_env(spec or demo_spec())
    agent = Agent(data_dir=data_dir, env=env, webhook_poster=poster)
    return agent, env


def demo_topic(**kw) -> Topic:
    base = dict(
        name="solar",
        pattern_source="good news",
        starting_urls=["http://c.test/"],
        period=60,
        constraints=SearchConstraints(max_depth=5),
    )
    base.update(kw)
    return Topic(**base)


class TestTopicConfig(unittest.TestCase):
    def test_upsert_list_round_trip(self):
        agent, _ = make_agent()
        agent.upsert_topic("u", demo_topic())
        topics = agent.list_topics("u")
        self.assertEqual([t.name for t in topics], ["solar"])
        self.assertEqual(topics[0].pattern_source, "good news")
        self.assertEqual(topics[0].period, 60)
        self.assertEqual(topics[0].constraints.max_depth, 5)
        agent.close()

    def test_validation(self):
        agent, _ = make_agent()
        with pytest.raises(ValueError):
            agent.upsert_topic("u", demo_topic(name=""))
        with pytest.raises(ValueError):
            agent.upsert_topic("u", demo_topic(period=30))
        with pytest.raises(ValueError):
            agent.upsert_topic("u", demo_topic(starting_urls=[]))
        with pytest.raises(ValueError):
            agent.upsert_topic("u", demo_topic(pattern_source="{}"))
        agent.close()

    def test_disabled_topic_needs_no_urls(self):
        agent, _ = make_agent()
        agent.upsert_topic("u", demo_topic(starting_urls=[], enabled=False))
        self.assertEqual(len(agent.list_topics("u")), 1)
        agent.close()

    def test_remove_is_tombstone(self):
        agent, _ = make_agent()
        agent.upsert_topic("u", demo_topic())
        self.assertTrue(agent.remove_topic("u", "solar"))
        self.assertEqual(agent.list_topics("u"), [])
        self.assertFalse(agent.remove_topic("u", "solar"))
        agent.upsert_topic("u", demo_topic(period=120))
        self.assertEqual(agent.list_topics("u")[0].period, 120)
        agent.close()

    def test_users_discovered_from_topics(self):
        agent, _ = make_agent()
        self.assertEqual(agent.users(), ["default"])
        agent.upsert_topic("bee", demo_topic())
        agent.upsert_topic("ant", demo_topic(name="other"))
        self.assertEqual(agent.users(), ["ant", "bee"])
        agent.close()

    def test_webhook_round_trip(self):
        agent, _ = make_agent()
        self.assertIsNone(agent.get_webhook("u"))
        agent.set_webhook("u", "http://hook.test/in")
        self.assertEqual(agent.get_webhook("u"), "http://hook.test/in")
        agent.close()


class TestQuotas(unittest.TestCase):
    def seed_topics(self, agent, n_topics=3, urls_per_topic=2, period=3600):
        for i in range(n_topics):
            urls = [f"http://c.test/t{i}u{j}" for j in range(urls_per_topic)]
            agent.upsert_topic("u", demo_topic(name=f"t{i}", starting_urls=urls, period=period))

    def test_even_split_worked_example(self):
        agent, _ = make_agent()
        self.seed_topics(agent)  # 3 topics x 2 urls, never run -> all due
        quotas = agent.compute_quotas("u", 3_600_000, now=START)
        self.assertEqual(len(quotas), 6)
        self.assertEqual({q.budget for q in quotas}, {600_000})
        self.assertEqual(
            [(q.topic, q.url) for q in quotas],
            sorted((q.topic, q.url) for q in quotas),
        )
        agent.close()

    def test_nothing_due_is_empty(self):
        agent, _ = make_agent()
        self.seed_topics(agent)
        for q in agent.compute_quotas("u", 1000, now=START):
            agent.mark_run("u", q.topic, q.url, START)
        self.assertEqual(agent.compute_quotas("u", 1000, now=START + 10), [])
        due_later = agent.compute_quotas("u", 1000, now=START + 3600)
        self.assertEqual(len(due_later), 6)
        self.assertEqual({q.due_at for q in due_later}, {START + 3600})
        agent.close()

    def test_minimum_quota_floor(self):
        agent, _ = make_agent()
        self.seed_topics(agent)
        quotas = agent.compute_quotas("u", 300, now=START)
        self.assertEqual({q.budget for q in quotas}, {100})
        agent.close()

    def test_budget_must_be_positive(self):
        agent, _ = make_agent()
        with pytest.raises(ValueError):
            agent.compute_quotas("u", 0, now=START)
        agent.close()

    def test_disabled_topics_never_due(self):
        agent, _ = make_agent()
        agent.upsert_topic("u", demo_topic(enabled=False))
        self.assertEqual(agent.compute_quotas("u", 1000, now=START), [])
        agent.close()

    def test_default_cycle_budget_tracks_shortest_period(self):
        agent, _ = make_agent()
        self.assertEqual(agent.default_cycle_budget("u"), 100)
        agent.upsert_topic("u", demo_topic(name="slow", period=3600))
        agent.upsert_topic("u", demo_topic(name="fast", period=600))
        self.assertEqual(agent.default_cycle_budget("u"), 120_000)
        agent.close()


class TestRunCycle(unittest.TestCase):
    def test_first_cycle_reports_then_goes_quiet(self):
        agent, _ = make_agent()
        agent.upsert_topic("default", demo_topic())
        report = agent.run_cycle(now=START)
        self.assertEqual(report["quotas"], 1)
        self.assertEqual(len(report["new_findings"]), 1)
        self.assertEqual(report["new_findings"][0]["snippet"], "good news today")
        self.assertGreater(report["fetches"], 0)
        again = agent.run_cycle(now=START + 60)
        self.assertEqual(again["new_findings"], [])
        self.assertGreater(again["quotas"], 0)
        agent.close()

    def test_not_due_means_no_quotas(self):
        agent, _ = make_agent()
        agent.upsert_topic("default", demo_topic())
        agent.run_cycle(now=START)
        mid = agent.run_cycle(now=START + 30)  # period is 60
        self.assertEqual(mid["quotas"], 0)
        agent.close()

    def test_novel_finding_reported_exactly_once_at_its_cycle(self):
        agent, env = make_agent()
        agent.upsert_topic("default", demo_topic())
        new_by_cycle = []
        for k in range(5):
            if k == 3:
                env.set_page("http://c.test/news", text="good news flash", links=[])
            report = agent.run_cycle(now=START + 60 * k)
            new_by_cycle.append([f["snippet"] for f in report["new_findings"]])
        self.assertEqual(new_by_cycle[0], ["good news today"])
        self.assertEqual(new_by_cycle[1], [])
        self.assertEqual(new_by_cycle[2], [])
        self.assertEqual(new_by_cycle[3], ["good news flash"])
        self.assertEqual(new_by_cycle[4], [])
        agent.close()

    def test_webhook_posted_once_per_new_finding(self):
        calls = []

        def poster(url, payload):
            calls.append((url, payload["snippet"]))
            return None

        agent, env = make_agent(poster=poster)
        agent.upsert_topic("default", demo_topic())
        agent.set_webhook("default", "http://hook.test/in")
        agent.run_cycle(now=START)
        self.assertEqual(calls, [("http://hook.test/in", "good news today")])
        agent.run_cycle(now=START + 60)
        self.assertEqual(len(calls), 1)  # nothing new, nothing posted
        env.set_page("http://c.test/news", text="good news flash", links=[])
        agent.run_cycle(now=START + 120)
        self.assertEqual(calls[-1], ("http://hook.test/in", "good news flash"))
        agent.close()

    def test_webhook_errors_reported_not_raised(self):
        agent, _ = make_agent(poster=lambda url, payload: "refused")
        agent.upsert_topic("default", demo_topic())
        agent.set_webhook("default", "http://hook.test/in")
        report = agent.run_cycle(now=START)
        self.assertIn(["http://hook.test/in", "webhook:refused"], report["errors"])
        self.assertEqual(len(report["new_findings"]), 1)
        agent.close()

    def test_fetch_errors_become_graph_facts(self):
        spec = demo_spec()
        spec["pages"]["http://c.test/"]["links"].append(
            {"href": "http://c.test/gone", "anchor": "dead link"}
        )
        agent, _ = make_agent(spec=spec)
        agent.upsert_topic("default", demo_topic())
        report = agent.run_cycle(now=START)
        self.assertIn(["http://c.test/gone", "http:404"], report["errors"])
        rows = agent.store.query_triples(subject="http://c.test/gone", predicate="fetch_error")
        self.assertEqual([r.object for r in rows], ["http:404"])
        agent.close()

    def test_state_survives_reopen(self):
        with TemporaryDirectory() as tmp:
            agent, _ = make_agent(data_dir=tmp)
            agent.upsert_topic("default", demo_topic())
            report = agent.run_cycle(now=START)
            self.assertEqual(len(report["new_findings"]), 1)
            finding_id = report["new_findings"][0]["id"]
            agent.give_feedback("default", finding_id, +1)
            agent.close()

            reopened, _ = make_agent(data_dir=tmp)
            self.assertEqual([t.name for t in reopened.list_topics("default")], ["solar"])
            feed = reopened.feed("default")
            self.assertEqual([item["id"] for item in feed], [finding_id])
            self.assertTrue(feed[0]["checked"])
            # last-run marks survive too: nothing is due yet
            self.assertEqual(reopened.run_cycle(now=START + 30)["quotas"], 0)
            reopened.close()

    def test_multiple_users_cycle_independently(self):
        agent, _ = make_agent()
        agent.upsert_topic("a", demo_topic())
        agent.upsert_topic("b", demo_topic(name="btopic", starting_urls=["http://c.test/news"]))
        report = agent.run_cycle(now=START)
        self.assertEqual(report["quotas"], 2)
        topics = {f["topic"] for f in report["new_findings"]}
        self.assertEqual(topics, {"solar", "btopic"})
        agent.close()


class TestFeedAndFeedback(unittest.TestCase):
    def ready_agent(self):
        agent, env = make_agent()
        agent.upsert_topic("default", demo_topic())
        agent.run_cycle(now=START)
        env.set_page("http://c.test/news", text="good news flash", links=[])
        agent.run_cycle(now=START + 60)
        return agent

    def test_feed_shape(self):
        agent = self.ready_agent()
        feed = agent.feed("default")
        self.assertEqual(len(feed), 2)
        for item in feed:
            for key in ("id", "topic", "url", "snippet", "personal", "social", "checked", "at"):
                self.assertIn(key, item)
        agent.close()

    def test_negative_feedback_hides_item(self):
        agent = self.ready_agent()
        feed = agent.feed("default")
        hidden = feed[0]["id"]
        agent.give_feedback("default", hidden, -1)
        after = agent.feed("default")
        self.assertNotIn(hidden, [item["id"] for item in after])
        self.assertEqual(len(after), 1)
        # hiding is per user
        self.assertEqual(len(agent.feed("someone_else")), 2)
        agent.close()

    def test_positive_feedback_checks_and_boosts(self):
        agent = self.ready_agent()
        feed = agent.feed("default")
        liked = feed[-1]["id"]
        agent.give_feedback("default", liked, +1)
        after = agent.feed("default")
        self.assertEqual(after[0]["id"], liked)
        self.assertTrue(after[0]["checked"])
        self.assertFalse(after[1]["checked"])
        agent.close()

    def test_topic_filter_and_limit(self):
        agent = self.ready_agent()
        self.assertEqual(len(agent.feed("default", topic="nosuch")), 0)
        self.assertEqual(len(agent.feed("default", topic="solar")), 2)
        self.assertEqual(len(agent.feed("default", limit=1)), 1)
        self.assertEqual(agent.feed("default", limit=0), [])
        agent.close()

    def test_mined_patterns_exposed(self):
        agent = self.ready_agent()
        for item in agent.feed("default"):
            agent.give_feedback("default", item["id"], +1)
        mined = agent.mined("default", min_support=2)
        self.assertIn({"pattern": "good news", "support": 2}, mined)
        agent.close()


class TestAdhocSearch(unittest.TestCase):
    def ready_agent(self):
        agent, _ = make_agent()
        agent.upsert_topic("default", demo_topic())
        agent.run_cycle(now=START)
        return agent

    def test_stored_findings_tier_needs_no_fetches(self):
        agent = self.ready_agent()
        out = agent.adhoc_search("default", "good news")
        self.assertEqual(out["scope"], "findings")
        self.assertEqual(out["fetches"], 0)
        self.assertEqual(len(out["results"]), 1)
        agent.close()

    def test_index_tier_re_matches_cached_pages(self):
        agent = self.ready_agent()
        # "welcome home" never became a finding, but the page is in the index
        out = agent.adhoc_search("default", "welcome home")
        self.assertEqual(out["scope"], "index")
        self.assertEqual(out["fetches"], 0)
        self.assertEqual([r["url"] for r in out["results"]], ["http://c.test/"])
        agent.close()

    def test_index_tier_extracts_entities(self):
        agent = self.ready_agent()
        out = agent.adhoc_search("default", "welcome $place")
        self.assertEqual(out["scope"], "index")
        self.assertEqual(out["results"][0]["bindings"], {"place": "home"})
        rows = agent.store.query_triples(predicate="place")
        self.assertEqual([r.object for r in rows], ["home"])
        agent.close()

    def test_live_tier_fetches_and_stores(self):
        agent = self.ready_agent()
        out = agent.adhoc_search(
            "default", "plain about text", scope="live", url="http://c.test/about"
        )
        self.assertEqual(out["scope"], "live")
        self.assertGreater(out["fetches"], 0)
        self.assertEqual(len(out["results"]), 1)
        # live results are persisted like cycle findings
        self.assertIn(
            "finding:" + out["results"][0]["id"],
            {r.subject for r in agent.store.query_triples(predicate="finding/topic")},
        )
        agent.close()

    def test_live_requires_url_and_scope_is_validated(self):
        agent = self.ready_agent()
        with pytest.raises(ValueError):
            agent.adhoc_search("default", "x", scope="live")
        with pytest.raises(UnknownScope):
            agent.adhoc_search("default", "x", scope="everywhere")
        agent.close()

    def test_auto_misses_everywhere(self):
        agent = self.ready_agent()
        out = agent.adhoc_search("default", "absent unicorn")
        self.assertEqual(out["scope"], "index")
        self.assertEqual(out["results"], [])
        agent.close()


class TestGraphSlice(unittest.TestCase):
    def test_slice_around_finding(self):
        agent, _ = make_agent()
        agent.upsert_topic("default", demo_topic())
        report = agent.run_cycle(now=START)
        node = "finding:" + report["new_findings"][0]["id"]
        sliced = agent.graph_slice([node], hops=1)
        self.assertIn(node, sliced["nodes"])
        self.assertIn("good news today", sliced["nodes"])
        self.assertFalse(sliced["truncated"])
        preds = {e[1] for e in sliced["edges"]}
        self.assertIn("finding/snippet", preds)
        only = agent.graph_slice([node], hops=1, predicates=["finding/url"])
        self.assertEqual({e[1] for e in only["edges"]}, {"finding/url"})
        nothing = agent.graph_slice([node], hops=1, t1=START - 10)
        self.assertEqual(nothing["edges"], [])
        agent.close()

    def test_truncation_flag(self):
        agent, _ = make_agent()
        agent.upsert_topic("default", demo_topic())
        report = agent.run_cycle(now=START)
        node = "finding:" + report["new_findings"][0]["id"]
        sliced = agent.graph_slice([node], hops=2, max_nodes=2)
        self.assertTrue(sliced["truncated"])
        self.assertLessEqual(len(sliced["nodes"]), 2)
        agent.close()


class TestRss(unittest.TestCase):
    def items(self):
        return [
            {
                "id": "abc",
                "url": "http://c.test/news",
                "snippet": "good news today",
                "at": START,
                "image": "http://c.test/pic.png",
            },
            {"id": "xyz", "url": "http://c.test/x", "snippet": "plain", "at": START + 5},
        ]

    def test_document_structure(self):
        doc = render_rss_document("solar", self.items())
        root = ET.fromstring(doc)
        self.assertEqual(root.tag, "rss")
        self.assertEqual(root.get("version"), "2.0")
        channel = root.find("channel")
        self.assertEqual(channel.findtext("title"), "latentsearch: solar")
        items = channel.findall("item")
        self.assertEqual(len(items), 2)
        first = items[0]
        self.assertEqual(first.findtext("title"), "good news today")
        self.assertEqual(first.findtext("link"), "http://c.test/news")
        guid = first.find("guid")
        self.assertEqual(guid.text, "abc")
        self.assertEqual(guid.get("isPermaLink"), "false")
        parsed = email.utils.parsedate_to_datetime(first.findtext("pubDate"))
        self.assertEqual(int(parsed.timestamp()), START)
        enclosure = first.find("enclosure")
        self.assertEqual(enclosure.get("url"), "http://c.test/pic.png")
        self.assertEqual(enclosure.get("type"), "image/png")
        self.assertIsNone(items[1].find("enclosure"))

    def test_title_truncated(self):
        long_snippet = "word " * 60
        doc = render_rss_document("t", [{"id": "i", "url": "u", "snippet": long_snippet, "at": 1}])
        root = ET.fromstring(doc)
        self.assertEqual(len(root.find("channel/item").findtext("title")), 120)

    def test_random_feeds_stay_well_formed(self):
        rng = random.Random(4)
        nasty = ["<b>", "&amp;", 'quote"s', "ampers&nd", "ümlaut", "]]>"]
        for _ in range(30):
            items = []
            for i in range(rng.randrange(0, 6)):
                items.append(
                    {
                        "id": f"id{i}",
                        "url": f"http://r.test/{i}",
                        "snippet": " ".join(rng.choice(nasty) for _ in range(rng.randrange(1, 5))),
                        "at": rng.randrange(1, 2**31),
                        "image": "http://r.test/i.jpg" if rng.random() < 0.5 else None,
                    }
                )
            root = ET.fromstring(render_rss_document("fuzz", items))
            self.assertEqual(len(root.find("channel").findall("item")), len(items))

    def test_agent_renders_ranked_feed(self):
        agent, _ = make_agent()
        agent.upsert_topic("default", demo_topic())
        agent.run_cycle(now=START)
        root = ET.fromstring(agent.render_rss("solar"))
        items = root.find("channel").findall("item")
        self.assertEqual(len(items), 1)
        self.assertEqual(items[0].findtext("description"), "good news today")
        # unknown topic -> empty but valid channel
        empty = ET.fromstring(agent.render_rss("nosuch"))
        self.assertEqual(empty.find("channel").findall("item"), [])
        agent.close()


class TestIndexingEnv(unittest.TestCase):
    def test_cycle_populates_text_index(self):
        agent, _ = make_agent()
        agent.upsert_topic("default", demo_topic())
        agent.run_cycle(now=START)
        cached = agent.index.get_cached_text("http://c.test/news")
        self.assertEqual(cached.text, "good news today")
        from latentsearch.patterns import tokenize

        hits = agent.index.lookup(tokenize("welcome home"))
        self.assertEqual([u for u, _ in hits], ["http://c.test/"])
        agent.close()


if __name__ == "__main__":
    unittest.main()
