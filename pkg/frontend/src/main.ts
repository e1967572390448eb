/** Entry point: wires the feed, topic editor, and refresh loop together. */

import { createClient } from "./api.js";
import { FeedView } from "./feed.js";
import { TopicsEditor } from "./topics.js";
import { startPolling } from "./poll.js";

function currentUser(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("user");
  return fromQuery || localStorage.getItem("agent_user") || "default";
}

function init(): void {
  const feedRoot = document.getElementById("feed");
  const topicsRoot = document.getElementById("topics");
  const statusEl = document.getElementById("status");
  if (!feedRoot || !topicsRoot || !statusEl) return;

  const token = localStorage.getItem("agent_token");
  const client = createClient("", token);
  const user = currentUser();

  const feed = new FeedView(feedRoot, statusEl, client, user);
  const topics = new TopicsEditor(topicsRoot, statusEl, client, user);
  topics.onSaved = () => {
    void feed.load();
  };

  void topics.load();
  startPolling(() => feed.load());
}

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", init);
} else {
  init();
}
