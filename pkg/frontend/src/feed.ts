/** Feed rendering and relevance feedback with optimistic updates. */

import { ApiClient, FeedItem } from "./api.js";

function barWidth(score: number): string {
  const clamped = Math.max(0, Math.min(1, score));
  return `${Math.round(clamped * 1000) / 10}%`;
}

function renderItem(item: FeedItem, onFeedback: (id: string, polarity: number) => void): HTMLElement {
  const card = document.createElement("article");
  card.className = "item";
  card.dataset.id = item.id;

  const link = document.createElement("a");
  link.className = "item-url";
  link.href = item.url;
  link.textContent = `${item.topic}: ${item.url}`;
  card.appendChild(link);

  const snippet = document.createElement("p");
  snippet.className = "snippet";
  snippet.textContent = item.snippet;
  card.appendChild(snippet);

  if (item.image) {
    const img = document.createElement("img");
    img.className = "thumb";
    img.src = item.image;
    img.alt = "";
    card.appendChild(img);
  }

  const bars = document.createElement("div");
  bars.className = "bars";
  for (const [kind, score] of [["personal", item.personal], ["social", item.social]] as const) {
    const row = document.createElement("div");
    row.className = `bar ${kind}`;
    row.title = `${kind} ${score.toFixed(2)}`;
    const fill = document.createElement("span");
    fill.className = "fill";
    fill.style.width = barWidth(score);
    row.appendChild(fill);
    bars.appendChild(row);
  }
  card.appendChild(bars);

  const actions = document.createElement("div");
  actions.className = "actions";
  const up = document.createElement("button");
  up.className = "up";
  up.textContent = "+1";
  up.addEventListener("click", () => onFeedback(item.id, 1));
  actions.appendChild(up);
  const down = document.createElement("button");
  down.className = "down";
  down.textContent = "-1";
  down.addEventListener("click", () => onFeedback(item.id, -1));
  actions.appendChild(down);
  if (item.checked) {
    const mark = document.createElement("span");
    mark.className = "check";
    mark.textContent = "✓";
    actions.appendChild(mark);
  }
  card.appendChild(actions);
  return card;
}

/** Renders items in the order the server returned them. */
export function renderFeed(
  root: HTMLElement,
  items: FeedItem[],
  onFeedback: (id: string, polarity: number) => void,
): void {
  root.textContent = "";
  if (!items.length) {
    const empty = document.createElement("p");
    empty.className = "empty";
    empty.textContent = "No findings yet.";
    root.appendChild(empty);
    return;
  }
  for (const item of items) root.appendChild(renderItem(item, onFeedback));
}

export class FeedView {
  private root: HTMLElement;
  private statusEl: HTMLElement;
  private client: ApiClient;
  private user: string;
  items: FeedItem[] = [];

  constructor(root: HTMLElement, statusEl: HTMLElement, client: ApiClient, user: string) {
    this.root = root;
    this.statusEl = statusEl;
    this.client = client;
    this.user = user;
  }

  private render(): void {
    renderFeed(this.root, this.items, (id, polarity) => {
      void this.feedback(id, polarity);
    });
  }

  async load(): Promise<void> {
    try {
      this.items = await this.client.getFeed(this.user);
      this.statusEl.textContent = "";
      this.render();
    } catch (err) {
      this.statusEl.textContent = `feed unavailable: ${(err as Error).message}`;
    }
  }

  /**
   * Applies the vote locally before the server confirms it: -1 drops the
   * item, +1 marks it checked. A rejected request restores the old list.
   */
  async feedback(id: string, polarity: number): Promise<void> {
    const before = this.items;
    if (polarity < 0) {
      this.items = before.filter((item) => item.id !== id);
    } else {
      this.items = before.map((item) => (item.id === id ? { ...item, checked: true } : item));
    }
    this.render();
    try {
      await this.client.postFeedback(this.user, id, polarity);
      this.statusEl.textContent = "";
    } catch (err) {
      this.items = before;
      this.render();
      this.statusEl.textContent = `feedback failed: ${(err as Error).message}`;
    }
  }
}
