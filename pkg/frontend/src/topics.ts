/** Topic list editor. Saves the whole list at once; the server validates
 * every pattern before applying anything, so a failed save changes nothing. */

import { ApiClient, ApiError, TopicDoc } from "./api.js";

interface RowRefs {
  row: HTMLElement;
  name: HTMLInputElement;
  pattern: HTMLInputElement;
  urls: HTMLInputElement;
  period: HTMLInputElement;
  enabled: HTMLInputElement;
}

function textInput(className: string, value: string, placeholder: string): HTMLInputElement {
  const input = document.createElement("input");
  input.type = "text";
  input.className = className;
  input.value = value;
  input.placeholder = placeholder;
  return input;
}

export class TopicsEditor {
  private root: HTMLElement;
  private statusEl: HTMLElement;
  private client: ApiClient;
  private user: string;
  private rows: RowRefs[] = [];
  private list: HTMLElement;
  /** Called after a successful save so the feed can refresh promptly. */
  onSaved: (() => void) | null = null;

  constructor(root: HTMLElement, statusEl: HTMLElement, client: ApiClient, user: string) {
    this.root = root;
    this.statusEl = statusEl;
    this.client = client;
    this.user = user;
    this.list = document.createElement("div");
    this.list.className = "topic-rows";
  }

  private addRow(doc: TopicDoc): void {
    const row = document.createElement("div");
    row.className = "topic-row";
    const name = textInput("t-name", doc.name, "name");
    const pattern = textInput("t-pattern", doc.pattern, "pattern");
    const urls = textInput("t-urls", doc.urls.join(" "), "start urls");
    const period = textInput("t-period", String(doc.period), "period (s)");
    const enabled = document.createElement("input");
    enabled.type = "checkbox";
    enabled.className = "t-enabled";
    enabled.checked = doc.enabled !== false;
    const remove = document.createElement("button");
    remove.className = "t-remove";
    remove.textContent = "remove";
    const refs: RowRefs = { row, name, pattern, urls, period, enabled };
    remove.addEventListener("click", () => {
      this.rows = this.rows.filter((r) => r !== refs);
      row.remove();
    });
    for (const el of [name, pattern, urls, period, enabled, remove]) row.appendChild(el);
    this.rows.push(refs);
    this.list.appendChild(row);
  }

  private clearErrors(): void {
    for (const refs of this.rows) {
      refs.pattern.classList.remove("invalid");
      for (const el of Array.from(refs.row.querySelectorAll(".pattern-error"))) el.remove();
    }
  }

  /** Points at the offending character of the pattern the server rejected. */
  private showPatternError(err: ApiError): void {
    const target = this.rows.find((r) => r.name.value === err.topic) ?? this.rows[0];
    if (!target) return;
    target.pattern.classList.add("invalid");
    const note = document.createElement("div");
    note.className = "pattern-error";
    const msg = document.createElement("span");
    msg.className = "pattern-error-msg";
    msg.textContent = err.position === null ? err.message : `${err.message} (column ${err.position})`;
    note.appendChild(msg);
    if (err.position !== null) {
      const caret = document.createElement("pre");
      caret.className = "pattern-error-caret";
      caret.textContent = `${target.pattern.value}\n${" ".repeat(err.position)}^`;
      note.appendChild(caret);
    }
    target.row.appendChild(note);
  }

  private collect(): TopicDoc[] {
    return this.rows.map((refs) => ({
      name: refs.name.value.trim(),
      pattern: refs.pattern.value,
      urls: refs.urls.value.split(/\s+/).filter((u) => u.length > 0),
      period: Number(refs.period.value) || 0,
      enabled: refs.enabled.checked,
    }));
  }

  private renderShell(): void {
    this.root.textContent = "";
    this.root.appendChild(this.list);
    const add = document.createElement("button");
    add.className = "t-add";
    add.textContent = "add topic";
    add.addEventListener("click", () => {
      this.addRow({ name: "", pattern: "", urls: [], period: 3600, enabled: true });
    });
    const save = document.createElement("button");
    save.className = "t-save";
    save.textContent = "save topics";
    save.addEventListener("click", () => {
      void this.save();
    });
    this.root.appendChild(add);
    this.root.appendChild(save);
  }

  async load(): Promise<void> {
    try {
      const topics = await this.client.getTopics(this.user);
      this.rows = [];
      this.list.textContent = "";
      this.renderShell();
      for (const doc of topics) this.addRow(doc);
    } catch (err) {
      this.statusEl.textContent = `topics unavailable: ${(err as Error).message}`;
    }
  }

  async save(): Promise<void> {
    this.clearErrors();
    try {
      await this.client.putTopics(this.user, this.collect());
      this.statusEl.textContent = "topics saved";
      if (this.onSaved) this.onSaved();
    } catch (err) {
      if (err instanceof ApiError && err.position !== null) {
        this.showPatternError(err);
        this.statusEl.textContent = "";
      } else {
        this.statusEl.textContent = `save failed: ${(err as Error).message}`;
      }
    }
  }
}
