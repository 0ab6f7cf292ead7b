/**
 * Renders a constituency tree with clickable nodes next to a sentence
 * strip whose tokens highlight to show exactly which fragment the
 * selected node covers. A sentence without a usable tree degrades to
 * flat text: still readable and annotatable, but with node selection
 * (and therefore node-path submission) disabled.
 */

import {
  fragment,
  isWellFormed,
  leafSpan,
  navigate,
  pathFromKey,
  pathKey,
  walk,
  type NavDirection,
  type NodePath,
} from "./tree.js";
import type { TreeDoc } from "./types.js";

export interface TreeViewDelegate {
  onSelect(path: NodePath | null, fragmentText: string | null): void;
}

const ARROW_KEYS: Record<string, NavDirection> = {
  ArrowUp: "up",
  ArrowDown: "down",
  ArrowLeft: "left",
  ArrowRight: "right",
};

export class TreeView {
  private treeEl: HTMLElement;
  private sentenceEl: HTMLElement;
  private delegate: TreeViewDelegate;
  private doc: TreeDoc | null = null;
  private selected: NodePath | null = null;

  constructor(treeEl: HTMLElement, sentenceEl: HTMLElement, delegate: TreeViewDelegate) {
    this.treeEl = treeEl;
    this.sentenceEl = sentenceEl;
    this.delegate = delegate;
    this.treeEl.addEventListener("click", (ev) => {
      const target = ev.target as HTMLElement | null;
      const button = target?.closest?.("button.tlabel") as HTMLElement | null;
      if (!button || !this.interactive()) return;
      const key = button.dataset["path"];
      if (key === undefined) return;
      this.applySelection(pathFromKey(key), true);
    });
  }

  interactive(): boolean {
    return this.doc !== null;
  }

  selection(): NodePath | null {
    return this.selected === null ? null : [...this.selected];
  }

  /** Leaf fragment covered by the current selection, or null. */
  fragmentText(): string | null {
    if (this.doc === null || this.selected === null) return null;
    return fragment(this.doc, this.selected);
  }

  /** What the sentence strip currently shows highlighted (test hook). */
  highlightedText(): string {
    const covered = this.sentenceEl.querySelectorAll("span.token.covered");
    return [...covered].map((el) => el.textContent ?? "").join(" ");
  }

  render(sentenceText: string, parse: unknown): void {
    this.selected = null;
    this.treeEl.textContent = "";
    this.sentenceEl.textContent = "";
    if (!isWellFormed(parse)) {
      this.doc = null;
      this.sentenceEl.textContent = sentenceText;
      const note = this.ownerDoc().createElement("p");
      note.className = "tree-unavailable";
      note.textContent = "No usable parse for this sentence; node selection is disabled.";
      this.treeEl.appendChild(note);
      return;
    }
    this.doc = parse;
    this.renderSentenceStrip(parse);
    this.treeEl.appendChild(this.renderNode(parse, []));
  }

  /**
   * Programmatic selection (e.g. restoring a saved annotation). Does not
   * fire the delegate; silently ignores paths the tree does not contain.
   */
  select(path: NodePath | null): void {
    if (path !== null && (this.doc === null || leafSpan(this.doc, path) === null)) return;
    this.applySelection(path, false);
  }

  /** Returns true when the key was consumed. */
  handleKey(key: string): boolean {
    if (!this.interactive()) return false;
    if (key === "Escape") {
      if (this.selected === null) return false;
      this.applySelection(null, true);
      return true;
    }
    const dir = ARROW_KEYS[key];
    if (dir === undefined) return false;
    if (this.selected === null) {
      this.applySelection([], true);
      return true;
    }
    const next = navigate(this.doc as TreeDoc, this.selected, dir);
    if (next !== null) this.applySelection(next, true);
    return true;
  }

  // ── Internals ──────────────────────────────────────────────────────

  private ownerDoc(): Document {
    return this.treeEl.ownerDocument;
  }

  private renderSentenceStrip(doc: TreeDoc): void {
    const owner = this.ownerDoc();
    let index = 0;
    for (const cursor of walk(doc)) {
      if (cursor.node.token === null) continue;
      if (index > 0) this.sentenceEl.appendChild(owner.createTextNode(" "));
      const span = owner.createElement("span");
      span.className = "token";
      span.dataset["index"] = String(index);
      span.textContent = cursor.node.token;
      this.sentenceEl.appendChild(span);
      index += 1;
    }
  }

  private renderNode(node: TreeDoc, path: NodePath): HTMLElement {
    const owner = this.ownerDoc();
    const wrap = owner.createElement("div");
    wrap.className = "tnode";
    const button = owner.createElement("button");
    button.type = "button";
    button.className = "tlabel";
    button.dataset["path"] = pathKey(path);
    button.textContent = node.token === null ? node.label : `${node.label} ${node.token}`;
    wrap.appendChild(button);
    node.children.forEach((child, i) => {
      wrap.appendChild(this.renderNode(child, [...path, i]));
    });
    return wrap;
  }

  private applySelection(path: NodePath | null, notify: boolean): void {
    this.selected = path === null ? null : [...path];
    this.repaint();
    if (notify) this.delegate.onSelect(this.selection(), this.fragmentText());
  }

  private repaint(): void {
    for (const el of this.treeEl.querySelectorAll("button.tlabel.selected")) {
      el.classList.remove("selected");
    }
    for (const el of this.sentenceEl.querySelectorAll("span.token.covered")) {
      el.classList.remove("covered");
    }
    if (this.doc === null || this.selected === null) return;
    const key = pathKey(this.selected);
    for (const el of this.treeEl.querySelectorAll("button.tlabel")) {
      if ((el as HTMLElement).dataset["path"] === key) el.classList.add("selected");
    }
    const span = leafSpan(this.doc, this.selected);
    if (span === null) return;
    const [start, end] = span;
    for (const el of this.sentenceEl.querySelectorAll("span.token")) {
      const idx = Number((el as HTMLElement).dataset["index"]);
      if (idx >= start && idx < end) el.classList.add("covered");
    }
  }
}
