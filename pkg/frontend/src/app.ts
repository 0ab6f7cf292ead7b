/**
 * The annotation workbench: one sentence and its parse tree on the left,
 * a feature stepper with a property picker on the right, an advisory
 * assistant panel below. Single-user per tab; every state change goes
 * through POST /annotations and a refresh rebuilds the view from the
 * server's session cursor.
 *
 * Queue model: the server walks sentence-by-sentence through the manual
 * features and advances its cursor only when a submission matches the
 * cursor cell. The tab lets the annotator step between features of the
 * current sentence (and review earlier sentences it has seen); those
 * submissions are recorded as edits without moving the cursor.
 */

import type { Api } from "./api.js";
import { ApiError } from "./api.js";
import { fetchSuggestion, type AssistantView } from "./assistant.js";
import {
  applySuggestion,
  canSubmit,
  chooseNone,
  initialPicker,
  propertiesForSubmit,
  toggleProperty,
  type PickerState,
} from "./picker.js";
import type { NodePath } from "./tree.js";
import { TreeView } from "./treeView.js";
import type {
  FeatureDoc,
  NextUnit,
  ProgressDoc,
  SentenceDoc,
  SessionInfo,
  TaxonomyDoc,
} from "./types.js";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export interface WorkbenchOptions {
  annotatorId: string;
  /** session persistence; pass null to disable */
  storage?: StorageLike | null;
}

interface CellNote {
  properties: string[];
  nodePath: NodePath | null;
}

/** Everything the tab knows about one sentence it has seen. */
interface SentenceView {
  sentence: SentenceDoc;
  /** manual-feature index -> last submitted content known to this tab */
  cells: Map<number, CellNote>;
  /** indices known to have a record (content may be unknown) */
  done: Set<number>;
  /** indices explicitly skipped in this tab (no record written) */
  skipped: Set<number>;
}

const SCAFFOLD = `
<header class="topbar">
  <h1>Annotation workbench</h1>
  <div id="progress"></div>
  <nav class="sentence-nav">
    <button id="btn-prev-sentence" type="button">prev sentence ([)</button>
    <button id="btn-next-sentence" type="button">next sentence (])</button>
  </nav>
</header>
<p id="hint">Select the node closest to the leaves — the smallest fragment
that captures the feature or property under consideration.</p>
<div class="columns">
  <section class="panel" id="sentence-panel">
    <div id="sentence" class="sentence"></div>
    <div id="tree" class="tree"></div>
  </section>
  <section class="panel" id="feature-panel">
    <div class="stepper">
      <button id="btn-prev" type="button">prev feature (p)</button>
      <span id="stepper-dots"></span>
      <button id="btn-next" type="button">next feature (n)</button>
    </div>
    <h2 id="feature-title"></h2>
    <div id="feature-part" class="tag"></div>
    <div id="props"></div>
    <div class="actions">
      <button id="btn-none" type="button">None apply (0)</button>
      <button id="btn-skip" type="button">Skip (s)</button>
      <button id="btn-submit" type="button">Submit (Enter)</button>
    </div>
  </section>
</div>
<section class="panel" id="assist-panel">
  <button id="assist-open" type="button">Consult assistant (a)</button>
  <div id="assist-body" hidden></div>
</section>
<div id="complete" hidden>Queue complete — every sentence has been presented.</div>
<div id="status" role="status" aria-live="polite"></div>
`;

export class Workbench {
  private api: Api;
  private annotatorId: string;
  private storage: StorageLike | null;
  private root: HTMLElement;
  private treeView: TreeView;

  private taxonomy: TaxonomyDoc | null = null;
  private manualFeatures: FeatureDoc[] = [];
  private session: SessionInfo | null = null;
  private progressDoc: ProgressDoc | null = null;

  private history: SentenceView[] = [];
  private viewSi = 0; // index into history of the sentence on screen
  private localIndex = 0; // manual-feature index on screen
  private serverCursor: [number, number] | null = null;
  private completed = false;

  private picker: PickerState = initialPicker(null);
  private assistView: AssistantView = { kind: "idle" };

  private ready = false;
  private chain: Promise<void> = Promise.resolve();
  private keyHandler = (ev: KeyboardEvent) => this.onKeydown(ev);

  constructor(root: HTMLElement, api: Api, opts: WorkbenchOptions) {
    this.root = root;
    this.api = api;
    this.annotatorId = opts.annotatorId;
    this.storage = opts.storage !== undefined ? opts.storage : defaultStorage();
    root.innerHTML = SCAFFOLD;
    this.treeView = new TreeView(this.el("#tree"), this.el("#sentence"), {
      onSelect: (path, fragmentText) => this.onTreeSelect(path, fragmentText),
    });
    this.wireEvents();
  }

  /** Unhook the document-level keyboard listener. */
  destroy(): void {
    this.ready = false;
    this.root.ownerDocument.removeEventListener("keydown", this.keyHandler);
  }

  /** Load taxonomy, open (or reclaim) the session, and show the cursor cell. */
  async start(): Promise<void> {
    this.taxonomy = await this.api.taxonomy();
    this.manualFeatures = this.taxonomy.features.filter(
      (f) => f.annotation_mode === "manual",
    );
    this.session = await this.reclaimSession();
    this.progressDoc = await this.api.progress();
    await this.attachUnit(await this.api.next(this.session.session_id));
    this.ready = true;
  }

  /** Resolves once every queued user action has settled (test hook). */
  idle(): Promise<void> {
    return this.chain;
  }

  // ── Session ────────────────────────────────────────────────────────

  private sessionKey(): string {
    return `rhetann.session.${this.annotatorId}`;
  }

  private async reclaimSession(): Promise<SessionInfo> {
    const stored = this.storage?.getItem(this.sessionKey()) ?? null;
    if (stored) {
      try {
        return await this.api.openSession(this.annotatorId, stored);
      } catch (err) {
        if (!(err instanceof ApiError) || err.status !== 404) throw err;
        this.storage?.removeItem(this.sessionKey());
      }
    }
    const fresh = await this.api.openSession(this.annotatorId);
    this.storage?.setItem(this.sessionKey(), fresh.session_id);
    return fresh;
  }

  // ── Event wiring ───────────────────────────────────────────────────

  private wireEvents(): void {
    this.el("#btn-submit").addEventListener("click", () => this.enqueue(() => this.submit()));
    this.el("#btn-skip").addEventListener("click", () => this.enqueue(() => this.skip()));
    this.el("#btn-none").addEventListener("click", () => this.enqueue(() => this.pickNone()));
    this.el("#btn-next").addEventListener("click", () => this.enqueue(() => this.nextFeature()));
    this.el("#btn-prev").addEventListener("click", () => this.enqueue(() => this.prevFeature()));
    this.el("#btn-prev-sentence").addEventListener("click", () =>
      this.enqueue(() => this.moveSentence(-1)),
    );
    this.el("#btn-next-sentence").addEventListener("click", () =>
      this.enqueue(() => this.moveSentence(+1)),
    );
    this.el("#assist-open").addEventListener("click", () =>
      this.enqueue(() => this.openAssistant(false)),
    );
    this.el("#props").addEventListener("change", (ev) => {
      const target = ev.target as HTMLInputElement | null;
      const propertyId = target?.dataset?.["prop"];
      if (propertyId) this.enqueue(() => this.togglePicker(propertyId));
    });
    this.root.ownerDocument.addEventListener("keydown", this.keyHandler);
  }

  private onKeydown(ev: KeyboardEvent): void {
    if (!this.ready || ev.ctrlKey || ev.metaKey || ev.altKey) return;
    const target = ev.target as { tagName?: string; type?: string } | null;
    const tag = target?.tagName ?? "";
    if (tag === "TEXTAREA" || tag === "SELECT") return;
    if (tag === "INPUT" && target?.type !== "checkbox") return;
    // let a focused button keep its native Enter/Space activation
    if (tag === "BUTTON" && (ev.key === "Enter" || ev.key === " ")) return;
    if (this.handleKey(ev.key)) ev.preventDefault();
  }

  /** Returns true when the key mapped to an action. */
  private handleKey(key: string): boolean {
    if (/^[1-9]$/.test(key)) {
      // resolve against whatever feature is current once the queue gets here
      this.enqueue(() => {
        const property = this.currentFeature()?.properties[Number(key) - 1];
        if (property) this.togglePicker(property.id);
      });
      return true;
    }
    switch (key) {
      case "0":
        this.enqueue(() => this.pickNone());
        return true;
      case "Enter":
        this.enqueue(() => this.submit());
        return true;
      case "s":
        this.enqueue(() => this.skip());
        return true;
      case "n":
        this.enqueue(() => this.nextFeature());
        return true;
      case "p":
        this.enqueue(() => this.prevFeature());
        return true;
      case "[":
        this.enqueue(() => this.moveSentence(-1));
        return true;
      case "]":
        this.enqueue(() => this.moveSentence(+1));
        return true;
      case "a":
        this.enqueue(() => this.openAssistant(false));
        return true;
      case "r":
        if (this.assistView.kind === "idle") return false;
        this.enqueue(() => this.openAssistant(true));
        return true;
      default:
        return this.treeView.handleKey(key);
    }
  }

  /** All user actions run one at a time; failures land in the status line. */
  private enqueue(task: () => void | Promise<void>): void {
    this.chain = this.chain
      .then(() => task())
      .catch((err: unknown) => {
        const message = err instanceof Error ? err.message : String(err);
        this.setStatus(`Something went wrong: ${message}`);
      });
  }

  // ── Queue position ─────────────────────────────────────────────────

  private currentView(): SentenceView | null {
    return this.history[this.viewSi] ?? null;
  }

  private currentFeature(): FeatureDoc | null {
    return this.manualFeatures[this.localIndex] ?? null;
  }

  private onCursorCell(): boolean {
    if (this.serverCursor === null || this.viewSi !== this.history.length - 1) return false;
    return this.localIndex === this.serverCursor[1];
  }

  private isPending(view: SentenceView, index: number): boolean {
    return !view.done.has(index);
  }

  /** Fold a /next payload into the tab state and render it. */
  private async attachUnit(unit: NextUnit): Promise<void> {
    if (unit.status === "end_of_queue") {
      this.completed = true;
      this.serverCursor = null;
      const last = this.history[this.history.length - 1];
      if (last) for (let i = 0; i < this.manualFeatures.length; i++) last.done.add(i);
      this.progressDoc = await this.api.progress();
      this.viewSi = Math.max(0, this.history.length - 1);
      this.renderAll();
      this.setStatus("Every sentence in the queue is annotated. Earlier sentences stay open for review.");
      return;
    }
    const cursor = unit.cursor!;
    const sentence = unit.sentence!;
    this.serverCursor = cursor;
    let view = this.history[this.history.length - 1];
    if (!view || view.sentence.id !== sentence.id) {
      // the previous sentence only leaves the cursor once fully submitted
      if (view) for (let i = 0; i < this.manualFeatures.length; i++) view.done.add(i);
      view = {
        sentence,
        cells: new Map(),
        done: new Set(range(cursor[1])),
        skipped: new Set(),
      };
      this.history.push(view);
      if (this.history.length > 25) this.history.shift();
      this.progressDoc = await this.api.progress();
    }
    if (unit.existing) {
      view.done.add(cursor[1]);
      view.cells.set(cursor[1], {
        properties: [...unit.existing.properties],
        nodePath: unit.existing.node_path ? [...unit.existing.node_path] : null,
      });
    }
    this.viewSi = this.history.length - 1;
    this.localIndex = cursor[1];
    this.renderAll();
  }

  // ── Actions ────────────────────────────────────────────────────────

  private togglePicker(propertyId: string): void {
    if (!this.currentFeature()) return;
    this.picker = toggleProperty(this.picker, propertyId);
    this.syncPicker();
  }

  private pickNone(): void {
    if (!this.currentFeature()) return;
    this.picker = chooseNone(this.picker);
    this.syncPicker();
    this.setStatus("Marked as: none of these properties apply. Submit to record it.");
  }

  private async submit(): Promise<void> {
    const view = this.currentView();
    const feature = this.currentFeature();
    if (!view || !feature || !this.session) return;
    if (!canSubmit(this.picker)) {
      this.setStatus('Pick at least one property or choose "None apply" — or skip (s) to leave it pending.');
      return;
    }
    const selection = this.treeView.selection();
    const nodePath = selection === null || selection.length === 0 ? null : selection;
    const properties = propertiesForSubmit(this.picker);
    const index = this.localIndex;
    const wasCursor = this.onCursorCell();
    const result = await this.api.submit({
      sentence_id: view.sentence.id,
      feature_id: feature.id,
      properties,
      node_path: nodePath,
      session_id: this.session.session_id,
    });
    view.cells.set(index, { properties, nodePath });
    view.done.add(index);
    view.skipped.delete(index);
    const what = properties.length === 0 ? "no properties apply" : properties.join(", ");
    this.setStatus(`Saved ${feature.name}: ${what} (revision ${result.revision}).`);
    if (wasCursor) {
      await this.attachUnit(await this.api.next(this.session.session_id));
    } else {
      this.advanceWithinSentence();
      this.renderAll();
    }
  }

  private skip(): void {
    const view = this.currentView();
    const feature = this.currentFeature();
    if (!view || !feature) return;
    view.skipped.add(this.localIndex);
    this.setStatus(`Skipped ${feature.name} — nothing was recorded; it stays pending.`);
    this.advanceWithinSentence();
    this.renderAll();
  }

  private advanceWithinSentence(): void {
    const view = this.currentView();
    const n = this.manualFeatures.length;
    if (!view || n === 0) return;
    for (let step = 1; step <= n; step++) {
      const i = (this.localIndex + step) % n;
      if (this.isPending(view, i)) {
        if (this.localIndex + step >= n) {
          this.setStatus("Wrapped back to a feature without an answer yet.");
        }
        this.localIndex = i;
        return;
      }
    }
    this.localIndex = (this.localIndex + 1) % n;
  }

  private nextFeature(): void {
    if (!this.currentView()) return;
    this.localIndex = (this.localIndex + 1) % this.manualFeatures.length;
    this.renderAll();
  }

  private prevFeature(): void {
    if (!this.currentView()) return;
    const n = this.manualFeatures.length;
    this.localIndex = (this.localIndex - 1 + n) % n;
    this.renderAll();
  }

  private moveSentence(delta: number): void {
    const target = this.viewSi + delta;
    if (target < 0 || target >= this.history.length) {
      this.setStatus(delta < 0
        ? "No earlier sentence in this tab."
        : "The next sentence unlocks once this one is finished.");
      return;
    }
    this.viewSi = target;
    const atCursor = this.viewSi === this.history.length - 1;
    this.localIndex = atCursor && this.serverCursor ? this.serverCursor[1] : 0;
    this.renderAll();
    if (!atCursor) {
      this.setStatus("Reviewing an earlier sentence — submissions update your record.");
    }
  }

  private async openAssistant(force: boolean): Promise<void> {
    const view = this.currentView();
    const feature = this.currentFeature();
    if (!view || !feature) return;
    this.assistView = { kind: "loading" };
    this.renderAssistant();
    this.assistView = await fetchSuggestion(this.api, view.sentence.id, feature.id, force);
    this.renderAssistant();
  }

  private applyAssistant(): void {
    const feature = this.currentFeature();
    const assist = this.assistView;
    if (!feature || assist.kind !== "ready") return;
    const suggested = assist.properties;
    if (suggested === null) return;
    const known = new Set(feature.properties.map((p) => p.id));
    const { state, applied, unknown } = applySuggestion(this.picker, suggested, known);
    this.picker = state;
    this.syncPicker();
    this.renderViolations(unknown);
    if (unknown.length > 0 && applied.length === 0) {
      this.setStatus("Suggestion not applied: no suggested property exists for this feature.");
    } else {
      this.setStatus("Suggestion filled in — verify it, then submit yourself.");
    }
  }

  private onTreeSelect(path: NodePath | null, fragmentText: string | null): void {
    if (path === null) {
      this.setStatus("Node selection cleared.");
    } else {
      this.setStatus(`Selected node covers: "${fragmentText ?? ""}"`);
    }
  }

  // ── Rendering ──────────────────────────────────────────────────────

  private el(selector: string): HTMLElement {
    const found = this.root.querySelector(selector);
    if (!found) throw new Error(`missing workbench element ${selector}`);
    return found as HTMLElement;
  }

  private doc(): Document {
    return this.root.ownerDocument;
  }

  private setStatus(text: string): void {
    this.el("#status").textContent = text;
  }

  private renderAll(): void {
    this.renderProgress();
    this.renderSentence();
    this.renderFeature();
    this.assistView = { kind: "idle" };
    this.renderAssistant();
    (this.el("#complete") as HTMLElement).hidden = !this.completed;
  }

  private renderProgress(): void {
    const total = this.progressDoc?.n_sentences;
    const parts: string[] = [`Annotator ${this.annotatorId}`];
    if (this.completed) {
      parts.push(total !== undefined ? `all ${total} sentences done` : "queue complete");
    } else if (this.serverCursor) {
      const where = total !== undefined ? ` of ${total}` : "";
      parts.push(`sentence ${this.serverCursor[0] + 1}${where}`);
    }
    if (this.viewSi < this.history.length - 1) {
      parts.push(`reviewing sentence ${this.viewSi + 1} of this tab`);
    }
    const mine = this.progressDoc?.per_annotator[this.annotatorId];
    if (mine !== undefined) parts.push(`${mine} records`);
    this.el("#progress").textContent = parts.join(" · ");
  }

  private renderSentence(): void {
    const view = this.currentView();
    if (!view) {
      this.treeView.render("", null);
      return;
    }
    this.treeView.render(view.sentence.text, view.sentence.parse);
    this.restoreSelection();
  }

  private restoreSelection(): void {
    const view = this.currentView();
    const saved = view?.cells.get(this.localIndex)?.nodePath ?? null;
    this.treeView.select(saved);
  }

  private renderFeature(): void {
    const view = this.currentView();
    const feature = this.currentFeature();
    const title = this.el("#feature-title");
    const props = this.el("#props");
    props.textContent = "";
    if (!view || !feature) {
      title.textContent = this.completed ? "Nothing left to annotate" : "";
      this.el("#feature-part").textContent = "";
      this.renderStepper();
      return;
    }
    title.textContent = `${this.localIndex + 1}. ${feature.name}`;
    this.el("#feature-part").textContent = feature.part;
    this.picker = initialPicker(view.cells.get(this.localIndex) ?? null);
    const doc = this.doc();
    feature.properties.forEach((property, i) => {
      const row = doc.createElement("label");
      row.className = "prop";
      const box = doc.createElement("input");
      box.type = "checkbox";
      box.dataset["prop"] = property.id;
      row.appendChild(box);
      const name = doc.createElement("b");
      name.textContent = i < 9 ? `${property.name} (${i + 1})` : property.name;
      row.appendChild(name);
      const definition = doc.createElement("span");
      definition.className = "definition";
      definition.textContent = property.definition;
      row.appendChild(definition);
      if (property.examples.length > 0) {
        const examples = doc.createElement("ul");
        examples.className = "examples";
        for (const example of property.examples) {
          const item = doc.createElement("li");
          item.textContent = example;
          examples.appendChild(item);
        }
        row.appendChild(examples);
      }
      props.appendChild(row);
    });
    this.renderStepper();
    this.syncPicker();
    this.restoreSelection();
    const note = view.skipped.has(this.localIndex)
      ? " (skipped earlier — still pending)"
      : view.done.has(this.localIndex)
        ? " (already answered — submit again to change it)"
        : "";
    if (note) this.setStatus(`${feature.name}${note}`);
  }

  private renderStepper(): void {
    const dots = this.el("#stepper-dots");
    dots.textContent = "";
    const view = this.currentView();
    const doc = this.doc();
    this.manualFeatures.forEach((feature, i) => {
      const dot = doc.createElement("button");
      dot.type = "button";
      dot.className = "dot";
      if (view && !this.isPending(view, i)) dot.classList.add("done");
      if (view?.skipped.has(i)) dot.classList.add("skipped");
      if (i === this.localIndex) dot.classList.add("current");
      dot.title = feature.name;
      dot.textContent = String(i + 1);
      dot.addEventListener("click", () =>
        this.enqueue(() => {
          this.localIndex = i;
          this.renderAll();
        }),
      );
      dots.appendChild(dot);
    });
  }

  private syncPicker(): void {
    for (const el of this.el("#props").querySelectorAll("input[type=checkbox]")) {
      const box = el as HTMLInputElement;
      box.checked = this.picker.selected.has(box.dataset["prop"] ?? "");
    }
    const none = this.el("#btn-none");
    none.classList.toggle("active", this.picker.none);
    none.setAttribute("aria-pressed", String(this.picker.none));
    (this.el("#btn-submit") as HTMLButtonElement).disabled = !canSubmit(this.picker);
  }

  private renderAssistant(): void {
    const assist = this.assistView;
    const body = this.el("#assist-body");
    const open = this.el("#assist-open");
    body.textContent = "";
    body.hidden = assist.kind === "idle";
    open.textContent = assist.kind === "idle" ? "Consult assistant (a)" : "Ask again (r)";
    if (assist.kind === "idle") return;
    const doc = this.doc();
    if (assist.kind === "loading") {
      const note = doc.createElement("p");
      note.textContent = "Asking the assistant…";
      body.appendChild(note);
      return;
    }
    if (assist.kind === "offline") {
      const note = doc.createElement("p");
      note.className = "assist-offline";
      const retry = assist.retryAfter ? ` Try again in ${assist.retryAfter}s.` : "";
      note.textContent = `Assistant unavailable: ${assist.message}.${retry} You can keep annotating without it.`;
      body.appendChild(note);
      return;
    }
    const badge = doc.createElement("div");
    badge.className = "advisory";
    badge.textContent = "Advisory — an aid only; verify before you submit.";
    body.appendChild(badge);
    const meta = doc.createElement("div");
    meta.className = "assist-meta";
    meta.textContent = `${assist.model}${assist.cached ? " · stored reply" : " · fresh reply"}`;
    body.appendChild(meta);
    if (assist.explanation) {
      const explanation = doc.createElement("p");
      explanation.className = "assist-explanation";
      explanation.textContent = assist.explanation;
      body.appendChild(explanation);
    }
    const suggested = doc.createElement("div");
    suggested.className = "assist-suggested";
    if (assist.properties === null) {
      suggested.textContent = "The reply could not be parsed into properties.";
      body.appendChild(suggested);
    } else {
      suggested.textContent = assist.properties.length
        ? "Suggests: "
        : "Suggests: none of the properties apply";
      for (const propertyId of assist.properties) {
        const chip = doc.createElement("code");
        chip.textContent = propertyId;
        suggested.appendChild(chip);
        suggested.appendChild(doc.createTextNode(" "));
      }
      body.appendChild(suggested);
      const violations = doc.createElement("div");
      violations.id = "assist-violations";
      violations.className = "violations";
      violations.hidden = true;
      body.appendChild(violations);
      const apply = doc.createElement("button");
      apply.type = "button";
      apply.id = "assist-apply";
      apply.textContent = "Apply suggestion";
      apply.addEventListener("click", () => this.enqueue(() => this.applyAssistant()));
      body.appendChild(apply);
    }
  }

  private renderViolations(unknown: string[]): void {
    const strip = this.root.querySelector("#assist-violations") as HTMLElement | null;
    if (!strip) return;
    if (unknown.length === 0) {
      strip.hidden = true;
      strip.textContent = "";
      return;
    }
    strip.hidden = false;
    strip.textContent = `Not part of this feature, ignored: ${unknown.join(", ")}`;
  }
}

// ── Helpers ──────────────────────────────────────────────────────────

function range(n: number): number[] {
  return Array.from({ length: n }, (_, i) => i);
}

function defaultStorage(): StorageLike | null {
  try {
    const storage = (globalThis as { localStorage?: StorageLike }).localStorage;
    return storage ?? null;
  } catch {
    return null;
  }
}
