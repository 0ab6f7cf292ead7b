/** Shared fixtures: a 3-leaf tree, a 2-feature taxonomy, and an in-memory
 * stand-in for the annotation server that mirrors its cursor semantics
 * (advance only when a submission matches the cursor cell). */

import { ApiError, type Api } from "../src/api.js";
import type { StorageLike } from "../src/app.js";
import type {
  AssistResult,
  FeatureDoc,
  NextUnit,
  ProgressDoc,
  SentenceDoc,
  SessionInfo,
  SubmitBody,
  SubmitResult,
  TaxonomyDoc,
  TreeDoc,
} from "../src/types.js";

export function leaf(label: string, token: string): TreeDoc {
  return { label, token, children: [] };
}

export function node(label: string, ...children: TreeDoc[]): TreeDoc {
  return { label, token: null, children };
}

/** (S (NP (DT the) (NN dog)) (VP (VBZ eats))) */
export const TREE: TreeDoc = node(
  "S",
  node("NP", leaf("DT", "the"), leaf("NN", "dog")),
  node("VP", leaf("VBZ", "eats")),
);

export function makeTaxonomy(): TaxonomyDoc {
  return {
    version: "test-1",
    features: [
      {
        id: "tense",
        name: "Tense",
        part: "Sentences",
        annotation_mode: "manual",
        properties: [
          {
            id: "past",
            name: "past",
            definition: "the event lies before the moment of speaking",
            examples: ["The dog ate."],
          },
          {
            id: "present",
            name: "present",
            definition: "the event overlaps the moment of speaking",
            examples: ["The dog eats."],
          },
          {
            id: "future",
            name: "future",
            definition: "the event lies after the moment of speaking",
            examples: ["The dog will eat."],
          },
        ],
      },
      {
        id: "mood",
        name: "Mood",
        part: "Sentences",
        annotation_mode: "manual",
        properties: [
          {
            id: "declarative",
            name: "declarative",
            definition: "states a fact",
            examples: ["It rains."],
          },
          {
            id: "imperative",
            name: "imperative",
            definition: "issues a command",
            examples: ["Run!"],
          },
        ],
      },
      {
        id: "word-count",
        name: "Word count",
        part: "Sentences",
        annotation_mode: "derived",
        properties: [],
      },
    ],
  };
}

export function makeSentences(): SentenceDoc[] {
  return [
    { id: "s1", text: "the dog eats", parse: TREE },
    { id: "s2", text: "run", parse: null },
  ];
}

interface FakeSession {
  annotator: string;
  cursor: [number, number];
}

export class FakeApi implements Api {
  submissions: SubmitBody[] = [];
  assistCalls: Array<{ sentenceId: string; featureId: string; force: boolean }> = [];
  /** null makes /assist behave like a server without a gateway (503) */
  assistResponse: Partial<AssistResult> | null = null;
  sessions = new Map<string, FakeSession>();
  private latest = new Map<string, { properties: string[]; node_path: number[] | null }>();
  private seq = 0;

  constructor(
    private doc: TaxonomyDoc = makeTaxonomy(),
    private sentences: SentenceDoc[] = makeSentences(),
  ) {}

  private manual(): FeatureDoc[] {
    return this.doc.features.filter((f) => f.annotation_mode === "manual");
  }

  private key(sentenceId: string, annotator: string, featureId: string): string {
    return `${sentenceId}|${annotator}|${featureId}`;
  }

  seedExisting(
    sentenceId: string,
    annotator: string,
    featureId: string,
    properties: string[],
    nodePath: number[] | null,
  ): void {
    this.latest.set(this.key(sentenceId, annotator, featureId), {
      properties,
      node_path: nodePath,
    });
  }

  async taxonomy(): Promise<TaxonomyDoc> {
    return this.doc;
  }

  async openSession(annotatorId: string, sessionId?: string | null): Promise<SessionInfo> {
    if (sessionId) {
      const found = this.sessions.get(sessionId);
      if (!found) throw new ApiError(404, `unknown session '${sessionId}'`);
      return {
        session_id: sessionId,
        annotator_id: found.annotator,
        cursor: [...found.cursor] as [number, number],
      };
    }
    const id = `sess-${this.sessions.size + 1}`;
    this.sessions.set(id, { annotator: annotatorId, cursor: [0, 0] });
    return { session_id: id, annotator_id: annotatorId, cursor: [0, 0] };
  }

  async next(sessionId: string): Promise<NextUnit> {
    const session = this.sessions.get(sessionId);
    if (!session) throw new ApiError(404, `unknown session '${sessionId}'`);
    const [si, fi] = session.cursor;
    if (si >= this.sentences.length) return { status: "end_of_queue" };
    const sentence = this.sentences[si]!;
    const feature = this.manual()[fi]!;
    const existing =
      this.latest.get(this.key(sentence.id, session.annotator, feature.id)) ?? null;
    return {
      status: "ok",
      cursor: [si, fi],
      sentence,
      feature: {
        id: feature.id,
        name: feature.name,
        part: feature.part,
        properties: feature.properties,
      },
      existing,
    };
  }

  async submit(body: SubmitBody): Promise<SubmitResult> {
    const feature = this.doc.features.find((f) => f.id === body.feature_id);
    if (!feature) throw new ApiError(422, `unknown feature '${body.feature_id}'`);
    for (const propertyId of body.properties) {
      if (!feature.properties.some((p) => p.id === propertyId)) {
        throw new ApiError(422, `'${propertyId}' is not a property of '${body.feature_id}'`);
      }
    }
    let session: FakeSession | null = null;
    let annotator = body.annotator_id ?? "";
    if (body.session_id) {
      session = this.sessions.get(body.session_id) ?? null;
      if (!session) throw new ApiError(404, `unknown session '${body.session_id}'`);
      annotator = session.annotator;
    }
    this.submissions.push(body);
    this.seq += 1;
    this.latest.set(this.key(body.sentence_id, annotator, body.feature_id), {
      properties: [...body.properties].sort(),
      node_path: body.node_path,
    });
    if (session) {
      const [si, fi] = session.cursor;
      const manual = this.manual();
      if (
        si < this.sentences.length &&
        this.sentences[si]!.id === body.sentence_id &&
        manual[fi]!.id === body.feature_id
      ) {
        session.cursor = fi + 1 >= manual.length ? [si + 1, 0] : [si, fi + 1];
      }
    }
    return {
      revision: this.seq,
      cursor: session ? ([...session.cursor] as [number, number]) : null,
    };
  }

  async assist(sentenceId: string, featureId: string, force = false): Promise<AssistResult> {
    this.assistCalls.push({ sentenceId, featureId, force });
    if (this.assistResponse === null) {
      throw new ApiError(503, "no assistant configured");
    }
    return {
      advisory: true,
      cached: false,
      sentence_id: sentenceId,
      feature_id: featureId,
      model: "mock-model",
      temperature: 0,
      parse_ok: true,
      properties: [],
      explanation: "",
      ...this.assistResponse,
    };
  }

  async progress(): Promise<ProgressDoc> {
    const per: Record<string, number> = {};
    for (const body of this.submissions) {
      const annotator = body.session_id
        ? (this.sessions.get(body.session_id)?.annotator ?? "?")
        : (body.annotator_id ?? "?");
      per[annotator] = (per[annotator] ?? 0) + 1;
    }
    const manual = this.manual().length;
    return {
      n_sentences: this.sentences.length,
      n_manual_features: manual,
      total_units: this.sentences.length * manual,
      per_annotator: per,
      per_feature: {},
    };
  }
}

export class FakeStorage implements StorageLike {
  private map = new Map<string, string>();

  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }

  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }

  removeItem(key: string): void {
    this.map.delete(key);
  }
}

export function pressKey(doc: Document, key: string): void {
  doc.dispatchEvent(new KeyboardEvent("keydown", { key, bubbles: true }));
}

export function textOf(root: HTMLElement, selector: string): string {
  return root.querySelector(selector)?.textContent ?? "";
}

export function coveredText(root: HTMLElement): string {
  return [...root.querySelectorAll("#sentence .token.covered")]
    .map((el) => el.textContent ?? "")
    .join(" ");
}
