/** Payload shapes of the annotation server endpoints the workbench consumes. */

export interface PropertyDoc {
  id: string;
  name: string;
  definition: string;
  examples: string[];
}

export interface FeatureDoc {
  id: string;
  name: string;
  part: string;
  annotation_mode: string;
  properties: PropertyDoc[];
}

export interface TaxonomyDoc {
  version: string;
  features: FeatureDoc[];
}

/** Serialized constituency tree: a node is either a leaf (token) or has children. */
export interface TreeDoc {
  label: string;
  token: string | null;
  children: TreeDoc[];
}

export interface SentenceDoc {
  id: string;
  text: string;
  parse: TreeDoc | null;
}

export interface UnitFeatureDoc {
  id: string;
  name: string;
  part: string;
  properties: PropertyDoc[];
}

export interface ExistingAnnotation {
  properties: string[];
  node_path: number[] | null;
}

export interface NextUnit {
  status: "ok" | "end_of_queue";
  cursor?: [number, number];
  sentence?: SentenceDoc;
  feature?: UnitFeatureDoc;
  existing?: ExistingAnnotation | null;
}

export interface SessionInfo {
  session_id: string;
  annotator_id: string;
  cursor: [number, number];
}

export interface SubmitBody {
  sentence_id: string;
  feature_id: string;
  properties: string[];
  node_path: number[] | null;
  session_id?: string;
  annotator_id?: string;
  kind?: string;
}

export interface SubmitResult {
  revision: number;
  cursor: [number, number] | null;
}

export interface AssistResult {
  advisory: boolean;
  cached: boolean;
  sentence_id: string;
  feature_id: string;
  model: string;
  temperature: number;
  parse_ok: boolean;
  properties: string[] | null;
  explanation: string;
}

export interface ProgressDoc {
  n_sentences: number;
  n_manual_features: number;
  total_units: number;
  per_annotator: Record<string, number>;
  per_feature: Record<string, Record<string, number>>;
}
