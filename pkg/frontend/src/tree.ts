/**
 * Pure helpers over serialized constituency trees.
 *
 * A node path is the list of child indices from the root; [] addresses the
 * root itself. The fragment rule (leaf tokens under the node, in order,
 * joined with single spaces) must stay in lockstep with the server, which
 * uses the same rule when it records and reports node-level annotations.
 */
import type { TreeDoc } from "./types.js";

export type NodePath = number[];

export type NavDirection = "up" | "down" | "left" | "right";

// guards against cyclic or absurdly deep documents
const MAX_DEPTH = 128;

export function isWellFormed(doc: unknown, depth = 0): doc is TreeDoc {
  if (depth > MAX_DEPTH || typeof doc !== "object" || doc === null) return false;
  const node = doc as Record<string, unknown>;
  if (typeof node.label !== "string" || node.label === "") return false;
  if (!Array.isArray(node.children)) return false;
  if (node.token === null || node.token === undefined) {
    // interior node: must have children, all well-formed
    if (node.children.length === 0) return false;
    return node.children.every((c) => isWellFormed(c, depth + 1));
  }
  // leaf: a token and nothing below it
  return typeof node.token === "string" && node.children.length === 0;
}

export function nodeAt(doc: TreeDoc, path: NodePath): TreeDoc | null {
  let node = doc;
  for (const index of path) {
    const child = node.children[index];
    if (child === undefined) return null;
    node = child;
  }
  return node;
}

export function leafTokens(doc: TreeDoc): string[] {
  if (doc.token !== null) return [doc.token];
  const out: string[] = [];
  for (const child of doc.children) out.push(...leafTokens(child));
  return out;
}

/** Leaf tokens under the addressed node, in order, single-space joined. */
export function fragment(doc: TreeDoc, path: NodePath): string | null {
  const node = nodeAt(doc, path);
  return node === null ? null : leafTokens(node).join(" ");
}

/** Leaf-index range [start, end) covered by the addressed node. */
export function leafSpan(doc: TreeDoc, path: NodePath): [number, number] | null {
  let node = doc;
  let start = 0;
  for (const index of path) {
    if (index < 0 || index >= node.children.length) return null;
    for (let i = 0; i < index; i++) start += leafTokens(node.children[i]!).length;
    node = node.children[index]!;
  }
  return [start, start + leafTokens(node).length];
}

export interface TreeCursor {
  path: NodePath;
  node: TreeDoc;
  depth: number;
}

/** Preorder traversal of every node with its path. */
export function* walk(doc: TreeDoc, path: NodePath = []): Generator<TreeCursor> {
  yield { path, node: doc, depth: path.length };
  for (let i = 0; i < doc.children.length; i++) {
    yield* walk(doc.children[i]!, [...path, i]);
  }
}

/**
 * One keyboard step from `path`: up = parent, down = first child,
 * left/right = siblings. Null when the move falls off the tree.
 */
export function navigate(doc: TreeDoc, path: NodePath, dir: NavDirection): NodePath | null {
  const node = nodeAt(doc, path);
  if (node === null) return null;
  if (dir === "up") return path.length > 0 ? path.slice(0, -1) : null;
  if (dir === "down") return node.token === null ? [...path, 0] : null;
  if (path.length === 0) return null;
  const parent = nodeAt(doc, path.slice(0, -1))!;
  const here = path[path.length - 1]!;
  const there = dir === "left" ? here - 1 : here + 1;
  if (there < 0 || there >= parent.children.length) return null;
  return [...path.slice(0, -1), there];
}

export function pathKey(path: NodePath): string {
  return path.join(".");
}

export function pathFromKey(key: string): NodePath {
  return key === "" ? [] : key.split(".").map(Number);
}
