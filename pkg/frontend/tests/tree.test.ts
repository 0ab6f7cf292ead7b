import { describe, expect, it } from "vitest";

import {
  fragment,
  isWellFormed,
  leafSpan,
  leafTokens,
  navigate,
  nodeAt,
  pathFromKey,
  pathKey,
  walk,
} from "../src/tree.js";
import type { TreeDoc } from "../src/types.js";
import { TREE, leaf, node } from "./helpers.js";

describe("isWellFormed", () => {
  it("accepts the fixture tree and single leaves", () => {
    expect(isWellFormed(TREE)).toBe(true);
    expect(isWellFormed(leaf("NN", "dog"))).toBe(true);
  });

  it("rejects structural violations", () => {
    expect(isWellFormed(null)).toBe(false);
    expect(isWellFormed("S")).toBe(false);
    expect(isWellFormed({ label: "", token: "x", children: [] })).toBe(false);
    expect(isWellFormed({ label: "S", token: null, children: [] })).toBe(false); // interior, no children
    expect(isWellFormed({ label: "S", children: [] })).toBe(false); // leaf without token
    expect(
      isWellFormed({ label: "X", token: "x", children: [leaf("Y", "y")] }),
    ).toBe(false); // token and children at once
    expect(isWellFormed({ label: "S", token: null, children: [null] })).toBe(false);
  });

  it("caps recursion depth instead of overflowing", () => {
    let doc: TreeDoc = leaf("X", "x");
    for (let i = 0; i < 200; i++) doc = node("N", doc);
    expect(isWellFormed(doc)).toBe(false);
  });
});

describe("fragment and spans", () => {
  it("joins the leaf tokens under the addressed node", () => {
    expect(fragment(TREE, [])).toBe("the dog eats");
    expect(fragment(TREE, [0])).toBe("the dog");
    expect(fragment(TREE, [1])).toBe("eats");
    expect(fragment(TREE, [0, 1])).toBe("dog");
    expect(fragment(TREE, [5])).toBeNull();
  });

  it("maps nodes onto leaf index ranges", () => {
    expect(leafSpan(TREE, [])).toEqual([0, 3]);
    expect(leafSpan(TREE, [0])).toEqual([0, 2]);
    expect(leafSpan(TREE, [0, 1])).toEqual([1, 2]);
    expect(leafSpan(TREE, [1])).toEqual([2, 3]);
    expect(leafSpan(TREE, [1, 0, 0])).toBeNull();
  });

  it("agrees with fragment on every node of the tree", () => {
    for (const cursor of walk(TREE)) {
      const [start, end] = leafSpan(TREE, cursor.path)!;
      expect(leafTokens(TREE).slice(start, end).join(" ")).toBe(
        fragment(TREE, cursor.path),
      );
    }
  });
});

describe("walk", () => {
  it("visits every node in preorder with its path", () => {
    const paths = [...walk(TREE)].map((c) => pathKey(c.path));
    expect(paths).toEqual(["", "0", "0.0", "0.1", "1", "1.0"]);
  });
});

describe("navigate", () => {
  it("moves between parents, children, and siblings", () => {
    expect(navigate(TREE, [], "down")).toEqual([0]);
    expect(navigate(TREE, [0], "right")).toEqual([1]);
    expect(navigate(TREE, [1], "left")).toEqual([0]);
    expect(navigate(TREE, [1], "down")).toEqual([1, 0]);
    expect(navigate(TREE, [1, 0], "up")).toEqual([1]);
  });

  it("returns null when the move falls off the tree", () => {
    expect(navigate(TREE, [], "up")).toBeNull();
    expect(navigate(TREE, [], "left")).toBeNull();
    expect(navigate(TREE, [0], "left")).toBeNull();
    expect(navigate(TREE, [1], "right")).toBeNull();
    expect(navigate(TREE, [1, 0], "down")).toBeNull(); // leaf
    expect(navigate(TREE, [9], "up")).toBeNull(); // dangling path
  });
});

describe("path keys", () => {
  it("round-trips paths including the root", () => {
    for (const path of [[], [0], [1, 0], [2, 11, 0]]) {
      expect(pathFromKey(pathKey(path))).toEqual(path);
    }
  });

  it("addresses the same node as the path", () => {
    expect(nodeAt(TREE, pathFromKey("0.1"))?.token).toBe("dog");
  });
});
