"""Penn-style bracketed constituency trees with node addressing.

Trees arrive serialized from an external parser; this module parses that
serialization, addresses nodes by child-index paths, and extracts the
text fragment a node covers. Trees are immutable after parsing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

from .errors import TreeParseError


@dataclass(frozen=True)
class Node:
    label: str
    children: tuple["Node", ...] = ()
    token: str | None = None

    @property
    def is_leaf(self) -> bool:
        return self.token is not None

    def leaves(self) -> Iterator["Node"]:
        if self.is_leaf:
            yield self
        else:
            for child in self.children:
                yield from child.leaves()

    def tokens(self) -> list[str]:
        return [leaf.token for leaf in self.leaves()]


@dataclass(frozen=True)
class NodePath:
    indices: tuple[int, ...] = ()

    @classmethod
    def of(cls, *indices: int) -> "NodePath":
        return cls(tuple(indices))

    def __iter__(self):
        return iter(self.indices)


@dataclass(frozen=True)
class ParseTree:
    root: Node
    sentence_id: str = ""

    def node_at(self, path: NodePath | Sequence[int]) -> Node:
        indices = tuple(path) if not isinstance(path, NodePath) else path.indices
        node = self.root
        for depth, index in enumerate(indices):
            if node.is_leaf or index >= len(node.children) or index < 0:
                raise TreeParseError(
                    f"dangling path {list(indices)}: no child {index} at depth {depth}", -1
                )
            node = node.children[index]
        return node

    def leaf_count(self) -> int:
        return sum(1 for _ in self.root.leaves())


_WHITESPACE = " \t\r\n"
_SPECIAL = "()" + _WHITESPACE


def _tokenize(text: str) -> Iterator[tuple[str, int]]:
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in _WHITESPACE:
            i += 1
        elif ch in "()":
            yield ch, i
            i += 1
        else:
            start = i
            while i < n and text[i] not in _SPECIAL:
                i += 1
            yield text[start:i], start


def parse_bracketed(text: str, sentence_id: str = "") -> ParseTree:
    """Parse one balanced bracketed expression into a tree.

    Labels and tokens are preserved byte-for-byte. Raises
    :class:`TreeParseError` (with a byte offset) on unbalanced brackets,
    empty constituents, or trailing garbage.
    """
    tokens = list(_tokenize(text))
    if not tokens:
        raise TreeParseError("empty input", 0)

    pos = 0

    def parse_node() -> Node:
        nonlocal pos
        tok, off = tokens[pos]
        if tok != "(":
            raise TreeParseError(f"expected '(' but found {tok!r}", off)
        pos += 1
        if pos >= len(tokens):
            raise TreeParseError("unbalanced brackets: input ends inside a constituent",
                                 len(text))
        label, label_off = tokens[pos]
        if label in "()":
            raise TreeParseError("constituent is missing its label", label_off)
        pos += 1

        children: list[Node] = []
        leaf_token: str | None = None
        while True:
            if pos >= len(tokens):
                raise TreeParseError("unbalanced brackets: missing ')'", len(text))
            tok, off = tokens[pos]
            if tok == ")":
                pos += 1
                break
            if tok == "(":
                if leaf_token is not None:
                    raise TreeParseError("constituent mixes a bare token with sub-constituents", off)
                children.append(parse_node())
            else:
                if children or leaf_token is not None:
                    raise TreeParseError("constituent mixes a bare token with sub-constituents", off)
                leaf_token = tok
                pos += 1
        if leaf_token is not None:
            return Node(label=label, token=leaf_token)
        if not children:
            raise TreeParseError(f"empty constituent {label!r}", label_off)
        return Node(label=label, children=tuple(children))

    first_tok, first_off = tokens[0]
    if first_tok != "(":
        raise TreeParseError(f"expected '(' but found {first_tok!r}", first_off)
    root = parse_node()
    if pos < len(tokens):
        tok, off = tokens[pos]
        raise TreeParseError(f"trailing garbage after tree: {tok!r}", off)
    return ParseTree(root=root, sentence_id=sentence_id)


def serialize_tree(tree: ParseTree | Node) -> str:
    """Canonical single-space bracketed form."""
    node = tree.root if isinstance(tree, ParseTree) else tree
    if node.is_leaf:
        return f"({node.label} {node.token})"
    inner = " ".join(serialize_tree(child) for child in node.children)
    return f"({node.label} {inner})"


def fragment(tree: ParseTree, path: NodePath | Sequence[int]) -> str:
    """Leaf tokens under the addressed node, in order, single-space joined."""
    return " ".join(tree.node_at(path).tokens())


def _spans(node: Node, start: int, out: dict) -> int:
    """Record each node's covered leaf span [start, end); return end."""
    if node.is_leaf:
        out[id(node)] = (start, start + 1)
        return start + 1
    cur = start
    for child in node.children:
        cur = _spans(child, cur, out)
    out[id(node)] = (start, cur)
    return cur


def smallest_covering_node(tree: ParseTree, token_range: tuple[int, int]) -> NodePath:
    """Deepest node whose leaf span contains ``[start, end)``.

    Sibling spans are disjoint, so the deepest covering node is unique.
    """
    start, end = token_range
    total = tree.leaf_count()
    if not (0 <= start < end <= total):
        raise TreeParseError(
            f"token range [{start}, {end}) out of bounds for {total} leaves", -1
        )

    spans: dict = {}
    _spans(tree.root, 0, spans)

    path: list[int] = []
    node = tree.root
    while not node.is_leaf:
        for index, child in enumerate(node.children):
            cstart, cend = spans[id(child)]
            if cstart <= start and end <= cend:
                path.append(index)
                node = child
                break
        else:
            break
    return NodePath(tuple(path))


def path_resolves(tree: ParseTree, path: NodePath | Sequence[int]) -> bool:
    try:
        tree.node_at(path)
        return True
    except TreeParseError:
        return False
