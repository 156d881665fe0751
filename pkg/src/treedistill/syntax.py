"""Bracketed constituency-tree parsing and relation-tagged macro-trees.

A question's sentence parses are wrapped under a single ``QUESTION`` root
(the macro-tree). When a macro-tree for question x is built against a paired
question y, every non-leaf node dominating at least one non-stopword token
that also occurs in y gets its label prefixed with ``REL-``, encoding the
cross-question lexical links as label marks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .corpus import Question, stopwords

REL_PREFIX = "REL-"
QUESTION_LABEL = "QUESTION"

# Raw brackets cannot appear inside bracketed expressions, so token-level
# parentheses use the conventional treebank escapes.
_BRACKET_ESCAPES = {"(": "-LRB-", ")": "-RRB-"}


class TreeParseError(ValueError):
    """Malformed bracketed input; ``offset`` is the failing character index."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class ParseTree:
    """A node: either internal (children) or a leaf (token). Never both."""

    label: str
    children: tuple["ParseTree", ...] = ()
    leaf_token: Optional[str] = None

    def __post_init__(self):
        if not self.label:
            raise ValueError("node label must be non-empty")
        if bool(self.children) == (self.leaf_token is not None):
            raise ValueError("node must have children xor a leaf token")

    @property
    def is_leaf(self) -> bool:
        return self.leaf_token is not None

    @property
    def is_preterminal(self) -> bool:
        return bool(self.children) and all(c.is_leaf for c in self.children)

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.leaf_token]
        out: list[str] = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def node_count(self) -> int:
        return 1 + sum(c.node_count() for c in self.children)


@dataclass(frozen=True)
class MacroTree:
    """All sentence trees of one question under a shared QUESTION root."""

    root: ParseTree
    rel_tagged: bool = False

    def leaves(self) -> list[str]:
        return self.root.leaves()


def escape_token(token: str) -> str:
    return "".join(_BRACKET_ESCAPES.get(ch, ch) for ch in token)


_SPECIAL = frozenset("() \t\r\n")


def _read_atom(text: str, i: int) -> tuple[str, int]:
    start = i
    while i < len(text) and text[i] not in _SPECIAL:
        i += 1
    return text[start:i], i


def _skip_ws(text: str, i: int) -> int:
    while i < len(text) and text[i].isspace():
        i += 1
    return i


def _parse_node(text: str, i: int) -> tuple[ParseTree, int]:
    if text[i] != "(":
        raise TreeParseError("expected '('", i)
    i = _skip_ws(text, i + 1)
    label, i = _read_atom(text, i)
    if not label:
        raise TreeParseError("empty node label", i)
    children: list[ParseTree] = []
    i = _skip_ws(text, i)
    while True:
        if i >= len(text):
            raise TreeParseError("unbalanced parentheses", len(text))
        if text[i] == ")":
            i += 1
            break
        if text[i] == "(":
            child, i = _parse_node(text, i)
        else:
            token, i = _read_atom(text, i)
            token = token.lower()
            child = ParseTree(label=token, leaf_token=token)
        children.append(child)
        i = _skip_ws(text, i)
    if not children:
        raise TreeParseError(f"node {label!r} has no children", i - 1)
    return ParseTree(label=label, children=tuple(children)), i


def parse_bracketed(text: str) -> list[ParseTree]:
    """Parse zero or more Penn-Treebank-style bracketed expressions.

    Labels are kept verbatim; leaf tokens are lowercased. Unbalanced input or
    an empty label raises :class:`TreeParseError` with the character offset.
    """
    trees: list[ParseTree] = []
    i = _skip_ws(text, 0)
    while i < len(text):
        if text[i] != "(":
            raise TreeParseError("expected '('", i)
        tree, i = _parse_node(text, i)
        trees.append(tree)
        i = _skip_ws(text, i)
    return trees


def serialize_tree(tree: ParseTree) -> str:
    """Canonical single-line bracket form; inverse of :func:`parse_bracketed`."""
    if tree.is_leaf:
        return tree.leaf_token
    inner = " ".join(serialize_tree(c) for c in tree.children)
    return f"({tree.label} {inner})"


def serialize_forest(trees) -> str:
    return " ".join(serialize_tree(t) for t in trees)


def flat_fallback_tree(question: Question) -> MacroTree:
    """QUESTION -> S -> one TOK preterminal per token; used when no parse exists."""
    if not question.tokens:
        raise ValueError(f"question {question.id!r} has no tokens")
    preterms = tuple(
        ParseTree(label="TOK", children=(
            ParseTree(label=escape_token(t), leaf_token=escape_token(t)),))
        for t in question.tokens
    )
    sentence = ParseTree(label="S", children=preterms)
    return MacroTree(root=ParseTree(label=QUESTION_LABEL, children=(sentence,)))


def macro_tree(question: Question, allow_flat_fallback: bool = True) -> MacroTree:
    """The unmarked macro-tree of one question."""
    if question.tree_source:
        sentences = parse_bracketed(question.tree_source)
        if not sentences:
            raise TreeParseError(f"question {question.id!r} has an empty tree source", 0)
        return MacroTree(root=ParseTree(label=QUESTION_LABEL, children=tuple(sentences)))
    if not allow_flat_fallback:
        raise ValueError(f"question {question.id!r} has no parse and the flat fallback is disabled")
    return flat_fallback_tree(question)


def _mark(node: ParseTree, other: frozenset, stop: frozenset) -> tuple[ParseTree, bool]:
    if node.is_leaf:
        hit = node.leaf_token not in stop and node.leaf_token in other
        return node, hit
    marked_children = []
    hit = False
    for child in node.children:
        new_child, child_hit = _mark(child, other, stop)
        marked_children.append(new_child)
        hit = hit or child_hit
    label = REL_PREFIX + node.label if hit else node.label
    return ParseTree(label=label, children=tuple(marked_children)), hit


def build_macro_tree(x: Question, y: Question, allow_flat_fallback: bool = True,
                     stop: Optional[frozenset] = None) -> MacroTree:
    """Macro-tree of x with REL marks against y.

    A non-leaf node is marked iff its yield contains a non-stopword token that
    also occurs (case-insensitively) among y's tokens. Marking never changes
    the tree shape or its yield.
    """
    if stop is None:
        stop = stopwords()
    base = macro_tree(x, allow_flat_fallback=allow_flat_fallback)
    other = frozenset(escape_token(t) for t in y.tokens)
    root, _ = _mark(base.root, other, stop)
    return MacroTree(root=root, rel_tagged=True)
