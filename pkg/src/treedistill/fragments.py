"""Explicit fragment enumeration for tree kernels.

These routines compute kernel values by literally enumerating every fragment
a tree contains, bagging them by canonical string, and dotting the bags. They
are exponential and only meant for small trees, where they serve as an
independent check on the dynamic programs in :mod:`treedistill.treekernel`.

Weight conventions match the DPs exactly:

* subset-tree fragments: weight lambda^(number of productions); a fragment
  expands whole productions, optionally recursing into internal children.
* partial-tree fragments: each occurrence carries lambda^(sum over fragment
  nodes of the child-subsequence span, span 1 for nodes kept childless), and
  a matched fragment pair additionally carries mu^(number of fragment nodes).
"""

from __future__ import annotations

from itertools import combinations, product

from .syntax import ParseTree


def _sst_expansions(node: ParseTree) -> list[str]:
    """Canonical strings of all subset-tree fragments rooted at ``node``."""
    options_per_child: list[list[str]] = []
    for child in node.children:
        if child.is_leaf:
            options_per_child.append([child.leaf_token])
        else:
            # a non-leaf child either stops as a bare category or expands
            options_per_child.append([child.label] + _sst_expansions(child))
    out = []
    for combo in product(*options_per_child):
        out.append(f"({node.label} " + " ".join(combo) + ")")
    return out


def sst_fragment_bag(tree: ParseTree) -> dict[str, int]:
    """Occurrence counts of every subset-tree fragment in ``tree``."""
    bag: dict[str, int] = {}

    def visit(node: ParseTree):
        if not node.is_leaf:
            for canon in _sst_expansions(node):
                bag[canon] = bag.get(canon, 0) + 1
            for child in node.children:
                visit(child)

    visit(tree)
    return bag


def sst_kernel_bruteforce(t1: ParseTree, t2: ParseTree, lambda_: float = 0.4) -> float:
    """Subset-tree kernel via fragment bags; lambda^(productions) per match."""
    bag1 = sst_fragment_bag(t1)
    bag2 = sst_fragment_bag(t2)
    total = 0.0
    for canon, c1 in bag1.items():
        c2 = bag2.get(canon)
        if c2:
            total += (lambda_ ** canon.count("(")) * c1 * c2
    return total


def _ptk_expansions(node: ParseTree, lambda_: float) -> list[tuple[str, float]]:
    """(canonical, lambda-weight) of all partial fragments rooted at ``node``."""
    label = node.leaf_token if node.is_leaf else node.label
    out = [(f"({label})", lambda_)]
    k = len(node.children)
    cached = [_ptk_expansions(c, lambda_) for c in node.children]
    for size in range(1, k + 1):
        for subseq in combinations(range(k), size):
            span = subseq[-1] - subseq[0] + 1
            for combo in product(*(cached[i] for i in subseq)):
                canon = f"({label} " + " ".join(c for c, _w in combo) + ")"
                weight = lambda_ ** span
                for _c, w in combo:
                    weight *= w
                out.append((canon, weight))
    return out


def ptk_fragment_bag(tree: ParseTree, lambda_: float) -> dict[str, float]:
    """Total lambda-weight of every partial-tree fragment in ``tree``."""
    bag: dict[str, float] = {}

    def visit(node: ParseTree):
        for canon, weight in _ptk_expansions(node, lambda_):
            bag[canon] = bag.get(canon, 0.0) + weight
        for child in node.children:
            visit(child)

    visit(tree)
    return bag


def ptk_kernel_bruteforce(t1: ParseTree, t2: ParseTree,
                          lambda_: float = 0.4, mu: float = 0.4) -> float:
    """Partial-tree kernel via fragment bags; mu^(nodes) per matched shape."""
    bag1 = ptk_fragment_bag(t1, lambda_)
    bag2 = ptk_fragment_bag(t2, lambda_)
    total = 0.0
    for canon, w1 in bag1.items():
        w2 = bag2.get(canon)
        if w2:
            total += (mu ** canon.count("(")) * w1 * w2
    return total
