"""Synthetic question-pair corpus with a planted syntactic label signal.

Each question instantiates one of several constituency templates with two
content slots: slot x (the action/attribute position) and slot y (the object
position). Every pair shares exactly one content word; a pair is positive iff
the shared word fills slot x on both sides, negative iff it fills slot y.

Consequences, by construction:

* lexical-overlap features see exactly one shared non-stopword either way,
  so stopword-filtered similarity features carry no label signal;
* untagged parse trees carry no signal either (template families are drawn
  independently of the label);
* relation-tagged macro-trees expose the label plainly: the REL marks climb
  from the shared word's slot, and the two slots sit in different structural
  positions of every template;
* token sequences with overlap flags expose the label as a per-template
  positional pattern, learnable by a sequence encoder given enough examples.

Used by the trend experiments and as a self-contained demo corpus.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import Dataset, Question, QuestionPair

# (text template, tree template) variants per family; {x}/{y} are content slots
FAMILIES: tuple[tuple[tuple[str, str], ...], ...] = (
    (
        ("how do you {x} a {y} ?",
         "(SBARQ (WHADVP (WRB how)) (SQ (VBP do) (NP (PRP you)) (VP (VB {x}) (NP (DT a) (NN {y})))) (. ?))"),
        ("how can you {x} a {y} ?",
         "(SBARQ (WHADVP (WRB how)) (SQ (MD can) (NP (PRP you)) (VP (VB {x}) (NP (DT a) (NN {y})))) (. ?))"),
    ),
    (
        ("what is the {x} of a {y} ?",
         "(SBARQ (WHNP (WP what)) (SQ (VBZ is) (NP (NP (DT the) (NN {x})) (PP (IN of) (NP (DT a) (NN {y}))))) (. ?))"),
        ("what would the {x} of a {y} be ?",
         "(SBARQ (WHNP (WP what)) (SQ (MD would) (NP (NP (DT the) (NN {x})) (PP (IN of) (NP (DT a) (NN {y})))) (VP (VB be))) (. ?))"),
    ),
    (
        ("is a {x} very {y} ?",
         "(SQ (VBZ is) (NP (DT a) (NN {x})) (ADJP (RB very) (JJ {y})) (. ?))"),
        ("can a {x} be {y} ?",
         "(SQ (MD can) (NP (DT a) (NN {x})) (VP (VB be) (ADJP (JJ {y}))) (. ?))"),
    ),
    (
        ("where can you {x} a {y} ?",
         "(SBARQ (WHADVP (WRB where)) (SQ (MD can) (NP (PRP you)) (VP (VB {x}) (NP (DT a) (NN {y})))) (. ?))"),
        ("where should you {x} a {y} ?",
         "(SBARQ (WHADVP (WRB where)) (SQ (MD should) (NP (PRP you)) (VP (VB {x}) (NP (DT a) (NN {y})))) (. ?))"),
    ),
    (
        ("why is the {x} so {y} ?",
         "(SBARQ (WHADVP (WRB why)) (SQ (VBZ is) (NP (DT the) (NN {x})) (ADJP (RB so) (JJ {y}))) (. ?))"),
        ("why would the {x} be {y} ?",
         "(SBARQ (WHADVP (WRB why)) (SQ (MD would) (NP (DT the) (NN {x})) (VP (VB be) (ADJP (JJ {y})))) (. ?))"),
    ),
    (
        ("which {x} is more {y} ?",
         "(SBARQ (WHNP (WDT which) (NN {x})) (SQ (VBZ is) (ADJP (RBR more) (JJ {y}))) (. ?))"),
        ("which {x} is the most {y} ?",
         "(SBARQ (WHNP (WDT which) (NN {x})) (SQ (VBZ is) (NP (DT the) (ADJP (RBS most) (JJ {y})))) (. ?))"),
    ),
    (
        ("does a {x} ever {y} ?",
         "(SQ (VBZ does) (NP (DT a) (NN {x})) (ADVP (RB ever)) (VP (VB {y})) (. ?))"),
        ("can a {x} ever {y} ?",
         "(SQ (MD can) (NP (DT a) (NN {x})) (ADVP (RB ever)) (VP (VB {y})) (. ?))"),
    ),
    (
        ("when should you {x} the {y} ?",
         "(SBARQ (WHADVP (WRB when)) (SQ (MD should) (NP (PRP you)) (VP (VB {x}) (NP (DT the) (NN {y})))) (. ?))"),
        ("when do you {x} the {y} ?",
         "(SBARQ (WHADVP (WRB when)) (SQ (VBP do) (NP (PRP you)) (VP (VB {x}) (NP (DT the) (NN {y})))) (. ?))"),
    ),
    (
        ("should i {x} my {y} ?",
         "(SQ (MD should) (NP (PRP i)) (VP (VB {x}) (NP (PRP$ my) (NN {y}))) (. ?))"),
        ("could i {x} my {y} ?",
         "(SQ (MD could) (NP (PRP i)) (VP (VB {x}) (NP (PRP$ my) (NN {y}))) (. ?))"),
    ),
    (
        ("who would {x} such a {y} ?",
         "(SBARQ (WHNP (WP who)) (SQ (MD would) (VP (VB {x}) (NP (PDT such) (DT a) (NN {y})))) (. ?))"),
        ("who could {x} such a {y} ?",
         "(SBARQ (WHNP (WP who)) (SQ (MD could) (VP (VB {x}) (NP (PDT such) (DT a) (NN {y})))) (. ?))"),
    ),
    (
        ("are all {x} the same {y} ?",
         "(SQ (VBP are) (NP (PDT all) (NNS {x})) (NP (DT the) (JJ same) (NN {y})) (. ?))"),
        ("were all {x} the same {y} ?",
         "(SQ (VBD were) (NP (PDT all) (NNS {x})) (NP (DT the) (JJ same) (NN {y})) (. ?))"),
    ),
    (
        ("what if the {x} has no {y} ?",
         "(SBARQ (WHNP (WP what)) (SBAR (IN if) (S (NP (DT the) (NN {x})) (VP (VBZ has) (NP (DT no) (NN {y}))))) (. ?))"),
        ("what if a {x} had no {y} ?",
         "(SBARQ (WHNP (WP what)) (SBAR (IN if) (S (NP (DT a) (NN {x})) (VP (VBD had) (NP (DT no) (NN {y}))))) (. ?))"),
    ),
)

CONTENT_WORDS = (
    "acorn", "anchor", "bakery", "barrel", "beacon", "bridge", "cactus",
    "candle", "captain", "dolphin", "drum", "ember", "engine", "falcon",
    "fiddle", "garden", "glacier", "goblet", "hammer", "harbor", "helmet",
    "igloo", "island", "jacket", "jewel", "jungle", "kettle", "koala",
    "ladder", "lantern", "lighthouse", "magnet", "marble", "meadow",
    "mirror", "needle", "nest", "nugget", "oasis", "orchard", "otter",
    "parrot", "pencil", "pillow", "quarry", "quilt", "ribbon", "rocket",
    "saddle", "shovel", "teapot", "tunnel", "umbrella", "velvet", "wagon",
    "walnut", "yogurt", "zephyr",
)


@dataclass(frozen=True)
class SyntheticCorpus:
    train: Dataset
    dev: Dataset
    test: Dataset
    unlabeled: Dataset
    unlabeled_truth: tuple[int, ...]


class _Maker:
    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.counter = 0

    def _question(self, fill_x: str, fill_y: str) -> Question:
        text_tpl, tree_tpl = self.rng.choice(self.rng.choice(FAMILIES))
        self.counter += 1
        return Question.make(
            f"s{self.counter}",
            text_tpl.format(x=fill_x, y=fill_y),
            tree_source=tree_tpl.format(x=fill_x, y=fill_y),
        )

    def pair(self, positive: bool) -> QuestionPair:
        shared, w1, w2 = self.rng.sample(CONTENT_WORDS, 3)
        if positive:
            q1 = self._question(shared, w1)
            q2 = self._question(shared, w2)
        else:
            q1 = self._question(w1, shared)
            q2 = self._question(w2, shared)
        return QuestionPair(q1=q1, q2=q2)

    def split(self, name: str, size: int, split: str, positive_rate: float,
              labeled: bool) -> tuple[Dataset, tuple[int, ...]]:
        pairs = []
        truth = []
        for _ in range(size):
            positive = self.rng.random() < positive_rate
            pair = self.pair(positive)
            truth.append(int(positive))
            if labeled:
                pair = QuestionPair(q1=pair.q1, q2=pair.q2, label=int(positive))
            pairs.append(pair)
        return Dataset(name=name, pairs=tuple(pairs), split=split), tuple(truth)


def make_corpus(seed: int = 0, n_train: int = 500, n_dev: int = 500, n_test: int = 500,
                n_unlabeled: int = 5000, positive_rate: float = 0.5) -> SyntheticCorpus:
    """Generate train/dev/test/unlabeled splits plus the hidden unlabeled truth."""
    maker = _Maker(seed)
    train, _ = maker.split("synth-train", n_train, "train", positive_rate, labeled=True)
    dev, _ = maker.split("synth-dev", n_dev, "dev", positive_rate, labeled=True)
    test, _ = maker.split("synth-test", n_test, "test", positive_rate, labeled=True)
    unlabeled, truth = maker.split("synth-unlabeled", n_unlabeled, "unlabeled",
                                   positive_rate, labeled=False)
    return SyntheticCorpus(train=train, dev=dev, test=test,
                           unlabeled=unlabeled, unlabeled_truth=truth)
