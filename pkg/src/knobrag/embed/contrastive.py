"""InfoNCE over squared distances, training-pair mining and curriculum SGD."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from knobrag.corpus import DebugQuestion, Document
from knobrag.embed.align import MANUAL, QUESTION, AlignmentNetwork, source_of
from knobrag.embed.vectors import as_array, cosine_matrix
from knobrag.errors import DimensionMismatch, EmptyTriples, NonpositiveTau, NoPositiveAvailable

DEFAULT_TAU = 0.1
DEFAULT_LR = 1e-2
CANDIDATE_POOL = 50

QUESTION_MANUAL = "question-manual"
QUESTION_QUESTION = "question-question"
MANUAL_MANUAL = "manual-manual"
# (positive kind, negative kind) per pair type
PAIR_TYPES = {
    MANUAL_MANUAL: (MANUAL, MANUAL),
    QUESTION_QUESTION: (QUESTION, QUESTION),
    QUESTION_MANUAL: (QUESTION, MANUAL),
}


def _check(anchor, positive, negatives, tau):
    if not tau > 0:
        raise NonpositiveTau(f"tau must be positive, got {tau}")
    a = as_array(anchor)
    p = as_array(positive)
    negs = np.atleast_2d(np.asarray([as_array(n) for n in negatives], dtype=np.float64))
    if negs.size == 0:
        raise ValueError("need at least one negative")
    if p.shape != a.shape or negs.shape[1] != a.shape[0]:
        raise DimensionMismatch("anchor, positive and negatives must share one dimension")
    return a, p, negs


def _scores(a, others, tau):
    diff = a[None, :] - others
    return -np.einsum("ij,ij->i", diff, diff) / tau, diff


def _nce(s):
    """-log softmax(s)[0], summed over gaps to the positive so tiny losses keep precision."""
    gaps = s[1:] - s[0]
    top = gaps.max()
    if top <= 0:
        return float(np.log1p(np.exp(gaps).sum()))
    return float(top + np.log(np.exp(-top) + np.exp(gaps - top).sum()))


def info_nce_loss(anchor, positive, negatives, tau: float = DEFAULT_TAU) -> float:
    """-log softmax of the positive's score; score(a, b) = -||a - b||^2 / tau.

    The positive is part of the normalizer, so the loss is never negative.
    """
    a, p, negs = _check(anchor, positive, negatives, tau)
    s, _ = _scores(a, np.vstack([p, negs]), tau)
    return _nce(s)


@dataclass
class InfoNCEGradient:
    loss: float
    anchor: np.ndarray
    positive: np.ndarray
    negatives: np.ndarray


def info_nce_gradient(anchor, positive, negatives, tau: float = DEFAULT_TAU) -> InfoNCEGradient:
    """Loss plus analytic gradients w.r.t. anchor, positive and each negative."""
    a, p, negs = _check(anchor, positive, negatives, tau)
    s, diff = _scores(a, np.vstack([p, negs]), tau)
    m = s.max()
    g = np.exp(s - m)
    g /= g.sum()
    g[0] = -g[1:].sum()          # p_0 - 1 without cancellation
    # ds_i/da = -2 (a - b_i) / tau, ds_i/db_i = +2 (a - b_i) / tau
    per = (2.0 / tau) * g[:, None] * diff
    return InfoNCEGradient(
        loss=_nce(s),
        anchor=-per.sum(axis=0),
        positive=per[0],
        negatives=per[1:],
    )


# ---------------------------------------------------------------------------
# pair mining


@dataclass(frozen=True)
class TrainingTriple:
    anchor_id: str
    anchor: np.ndarray
    positive_id: str
    positive: np.ndarray
    positive_source: str
    negative_ids: tuple[str, ...]
    negatives: np.ndarray
    negative_source: str
    pair_type: str


@dataclass
class MinedPairs:
    triples: list[TrainingTriple] = field(default_factory=list)
    skipped: list[NoPositiveAvailable] = field(default_factory=list)

    def __iter__(self):
        return iter(self.triples)

    def __len__(self):
        return len(self.triples)

    def __getitem__(self, i):
        return self.triples[i]

    def by_type(self) -> dict[str, int]:
        out = {t: 0 for t in PAIR_TYPES}
        for t in self.triples:
            out[t.pair_type] += 1
        return out


def mine_training_pairs(questions: Sequence[DebugQuestion], docs: Sequence[Document], per_anchor: int,
                        seed: int = 0, *, question_vectors: np.ndarray, doc_vectors: np.ndarray,
                        pool: int = CANDIDATE_POOL) -> MinedPairs:
    """Build triples for every anchor question from its base-similarity pool.

    Within the ``pool`` most similar documents, a positive shares at least one
    gold knob with the anchor and a negative shares none. For each pair type
    the ``c = min(per_anchor, #positives, #negatives)`` most similar positives
    each get a triple with the ``c`` most similar negatives, so positives and
    negatives are equal in number. The seed only breaks exact similarity ties.
    """
    q_vecs = np.asarray(question_vectors, dtype=np.float64)
    d_vecs = np.asarray(doc_vectors, dtype=np.float64)
    if len(q_vecs) != len(questions) or len(d_vecs) != len(docs):
        raise ValueError("one vector per question and per document is required")
    out = MinedPairs()
    if per_anchor <= 0 or not len(questions):
        return out
    if len(docs) and q_vecs.shape[1] != d_vecs.shape[1]:
        raise DimensionMismatch("question and document vectors differ in dimension")
    rng = np.random.default_rng(seed)
    tiebreak = rng.permutation(len(docs)) if len(docs) else np.zeros(0, dtype=int)
    sims = cosine_matrix(q_vecs, d_vecs) if len(docs) else np.zeros((len(questions), 0))
    doc_sources = [source_of(d.kind) for d in docs]
    for qi, q in enumerate(questions):
        order = np.lexsort((tiebreak, -sims[qi]))
        cands = [j for j in order if docs[j].id != q.id][:pool]
        pos = {QUESTION: [], MANUAL: []}
        neg = {QUESTION: [], MANUAL: []}
        for j in cands:
            bucket = pos if docs[j].knobs & q.gold_knobs else neg
            bucket[doc_sources[j]].append(j)
        if not pos[QUESTION] and not pos[MANUAL]:
            out.skipped.append(NoPositiveAvailable(f"{q.id}: no document in the candidate pool shares a gold knob"))
            continue
        for ptype, (pk, nk) in PAIR_TYPES.items():
            c = min(per_anchor, len(pos[pk]), len(neg[nk]))
            if c == 0:
                continue
            negs = neg[nk][:c]
            for j in pos[pk][:c]:
                out.triples.append(TrainingTriple(
                    anchor_id=q.id, anchor=q_vecs[qi], positive_id=docs[j].id, positive=d_vecs[j],
                    positive_source=pk, negative_ids=tuple(docs[k].id for k in negs),
                    negatives=d_vecs[negs], negative_source=nk, pair_type=ptype,
                ))
    return out


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class LossPoint:
    phase: str
    epoch: int
    mean_loss: float


@dataclass
class TrainingRun:
    net: AlignmentNetwork
    trace: list[LossPoint]

    def phase_means(self) -> dict[str, list[float]]:
        out: dict[str, list[float]] = {}
        for p in self.trace:
            out.setdefault(p.phase, []).append(p.mean_loss)
        return out


def curriculum_phases(triples: Sequence[TrainingTriple]) -> list[tuple[str, list[TrainingTriple]]]:
    """Manual-manual triples first, then every other pair type together."""
    first = [t for t in triples if t.pair_type == MANUAL_MANUAL]
    rest = [t for t in triples if t.pair_type != MANUAL_MANUAL]
    return [(name, ts) for name, ts in ((MANUAL_MANUAL, first), ("mixed", rest)) if ts]


def _aligned(net: AlignmentNetwork, t: TrainingTriple):
    a = net.stacks[QUESTION].forward(t.anchor[None, :])[0]
    p = net.stacks[t.positive_source].forward(t.positive[None, :])[0]
    n = net.stacks[t.negative_source].forward(t.negatives)
    return a, p, n


def triple_loss(net: AlignmentNetwork, t: TrainingTriple, tau: float) -> float:
    return info_nce_loss(*_aligned(net, t), tau)


def triple_gradients(net: AlignmentNetwork, t: TrainingTriple, tau: float):
    """Loss and per-source parameter gradients for one triple."""
    g = info_nce_gradient(*_aligned(net, t), tau)
    grads = {}

    def add(source, x, gy):
        _, layer_grads = net.stacks[source].backward(x, gy)
        if source in grads:
            grads[source] = [(w0 + w1, b0 + b1) for (w0, b0), (w1, b1) in zip(grads[source], layer_grads)]
        else:
            grads[source] = layer_grads

    add(QUESTION, t.anchor[None, :], g.anchor[None, :])
    add(t.positive_source, t.positive[None, :], g.positive[None, :])
    add(t.negative_source, t.negatives, g.negatives)
    return g.loss, grads


def sgd_step(net: AlignmentNetwork, grads, lr: float) -> None:
    for source, layer_grads in grads.items():
        for layer, (dW, db) in zip(net.stacks[source].layers, layer_grads):
            layer.W -= lr * dW
            layer.b -= lr * db


def train_alignment(net: AlignmentNetwork, triples: Sequence[TrainingTriple], epochs: int,
                    learning_rate: float = DEFAULT_LR, tau: float = DEFAULT_TAU, seed: int = 0) -> TrainingRun:
    """Plain per-triple SGD over the curriculum; the input net is left untouched.

    Each phase runs ``epochs`` passes, shuffled by ``random.Random(seed)``.
    The trace records the mean training loss of every (phase, epoch).
    """
    triples = list(triples)
    if not triples:
        raise EmptyTriples("no training triples")
    if not tau > 0:
        raise NonpositiveTau(f"tau must be positive, got {tau}")
    trained = net.copy()
    rng = random.Random(seed)
    trace = []
    for phase, items in curriculum_phases(triples):
        for epoch in range(epochs):
            order = list(range(len(items)))
            rng.shuffle(order)
            total = 0.0
            for i in order:
                loss, grads = triple_gradients(trained, items[i], tau)
                total += loss
                sgd_step(trained, grads, learning_rate)
            trace.append(LossPoint(phase, epoch, total / len(items)))
    return TrainingRun(trained, trace)


def mean_loss(net: AlignmentNetwork, triples: Sequence[TrainingTriple], tau: float = DEFAULT_TAU) -> float:
    if not triples:
        raise EmptyTriples("no triples to evaluate")
    return float(np.mean([triple_loss(net, t, tau) for t in triples]))
