"""Evaluation suite: accuracy, tag-distribution distance, confusion, calibration.

All metrics are pure functions.  Gold labels come from the corpus; boundary
tokens (language-id markers) never count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from altag.corpus import AnnotationStore, Corpus, TypeIndex, gold_tag_distribution
from altag.strategies import SelectionBatch


@dataclass
class IterationSnapshot:
    """Test-set predictions and bookkeeping for one loop iteration."""

    iteration: int
    predictions: list[list[int]]
    annotated_positions: set = field(default_factory=set)
    accuracy: float = 0.0


def _check_alignment(predictions: list[list[int]], corpus: Corpus) -> None:
    if len(predictions) != len(corpus.sentences):
        raise ValueError(
            f"got predictions for {len(predictions)} sentences, "
            f"corpus has {len(corpus.sentences)}")
    for tags, sent in zip(predictions, corpus.sentences):
        if len(tags) != len(sent):
            raise ValueError(f"prediction length mismatch for sentence {sent.id!r}")


def token_accuracy(predictions: list[list[int]], corpus: Corpus) -> float:
    """Fraction of correctly tagged non-boundary tokens."""
    _check_alignment(predictions, corpus)
    correct = total = 0
    for tags, sent in zip(predictions, corpus.sentences):
        for tag, tok in zip(tags, sent.tokens):
            if tok.is_boundary or tok.gold_tag is None:
                continue
            total += 1
            correct += int(tag == tok.gold_tag)
    return correct / total if total else 0.0


def wasserstein_type_distance(type_key: str, store: AnnotationStore,
                              gold_corpus: Corpus,
                              index: TypeIndex | None = None) -> float:
    """Distance between a type's annotated and gold tag distributions.

    Sums absolute per-tag differences over the tags present in the type's
    annotations (the annotated support).
    """
    counts = store.tags_for_type(type_key, gold_corpus)
    if not counts:
        raise ValueError(f"type {type_key!r} has no annotations")
    total = sum(counts.values())
    gold = gold_tag_distribution(type_key, gold_corpus, index)
    return float(sum(
        abs(n / total - gold.get(tag, 0.0)) for tag, n in sorted(counts.items())
    ))


def corpus_wasserstein(store: AnnotationStore, gold_corpus: Corpus,
                       index: TypeIndex | None = None) -> float:
    """Unweighted mean of per-type distances over all annotated types."""
    types = store.annotated_types(gold_corpus)
    if not types:
        return 0.0
    index = index if index is not None else TypeIndex(gold_corpus)
    return float(np.mean([
        wasserstein_type_distance(z, store, gold_corpus, index) for z in types
    ]))


def confusion_score(snap_prev: IterationSnapshot, snap_curr: IterationSnapshot,
                    corpus: Corpus) -> float:
    """Share of previously-correct test tokens flipped to incorrect."""
    _check_alignment(snap_prev.predictions, corpus)
    _check_alignment(snap_curr.predictions, corpus)
    prev_correct = flipped = 0
    for prev_tags, curr_tags, sent in zip(snap_prev.predictions,
                                          snap_curr.predictions, corpus.sentences):
        for prev, curr, tok in zip(prev_tags, curr_tags, sent.tokens):
            if tok.is_boundary or tok.gold_tag is None:
                continue
            if prev == tok.gold_tag:
                prev_correct += 1
                if curr != tok.gold_tag:
                    flipped += 1
    return flipped / prev_correct if prev_correct else 0.0


def sce(marginals: list[np.ndarray], corpus: Corpus, num_bins: int = 10) -> float:
    """Static calibration error.

    For every output tag, token predictions are sorted by that tag's
    probability and split into equal-count bins (first 10% in bin 1, and so
    on); each bin contributes |mean confidence - empirical frequency|,
    count-weighted over all (tag, bin) cells.
    """
    _check_alignment(marginals, corpus)
    probs: list[np.ndarray] = []
    gold: list[int] = []
    for table, sent in zip(marginals, corpus.sentences):
        for row, tok in zip(table, sent.tokens):
            if tok.is_boundary or tok.gold_tag is None:
                continue
            probs.append(np.asarray(row, dtype=np.float64))
            gold.append(tok.gold_tag)
    if not probs:
        return 0.0
    mat = np.stack(probs)          # N x K
    gold_arr = np.array(gold)      # N
    n, k = mat.shape
    bins = min(num_bins, n)
    total = 0.0
    for tag in range(k):
        conf = mat[:, tag]
        hit = (gold_arr == tag).astype(np.float64)
        order = np.argsort(conf, kind="stable")
        for chunk in np.array_split(order, bins):
            if len(chunk) == 0:
                continue
            gap = abs(conf[chunk].mean() - hit[chunk].mean())
            total += (len(chunk) / (n * k)) * gap
    return float(total)


def neighborhood_purity(rep: np.ndarray, occurrence_reps: np.ndarray,
                        gold_tags, predicted_tags, b: int = 100) -> float:
    """Misclassified share of the b occurrences nearest a representative.

    Distances are unweighted Euclidean in representation space; fewer than b
    occurrences means all of them count.
    """
    reps = np.asarray(occurrence_reps, dtype=np.float64)
    gold_arr = np.asarray(gold_tags)
    pred_arr = np.asarray(predicted_tags)
    distances = np.linalg.norm(reps - np.asarray(rep, dtype=np.float64), axis=1)
    nearest = np.argsort(distances, kind="stable")[: min(b, len(distances))]
    return float((pred_arr[nearest] != gold_arr[nearest]).mean())


def batch_purity(batch: SelectionBatch, states: list[np.ndarray], corpus: Corpus,
                 predictions: list[list[int]], pool_postings: dict,
                 b: int = 100) -> dict:
    """Mean/median purity over a batch's selected types."""
    values = []
    for item in batch:
        occs = pool_postings.get(item.type_key, [])
        if not occs:
            continue
        reps = np.stack([states[si][ti] for si, ti in occs])
        gold = [corpus.token(si, ti).gold_tag for si, ti in occs]
        pred = [predictions[si][ti] for si, ti in occs]
        si, ti = item.position
        values.append(neighborhood_purity(states[si][ti], reps, gold, pred, b))
    if not values:
        return {"mean": 0.0, "median": 0.0, "per_type": []}
    return {"mean": float(np.mean(values)), "median": float(np.median(values)),
            "per_type": values}


def oracle_overlap(batch_a: SelectionBatch, batch_b: SelectionBatch) -> float:
    """Fraction of shared (type, confusing-tag) pairs between two batches."""
    if not batch_a:
        return 0.0
    pairs_a = {(i.type_key, i.confusing_tag) for i in batch_a}
    pairs_b = {(i.type_key, i.confusing_tag) for i in batch_b}
    return len(pairs_a & pairs_b) / len(batch_a)


def syncretism_rate(batch: SelectionBatch, gold_corpus: Corpus,
                    index: TypeIndex | None = None) -> float:
    """Share of batch types bearing two or more distinct gold tags in the corpus."""
    if not batch:
        return 0.0
    index = index if index is not None else TypeIndex(gold_corpus)
    syncretic = 0
    for item in batch:
        tags = {gold_corpus.token(si, ti).gold_tag
                for si, ti in index.occurrences(item.type_key)}
        tags.discard(None)
        if len(tags) >= 2:
            syncretic += 1
    return syncretic / len(batch)
