"""Data-selection strategies: random, uncertainty, committee, confusion-reducing.

All scoring aggregates per word type over the unannotated candidate pool.
Ranking ties break deterministically by (score desc, pool frequency desc,
type key asc).  Instance choices break distance/score ties by corpus
position, so every strategy is a pure function of its inputs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from altag.corpus import UPOS, AnnotationStore, Corpus, TypeIndex

LOG_EPS = 1e-12

STRATEGIES = ("rand", "uns", "qbc", "cral", "uns-oracle", "qbc-oracle", "cral-oracle")
ORACLE_STRATEGIES = ("uns-oracle", "qbc-oracle", "cral-oracle")


class CandidatePool:
    """Unannotated, non-boundary token occurrences grouped by word type."""

    def __init__(self, index: TypeIndex, store: AnnotationStore):
        annotated = store.positions()
        self.postings: dict[str, list[tuple[int, int]]] = {}
        for z, occs in index.postings.items():
            remaining = [occ for occ in occs if occ not in annotated]
            if remaining:
                self.postings[z] = remaining

    def __len__(self) -> int:
        return sum(len(v) for v in self.postings.values())

    def types(self) -> list[str]:
        return list(self.postings)

    def occurrences(self, z: str) -> list[tuple[int, int]]:
        return self.postings.get(z, [])

    def frequency(self, z: str) -> int:
        return len(self.postings.get(z, ()))


@dataclass(frozen=True)
class SelectionItem:
    type_key: str
    position: tuple[int, int]
    strategy: str
    score: float
    confusing_tag: int | None = None
    iteration: int = 0


SelectionBatch = list[SelectionItem]


def batch_log_records(batch: SelectionBatch, corpus: Corpus) -> list[dict]:
    """JSON-ready selection log rows, one per batch entry."""
    return [
        {
            "iteration": item.iteration,
            "strategy": item.strategy,
            "type": item.type_key,
            "confusing_tag": (UPOS.symbol(item.confusing_tag)
                              if item.confusing_tag is not None else None),
            "sentence_id": corpus.sentences[item.position[0]].id,
            "token_index": item.position[1],
            "score": item.score,
        }
        for item in batch
    ]


# ------------------------------------------------------------------------- #
# type-level scores


def token_entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats with the 0 log 0 = 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())


def score_uns(marginals: list[np.ndarray], pool: CandidatePool) -> dict[str, float]:
    """Aggregate token entropy per type over the pool."""
    scores: dict[str, float] = {}
    for z, occs in pool.postings.items():
        scores[z] = sum(token_entropy(marginals[si][ti]) for si, ti in occs)
    return scores


def token_disagreement(votes: list[int]) -> int:
    """Committee size minus the plurality vote count."""
    counts: dict[int, int] = {}
    for v in votes:
        counts[v] = counts.get(v, 0) + 1
    return len(votes) - max(counts.values())


def score_qbc(committee: list[list[list[int]]],
              pool: CandidatePool) -> dict[str, float]:
    """Aggregate committee disagreement per type over the pool.

    ``committee`` holds one prediction table per member: a list of per-sentence
    tag sequences aligned with the pool's corpus.
    """
    if len(committee) < 2:
        raise ValueError("a committee needs at least two members")
    scores: dict[str, float] = {}
    for z, occs in pool.postings.items():
        total = 0
        for si, ti in occs:
            total += token_disagreement([member[si][ti] for member in committee])
        scores[z] = float(total)
    return scores


def ranked_types(scores: dict[str, float], pool: CandidatePool) -> list[str]:
    return sorted(scores, key=lambda z: (-scores[z], -pool.frequency(z), z))


def top_b(scores: dict[str, float], pool: CandidatePool, b: int) -> list[str]:
    """The b highest-scoring types (all of them when b exceeds the table)."""
    if b < 1:
        raise ValueError("b must be >= 1")
    return ranked_types(scores, pool)[:b]


# ------------------------------------------------------------------------- #
# model-only strategies


def select_random(pool: CandidatePool, b: int, seed: int,
                  iteration: int = 0) -> SelectionBatch:
    """b distinct types uniformly without replacement, one occurrence each."""
    rng = random.Random(seed)
    types = sorted(pool.postings)
    chosen = rng.sample(types, min(b, len(types)))
    batch = []
    for z in chosen:
        occ = rng.choice(pool.postings[z])
        batch.append(SelectionItem(type_key=z, position=occ, strategy="rand",
                                   score=0.0, iteration=iteration))
    return batch


def select_uns(marginals: list[np.ndarray], pool: CandidatePool, b: int,
               iteration: int = 0) -> SelectionBatch:
    """Top-entropy types; within a type, the highest-entropy occurrence."""
    scores = score_uns(marginals, pool)
    batch = []
    for z in top_b(scores, pool, b):
        occs = pool.postings[z]
        ent = [token_entropy(marginals[si][ti]) for si, ti in occs]
        occ = occs[int(np.argmax(ent))]
        batch.append(SelectionItem(type_key=z, position=occ, strategy="uns",
                                   score=scores[z], iteration=iteration))
    return batch


def select_qbc(committee: list[list[list[int]]], pool: CandidatePool, b: int,
               iteration: int = 0) -> SelectionBatch:
    """Top-disagreement types; within a type, the most-disputed occurrence."""
    scores = score_qbc(committee, pool)
    batch = []
    for z in top_b(scores, pool, b):
        occs = pool.postings[z]
        dis = [token_disagreement([m[si][ti] for m in committee]) for si, ti in occs]
        occ = occs[int(np.argmax(dis))]
        batch.append(SelectionItem(type_key=z, position=occ, strategy="qbc",
                                   score=scores[z], iteration=iteration))
    return batch


def _runner_up(p: np.ndarray, top: int) -> int:
    masked = p.copy()
    masked[top] = -np.inf
    return int(np.argmax(masked))


def cral_select(marginals: list[np.ndarray], states: list[np.ndarray],
                pool: CandidatePool, b: int, iteration: int = 0) -> SelectionBatch:
    """Confusion-reducing selection.

    Accumulates per-type confusion mass (1 - max-tag probability), counts each
    token's runner-up tag, ranks types, and for each picked type annotates the
    occurrence whose confidence-weighted representation lies nearest the
    centroid of the type's weighted representation set.
    """
    num_tags = marginals[0].shape[1] if marginals else len(UPOS)
    if num_tags < 2:
        raise ValueError("confusion scoring needs at least two tags")
    scores: dict[str, float] = {}
    confusion: dict[str, np.ndarray] = {}
    for z, occs in pool.postings.items():
        acc = 0.0
        counts = np.zeros(num_tags, dtype=np.int64)
        for si, ti in occs:
            p = marginals[si][ti]
            top = int(np.argmax(p))
            acc += 1.0 - float(p[top])
            counts[_runner_up(p, top)] += 1
        scores[z] = acc
        confusion[z] = counts

    batch: SelectionBatch = []
    for z in ranked_types(scores, pool):
        if len(batch) >= b:
            break
        occs = pool.postings[z]
        if not occs:  # defensive: replaced by the next-ranked type
            continue
        j_k = int(np.argmax(confusion[z]))
        weighted = np.stack([
            float(marginals[si][ti][j_k]) * states[si][ti] for si, ti in occs
        ])
        centroid = weighted.mean(axis=0)
        distances = np.linalg.norm(weighted - centroid, axis=1)
        occ = occs[int(np.argmin(distances))]
        batch.append(SelectionItem(type_key=z, position=occ, strategy="cral",
                                   score=scores[z], confusing_tag=j_k,
                                   iteration=iteration))
    return batch


# ------------------------------------------------------------------------- #
# oracle variants (may read gold labels)


def _gold_tag(corpus: Corpus, si: int, ti: int) -> int:
    tag = corpus.token(si, ti).gold_tag
    if tag is None:
        raise ValueError(f"oracle selection needs gold tags; ({si}, {ti}) has none")
    return tag


def select_uns_oracle(marginals: list[np.ndarray], corpus: Corpus,
                      pool: CandidatePool, b: int,
                      iteration: int = 0) -> SelectionBatch:
    """Types with the highest total negative log-likelihood of their true labels."""
    scores: dict[str, float] = {}
    worst: dict[str, tuple[float, tuple[int, int]]] = {}
    for z, occs in pool.postings.items():
        total = 0.0
        for si, ti in occs:
            p_true = float(marginals[si][ti][_gold_tag(corpus, si, ti)])
            nll = -np.log(max(p_true, LOG_EPS))
            total += nll
            if z not in worst or nll > worst[z][0]:
                worst[z] = (nll, (si, ti))
        scores[z] = total
    return [
        SelectionItem(type_key=z, position=worst[z][1], strategy="uns-oracle",
                      score=scores[z], iteration=iteration)
        for z in top_b(scores, pool, b)
    ]


def select_qbc_oracle(predictions: list[list[int]], corpus: Corpus,
                      pool: CandidatePool, b: int,
                      iteration: int = 0) -> SelectionBatch:
    """Types with the most incorrect predictions; first wrong occurrence each."""
    scores: dict[str, float] = {}
    first_wrong: dict[str, tuple[int, int]] = {}
    for z, occs in pool.postings.items():
        wrong = 0
        for si, ti in occs:
            if predictions[si][ti] != _gold_tag(corpus, si, ti):
                wrong += 1
                first_wrong.setdefault(z, (si, ti))
        scores[z] = float(wrong)
    return [
        SelectionItem(type_key=z, position=first_wrong.get(z, pool.postings[z][0]),
                      strategy="qbc-oracle", score=scores[z], iteration=iteration)
        for z in top_b(scores, pool, b)
    ]


def select_cral_oracle(predictions: list[list[int]], corpus: Corpus,
                       states: list[np.ndarray], pool: CandidatePool, b: int,
                       iteration: int = 0) -> SelectionBatch:
    """Oracle confusion reduction.

    Ranks types by error count (error-free types are excluded), takes the gold
    tag most often involved in errors as the confusing tag, and annotates the
    erroneous occurrence of that tag nearest the centroid of the error
    subset's (unweighted) representations.
    """
    scores: dict[str, float] = {}
    errors: dict[str, list[tuple[int, int, int]]] = {}
    for z, occs in pool.postings.items():
        errs = []
        for si, ti in occs:
            gold = _gold_tag(corpus, si, ti)
            if predictions[si][ti] != gold:
                errs.append((si, ti, gold))
        if errs:
            scores[z] = float(len(errs))
            errors[z] = errs

    batch: SelectionBatch = []
    for z in ranked_types(scores, pool):
        if len(batch) >= b:
            break
        errs = errors[z]
        tag_counts = np.zeros(len(UPOS), dtype=np.int64)
        for _, _, gold in errs:
            tag_counts[gold] += 1
        j_k = int(np.argmax(tag_counts))
        subset = [(si, ti) for si, ti, gold in errs if gold == j_k]
        reps = np.stack([states[si][ti] for si, ti in subset])
        centroid = reps.mean(axis=0)
        distances = np.linalg.norm(reps - centroid, axis=1)
        occ = subset[int(np.argmin(distances))]
        batch.append(SelectionItem(type_key=z, position=occ, strategy="cral-oracle",
                                   score=scores[z], confusing_tag=j_k,
                                   iteration=iteration))
    return batch
