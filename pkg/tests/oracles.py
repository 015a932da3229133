"""Brute-force reference implementations used to check the fast code paths.

Everything here enumerates all J^N tag sequences explicitly and works in
plain numpy, independent of the package's dynamic-programming routines.
"""

from __future__ import annotations

import itertools

import numpy as np


def seq_score(em: np.ndarray, tr: np.ndarray, start: np.ndarray,
              stop: np.ndarray, tags: tuple[int, ...]) -> float:
    s = start[tags[0]] + em[0, tags[0]]
    for t in range(1, len(tags)):
        s += tr[tags[t - 1], tags[t]] + em[t, tags[t]]
    return s + stop[tags[-1]]


def all_sequences(n: int, j: int):
    return itertools.product(range(j), repeat=n)


def logsumexp(values) -> float:
    arr = np.asarray(list(values), dtype=np.float64)
    m = arr.max()
    return float(m + np.log(np.exp(arr - m).sum()))


def enum_log_partition(em, tr, start, stop) -> float:
    n, j = em.shape
    return logsumexp(seq_score(em, tr, start, stop, y) for y in all_sequences(n, j))


def enum_marginals(em, tr, start, stop) -> np.ndarray:
    n, j = em.shape
    scores = {y: seq_score(em, tr, start, stop, y) for y in all_sequences(n, j)}
    log_z = logsumexp(scores.values())
    marg = np.zeros((n, j))
    for y, s in scores.items():
        p = np.exp(s - log_z)
        for t, tag in enumerate(y):
            marg[t, tag] += p
    return marg


def enum_viterbi(em, tr, start, stop) -> tuple[int, ...]:
    n, j = em.shape
    best, best_score = None, -np.inf
    for y in all_sequences(n, j):  # lexicographic order; first strict max wins
        s = seq_score(em, tr, start, stop, y)
        if s > best_score:
            best, best_score = y, s
    return best


def enum_constrained_log_likelihood(em, tr, start, stop,
                                    constraints: dict[int, int]) -> float:
    n, j = em.shape
    congruent = [
        y for y in all_sequences(n, j)
        if all(y[pos] == tag for pos, tag in constraints.items())
    ]
    log_mass = logsumexp(seq_score(em, tr, start, stop, y) for y in congruent)
    log_z = enum_log_partition(em, tr, start, stop)
    return log_mass - log_z


def random_crf(rng: np.random.Generator, n: int, j: int, scale: float = 2.0):
    em = rng.uniform(-scale, scale, size=(n, j))
    tr = rng.uniform(-scale, scale, size=(j, j))
    start = rng.uniform(-scale, scale, size=j)
    stop = rng.uniform(-scale, scale, size=j)
    return em, tr, start, stop
