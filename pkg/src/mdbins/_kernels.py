"""Compiled inner loops. Callers own all randomness; these only consume draws."""

import numpy as np
from numba import njit

ONE_CHOICE = 0
D_CHOICE = 1
BETA_CHOICE = 2
GREEDY_TIES = 3


@njit(cache=True)
def _place(L, T, R, counts, balls, ball_w, r, j):
    D = L.shape[0]
    for dd in range(D):
        w = balls[r, dd]
        if w != 0:
            L[dd, j] += w
            T[dd] += w
    R[j] += ball_w[r]
    counts[j] += 1


@njit(cache=True)
def _least_loaded(R, choices, r, k):
    # min raw row sum over the first k samples; ties go to the lowest bin index
    best = choices[r, 0]
    for c in range(1, k):
        j = choices[r, c]
        if R[j] < R[best] or (R[j] == R[best] and j < best):
            best = j
    return best


@njit(cache=True)
def place_sequential(L, T, R, counts, balls, ball_w, choices, coins, kind, beta, start, stop):
    """Place balls ``start..stop-1`` of the current chunk. Returns copies placed."""
    d = choices.shape[1]
    placed = 0
    tied = np.empty(d, np.int64)
    for r in range(start, stop):
        if kind == ONE_CHOICE:
            _place(L, T, R, counts, balls, ball_w, r, choices[r, 0])
            placed += 1
        elif kind == D_CHOICE:
            _place(L, T, R, counts, balls, ball_w, r, _least_loaded(R, choices, r, d))
            placed += 1
        elif kind == BETA_CHOICE:
            if coins[r] < beta:
                j = _least_loaded(R, choices, r, 2)
            else:
                j = choices[r, 0]
            _place(L, T, R, counts, balls, ball_w, r, j)
            placed += 1
        else:
            lo = R[choices[r, 0]]
            for c in range(1, d):
                if R[choices[r, c]] < lo:
                    lo = R[choices[r, c]]
            # decide the tie set before placing; placement changes R
            nt = 0
            for c in range(d):
                j = choices[r, c]
                if R[j] != lo:
                    continue
                dup = False
                for e in range(nt):
                    if tied[e] == j:
                        dup = True
                        break
                if not dup:
                    tied[nt] = j
                    nt += 1
            for e in range(nt):
                _place(L, T, R, counts, balls, ball_w, r, tied[e])
            placed += nt
    return placed


@njit(cache=True)
def parallel_rounds(n, choices, ball_w, R, max_rounds):
    """Run the bid/accept protocol to completion.

    Each round every bin accepts its lowest-ID uncommitted bidder. A ball
    accepted by all of its distinct bins commits: it sees exactly the loads
    left by lower-ID balls and places a copy in every bin tied at the minimum.

    Returns (commit_round per ball, placed mask per sample, rounds used);
    rounds used is -1 if ``max_rounds`` was exceeded.
    """
    m, d = choices.shape
    commit = np.zeros(m, np.int64)
    placed = np.zeros((m, d), np.bool_)
    pending = np.arange(m)
    npend = m
    best = np.empty(n, np.int64)
    rounds = 0
    while npend > 0:
        rounds += 1
        if rounds > max_rounds:
            return commit, placed, -1
        best[:] = m
        for a in range(npend):
            k = pending[a]
            for c in range(d):
                j = choices[k, c]
                if best[j] == m:
                    best[j] = k
        keep = 0
        for a in range(npend):
            k = pending[a]
            ok = True
            for c in range(d):
                if best[choices[k, c]] != k:
                    ok = False
                    break
            if not ok:
                pending[keep] = k
                keep += 1
                continue
            lo = R[choices[k, 0]]
            for c in range(1, d):
                if R[choices[k, c]] < lo:
                    lo = R[choices[k, c]]
            for c in range(d):
                j = choices[k, c]
                if R[j] != lo:
                    continue
                dup = False
                for e in range(c):
                    if choices[k, e] == j:
                        dup = True
                        break
                if not dup:
                    placed[k, c] = True
            for c in range(d):
                if placed[k, c]:
                    R[choices[k, c]] += ball_w[k]
            commit[k] = rounds
        npend = keep
    return commit, placed, rounds


@njit(cache=True)
def apply_placements(L, T, R, counts, balls, ball_w, choices, placed, start, stop):
    d = choices.shape[1]
    for r in range(start, stop):
        for c in range(d):
            if placed[r, c]:
                _place(L, T, R, counts, balls, ball_w, r, choices[r, c])
