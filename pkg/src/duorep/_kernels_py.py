"""Pure-NumPy scoring kernels (fallback backend).

Same contracts as the compiled backend in ``_kernels.pyx``: all accumulation
in float64 so both backends agree to tight tolerances.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def maxsim(Q, D) -> float:
    """Sum over query rows of the max dot product against any document row."""
    Q = np.asarray(Q, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if Q.shape[1] != D.shape[1]:
        raise ValueError(f"dim mismatch: query {Q.shape[1]} vs document {D.shape[1]}")
    if D.shape[0] == 0:
        raise ValueError("document matrix has no rows")
    sim = Q @ D.T
    return float(sim.max(axis=1).sum())


def maxsim_batch(Q, tokens, offsets, ordinals) -> np.ndarray:
    """Max-sim scores of Q against each candidate's token rows.

    tokens holds all passages' rows contiguously; offsets[p]..offsets[p+1]
    is passage p's row range; ordinals selects the candidates to score.
    """
    Q = np.asarray(Q, dtype=np.float64)
    tokens = np.asarray(tokens)
    offsets = np.asarray(offsets, dtype=np.int64)
    ordinals = np.asarray(ordinals, dtype=np.int64)
    if Q.shape[1] != tokens.shape[1]:
        raise ValueError(f"dim mismatch: query {Q.shape[1]} vs tokens {tokens.shape[1]}")
    out = np.empty(len(ordinals), dtype=np.float64)
    for i, p in enumerate(ordinals):
        start, end = offsets[p], offsets[p + 1]
        if end <= start:
            raise ValueError(f"passage ordinal {p} has an empty token range")
        sim = Q @ tokens[start:end].astype(np.float64).T
        out[i] = sim.max(axis=1).sum()
    return out


def adc_scores(lut, codes, base: float) -> np.ndarray:
    """Asymmetric-distance scores: base + sum of per-subspace table lookups."""
    lut = np.asarray(lut, dtype=np.float64)
    codes = np.asarray(codes, dtype=np.uint8)
    if codes.ndim != 2 or codes.shape[1] != lut.shape[0]:
        raise ValueError(f"codes shape {codes.shape} incompatible with {lut.shape[0]} subspaces")
    if codes.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    m = lut.shape[0]
    picked = lut[np.arange(m)[None, :], codes.astype(np.intp)]
    return picked.sum(axis=1) + base
