"""Waveform similarity between events: maximum circular correlation (MCC).

Two events are compared through their 9 x tau feature matrices.  For each
circular shift k of the second matrix, the per-row Pearson correlations of
the varying rows are averaged; the MCC is the maximum of that average over
all shifts.  Rolling makes the measure invariant to where an event sits
inside its padded span, and Pearson makes it invariant to per-row scale
and offset.

Rows that are (near-)constant in either event carry no shape information
and are excluded; eps_var sets the minimum per-row standard deviation for
a row to count as varying, measured after dividing by the optional
row_scale vector (pass per-feature training stds to express eps_var in
standardized units).
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct

import numpy as np

log = logging.getLogger(__name__)

EPS_VAR_DEFAULT = 1e-9

# Correlations within this distance of +-1 are snapped to the exact bound,
# so self-similarity and shift-aligned matches come out at exactly 1.0.
_SNAP = 1e-12

SIM_CACHE_MAGIC = b"GSIFTSIM"
SIM_CACHE_VERSION = 1


def roll(P: np.ndarray, k: int) -> np.ndarray:
    """Circular shift along the time axis: roll(P, 1) moves the last
    column in front of the first."""
    return np.roll(P, k, axis=1)


def align_pair(Pi: np.ndarray, Pj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Edge-pad the shorter matrix with its last column so lengths match."""
    Pi = np.asarray(Pi, dtype=np.float64)
    Pj = np.asarray(Pj, dtype=np.float64)
    if Pi.ndim != 2 or Pj.ndim != 2 or Pi.shape[0] != Pj.shape[0]:
        raise ValueError(f"incompatible event shapes {Pi.shape} and {Pj.shape}")
    ti, tj = Pi.shape[1], Pj.shape[1]
    if ti == 0 or tj == 0:
        raise ValueError("event matrices must have at least one column")
    tau = max(ti, tj)
    if ti < tau:
        Pi = np.concatenate([Pi, np.repeat(Pi[:, -1:], tau - ti, axis=1)], axis=1)
    if tj < tau:
        Pj = np.concatenate([Pj, np.repeat(Pj[:, -1:], tau - tj, axis=1)], axis=1)
    return Pi, Pj


def _row_stats(P: np.ndarray):
    mean = P.mean(axis=1)
    centered = P - mean[:, None]
    sq = np.einsum("ij,ij->i", centered, centered)
    return centered, sq


def _active_rows(sq_i, sq_j, tau, row_scale, eps_var):
    std_i = np.sqrt(sq_i / tau)
    std_j = np.sqrt(sq_j / tau)
    if row_scale is not None:
        scale = np.asarray(row_scale, dtype=np.float64)
        std_i = std_i / scale
        std_j = std_j / scale
    return (std_i >= eps_var) & (std_j >= eps_var)


def _snap(r: np.ndarray) -> np.ndarray:
    r = np.clip(r, -1.0, 1.0)
    r[r > 1.0 - _SNAP] = 1.0
    r[r < -1.0 + _SNAP] = -1.0
    return r


def step_correlation(Pi: np.ndarray, Pj: np.ndarray, k: int,
                     row_scale=None, eps_var: float = EPS_VAR_DEFAULT) -> float:
    """Mean Pearson correlation of the varying rows of Pi against Pj
    rolled by k.  Returns 0.0 when every row is excluded."""
    A, B = align_pair(Pi, Pj)
    tau = A.shape[1]
    Ac, sq_a = _row_stats(A)
    Bc, sq_b = _row_stats(B)
    active = _active_rows(sq_a, sq_b, tau, row_scale, eps_var)
    if not active.any():
        return 0.0
    Bk = np.roll(Bc[active], k, axis=1)
    num = np.einsum("ij,ij->i", Ac[active], Bk)
    denom = np.sqrt(sq_a[active] * sq_b[active])
    return float(np.mean(_snap(num / denom)))


def _corr_table_naive(Ac, Bc, denom, tau):
    """(rows, tau) Pearson table: entry [r, k] correlates row r of A with
    row r of B rolled by k."""
    rows = Ac.shape[0]
    table = np.empty((rows, tau), dtype=np.float64)
    for k in range(tau):
        Bk = np.roll(Bc, k, axis=1)
        table[:, k] = np.einsum("ij,ij->i", Ac, Bk)
    return _snap(table / denom[:, None])


def _corr_table_fft(Ac, Bc, denom, tau):
    """Same table via FFT: the numerator at shift k is the circular
    cross-correlation sum_t A[t] * B[(t - k) mod tau]."""
    fa = np.fft.rfft(Ac, axis=1)
    fb = np.fft.rfft(Bc, axis=1)
    num = np.fft.irfft(fa * np.conj(fb), n=tau, axis=1)
    return _snap(num / denom[:, None])


def mcc(Pi: np.ndarray, Pj: np.ndarray, row_scale=None,
        eps_var: float = EPS_VAR_DEFAULT, method: str = "fft") -> float:
    """Maximum circular correlation between two events, in [-1, 1].

    Symmetry is enforced by evaluating each unordered pair in a canonical
    argument order (content-based), so mcc(i, j) == mcc(j, i) exactly.
    """
    if method not in ("fft", "naive"):
        raise ValueError(f"unknown mcc method {method!r}")
    A, B = align_pair(Pi, Pj)
    # canonical order: byte-wise comparison of the aligned matrices
    if B.tobytes() < A.tobytes():
        A, B = B, A
    tau = A.shape[1]
    Ac, sq_a = _row_stats(A)
    Bc, sq_b = _row_stats(B)
    active = _active_rows(sq_a, sq_b, tau, row_scale, eps_var)
    if not active.any():
        return 0.0
    denom = np.sqrt(sq_a[active] * sq_b[active])
    if method == "fft":
        table = _corr_table_fft(Ac[active], Bc[active], denom, tau)
    else:
        table = _corr_table_naive(Ac[active], Bc[active], denom, tau)
    return float(table.mean(axis=0).max())


def build_similarity_matrix(matrices, row_scale=None,
                            eps_var: float = EPS_VAR_DEFAULT,
                            method: str = "fft") -> np.ndarray:
    """Pairwise MCC for a list of event matrices.

    Each unordered pair is evaluated once and mirrored; the diagonal is
    exactly 1.  Clustering uses distance = 1 - similarity.
    """
    n = len(matrices)
    S = np.eye(n, dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            s = mcc(matrices[i], matrices[j], row_scale=row_scale,
                    eps_var=eps_var, method=method)
            S[i, j] = S[j, i] = s
    return S


def similarity_to_distance(S: np.ndarray) -> np.ndarray:
    D = 1.0 - S
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


# ---------------------------------------------------------------------------
# Similarity matrix cache, keyed by (category, event id set, parameters)
# ---------------------------------------------------------------------------

def similarity_cache_key(category: str, event_ids, eps_var: float) -> str:
    payload = json.dumps(
        {"category": category, "ids": sorted(int(i) for i in event_ids),
         "eps_var": eps_var},
        sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:24]


def save_similarity_cache(path, S: np.ndarray, category: str, event_ids,
                          eps_var: float) -> None:
    header = {
        "category": category,
        "ids": [int(i) for i in event_ids],
        "eps_var": eps_var,
        "n": int(S.shape[0]),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SIM_CACHE_MAGIC)
        fh.write(struct.pack("<I", SIM_CACHE_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(S, dtype="<f8").tobytes())


def load_similarity_cache(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 20 or data[:8] != SIM_CACHE_MAGIC:
        raise ValueError(f"similarity cache {path}: bad magic")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != SIM_CACHE_VERSION:
        raise ValueError(
            f"similarity cache {path}: version {version}, expected {SIM_CACHE_VERSION}")
    (hlen,) = struct.unpack_from("<Q", data, 12)
    header = json.loads(data[20:20 + hlen].decode("utf-8"))
    n = header["n"]
    S = np.frombuffer(data, dtype="<f8", count=n * n, offset=20 + hlen).reshape(n, n).copy()
    return S, header
