"""Blocklength-n sequence-space plumbing: mixed-radix indexing, i.i.d. products, seeds.

Sequence indices are row-major over symbols with the first symbol most
significant, matching ``probkit.iid_extend``.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """SplitMix64 avalanche of a 64-bit word."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def stream_seed(master_seed: int, stream: int) -> int:
    """Per-trial seed: SplitMix avalanche of master_seed XOR the trial index."""
    return splitmix64((master_seed & _MASK64) ^ (stream & _MASK64))


def rng_for(master_seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stream_seed(master_seed, stream)))


def bin_count(n: int, rate: float) -> int:
    """M = ceil(2**(n*rate)), snapping to the integer when within 1e-9 of one."""
    if rate < 0:
        raise ValueError("rate must be >= 0")
    x = 2.0 ** (n * rate)
    nearest = round(x)
    if abs(x - nearest) < 1e-9 * max(1.0, nearest):
        return max(1, int(nearest))
    return max(1, int(math.ceil(x)))


def digits_of(indices: np.ndarray, n: int, base: int) -> np.ndarray:
    """Base-``base`` digits of sequence indices, shape (len, n), MSD first."""
    indices = np.asarray(indices, dtype=np.int64)
    out = np.empty(indices.shape + (n,), dtype=np.int64)
    rem = indices
    for i in range(n - 1, -1, -1):
        out[..., i] = rem % base
        rem = rem // base
    return out


def index_of(digits: np.ndarray, base: int) -> np.ndarray:
    """Inverse of :func:`digits_of` along the last axis."""
    digits = np.asarray(digits, dtype=np.int64)
    idx = np.zeros(digits.shape[:-1], dtype=np.int64)
    for i in range(digits.shape[-1]):
        idx = idx * base + digits[..., i]
    return idx


def iid_vector(base_probs: np.ndarray, n: int) -> np.ndarray:
    """p(x^n) over all base**n sequences of an i.i.d. symbol source."""
    vec = np.asarray(base_probs, dtype=np.float64)
    out = vec
    for _ in range(n - 1):
        out = np.kron(out, vec)
    return out


def expand_rows(kernel: np.ndarray, seqs: np.ndarray, n: int, base: int) -> np.ndarray:
    """Rows p(y^n | x^n) for each x-sequence index, y row-major.

    ``kernel`` is the per-symbol (base x out) matrix; cost is len(seqs) * out**n.
    """
    seqs = np.asarray(seqs, dtype=np.int64)
    dig = digits_of(seqs, n, base)
    out = np.ones((len(seqs), 1))
    for i in range(n):
        out = (out[:, :, None] * kernel[dig[:, i]][:, None, :]).reshape(len(seqs), -1)
    return out


def expand_rows_log(log_kernel: np.ndarray, seqs: np.ndarray, n: int, base: int) -> np.ndarray:
    """Like :func:`expand_rows` but additive, for log-likelihood score tables."""
    seqs = np.asarray(seqs, dtype=np.int64)
    dig = digits_of(seqs, n, base)
    out = np.zeros((len(seqs), 1))
    for i in range(n):
        out = (out[:, :, None] + log_kernel[dig[:, i]][:, None, :]).reshape(len(seqs), -1)
    return out


def safe_log2(arr: np.ndarray) -> np.ndarray:
    """log2 with zeros mapped to -inf, no warnings."""
    arr = np.asarray(arr, dtype=np.float64)
    out = np.full(arr.shape, -np.inf)
    np.log2(arr, out=out, where=arr > 0)
    return out


def sample_iid_symbols(rng: np.random.Generator, flat_probs: np.ndarray, n: int) -> np.ndarray:
    """n i.i.d. draws of a flattened joint symbol index."""
    return rng.choice(len(flat_probs), size=n, p=flat_probs)
