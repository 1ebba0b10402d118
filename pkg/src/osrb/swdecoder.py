"""Slepian-Wolf decoding from bin indices plus side information.

MAP decoding is a strictly stronger stand-in for the typicality decoder at
finite blocklength; both are provided, with decode failure as a value rather
than an exception (a fixed arbitrary sequence, flagged).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import seqspace
from .binning import BinningSpec, DistributedBinning, RateCheck, SubsetConstraint, _cond_entropy_overlap, _union_vars, sample_binning
from .probkit import CapacityError, JointPmf, marginalize

CANDIDATE_GUARD = 4_000_000
_SOURCE_STREAM = 1 << 32  # keeps source draws off the binning's seed stream


@dataclass(frozen=True)
class SwProblem:
    """Recover the binned sources from their bin indices and side information.

    ``base`` is the per-symbol joint pmf; each binning entry must be a single
    variable here (flat Slepian-Wolf; nested layouts live in the protocol
    constructions). ``target`` is 'all' or 'single' (recover source 0 only).
    """

    base: JointPmf
    spec: BinningSpec
    target: str = "all"

    def __post_init__(self) -> None:
        if self.target not in ("all", "single"):
            raise ValueError("target must be 'all' or 'single'")
        for e in self.spec.entries:
            if len(e.vars) != 1:
                raise ValueError("SwProblem bins single variables")

    @property
    def source_vars(self) -> tuple[str, ...]:
        return tuple(e.vars[0] for e in self.spec.entries)

    @property
    def z_vars(self) -> tuple[str, ...]:
        return tuple(n for n in self.base.names if n not in self.source_vars)


@dataclass(frozen=True)
class DecodeResult:
    estimates: tuple[int, ...]
    in_bins: bool
    unique: bool


def _candidate_grid(binning: DistributedBinning, bins: Sequence[int]) -> list[np.ndarray]:
    pres = []
    total = 1
    for t, b in enumerate(bins):
        pre = binning.preimage(t, int(b))
        total *= max(len(pre), 1)
        if total > CANDIDATE_GUARD:
            raise CapacityError(f"candidate set exceeds {CANDIDATE_GUARD}")
        pres.append(pre)
    return pres


def _joint_symbol_logp(problem: SwProblem) -> np.ndarray:
    """log2 p(x_1..x_T, z) arranged as (prod source sizes, prod z sizes)."""
    p = problem.base
    order = problem.source_vars + problem.z_vars
    mass = np.transpose(p.mass, axes=p.axes(order))
    ksz = int(np.prod([p.var(v).size for v in problem.source_vars], dtype=np.int64))
    return seqspace.safe_log2(np.ascontiguousarray(mass).reshape(ksz, -1))


def _score_candidates(
    problem: SwProblem, pres: list[np.ndarray], z_seq: int | np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """(candidate tuple matrix, log-posterior scores), candidates in lex order."""
    p = problem.base
    n = problem.spec.n
    sizes = [p.var(v).size for v in problem.source_vars]
    grids = np.meshgrid(*pres, indexing="ij")
    cand = np.stack([g.reshape(-1) for g in grids], axis=1)  # (N, T), lex order
    zsizes = [p.var(v).size for v in problem.z_vars]
    lz = int(np.prod(zsizes, dtype=np.int64)) if zsizes else 1
    if np.ndim(z_seq) == 0:
        zdig = seqspace.digits_of(np.asarray([z_seq]), n, lz)[0]
    else:
        zdig = np.asarray(z_seq, dtype=np.int64)
    logp = _joint_symbol_logp(problem)
    scores = np.zeros(len(cand))
    for i in range(n):
        sym = np.zeros(len(cand), dtype=np.int64)
        for t, k in enumerate(sizes):
            dig_t = (cand[:, t] // k ** (n - 1 - i)) % k
            sym = sym * k + dig_t
        scores += logp[sym, zdig[i]]
    return cand, scores


def map_decode(
    binning: DistributedBinning,
    bins: Sequence[int],
    z_seq: int | np.ndarray,
    problem: SwProblem,
) -> DecodeResult:
    """argmax p(x_{[1:T]}^n | z^n) over the announced bins; lexicographic ties.

    An empty candidate set yields the all-zeros sequences with in_bins False.
    """
    pres = _candidate_grid(binning, bins)
    if any(len(p) == 0 for p in pres):
        return DecodeResult((0,) * len(pres), False, False)
    cand, scores = _score_candidates(problem, pres, z_seq)
    best = int(np.argmax(scores))
    unique = int((scores == scores[best]).sum()) == 1
    return DecodeResult(tuple(int(x) for x in cand[best]), True, unique)


def typicality_decode(
    binning: DistributedBinning,
    bins: Sequence[int],
    z_seq: int | np.ndarray,
    problem: SwProblem,
    delta: float = 0.1,
) -> DecodeResult:
    """Return the unique jointly robust-typical candidate in the bins.

    Robust typicality: the empirical joint type pi of ((x_1..x_T)_i, z_i)
    satisfies |pi - p| <= delta * p cellwise. No unique candidate (none, or
    several) yields the fixed all-zeros sequences with unique False.
    """
    p = problem.base
    n = problem.spec.n
    pres = _candidate_grid(binning, bins)
    if any(len(pr) == 0 for pr in pres):
        return DecodeResult((0,) * len(pres), False, False)
    sizes = [p.var(v).size for v in problem.source_vars]
    zsizes = [p.var(v).size for v in problem.z_vars]
    lz = int(np.prod(zsizes, dtype=np.int64)) if zsizes else 1
    if np.ndim(z_seq) == 0:
        zdig = seqspace.digits_of(np.asarray([z_seq]), n, lz)[0]
    else:
        zdig = np.asarray(z_seq, dtype=np.int64)
    order = problem.source_vars + problem.z_vars
    mass = np.transpose(p.mass, axes=p.axes(order))
    ksz = int(np.prod(sizes, dtype=np.int64))
    ref = np.ascontiguousarray(mass).reshape(ksz, -1)

    grids = np.meshgrid(*pres, indexing="ij")
    cand = np.stack([g.reshape(-1) for g in grids], axis=1)
    counts = np.zeros((len(cand), ksz, ref.shape[1]))
    for i in range(n):
        sym = np.zeros(len(cand), dtype=np.int64)
        for t, k in enumerate(sizes):
            sym = sym * k + (cand[:, t] // k ** (n - 1 - i)) % k
        counts[np.arange(len(cand)), sym, zdig[i]] += 1.0
    emp = counts / n
    ok = np.all(np.abs(emp - ref[None]) <= delta * ref[None] + 1e-12, axis=(1, 2))
    hits = np.flatnonzero(ok)
    if len(hits) == 1:
        return DecodeResult(tuple(int(x) for x in cand[hits[0]]), True, True)
    fallback = (0,) * len(pres)
    in_bins = all(int(binning.maps[t][0]) == int(bins[t]) for t in range(len(pres)))
    return DecodeResult(fallback, in_bins, False)


def sw_error_prob(
    problem: SwProblem,
    trials: int,
    decoder: str = "map",
    delta: float = 0.1,
) -> tuple[float, float]:
    """Monte-Carlo P(x-hat != x) over fresh source and binning draws.

    Deterministic given the spec's master seed; trial k draws its own rng via
    the SplitMix avalanche, so trials are order-insensitive.
    """
    if decoder not in ("map", "typicality"):
        raise ValueError("decoder must be 'map' or 'typicality'")
    p = problem.base
    spec = problem.spec
    n = spec.n
    order = problem.source_vars + problem.z_vars
    mass = np.transpose(p.mass, axes=p.axes(order))
    flat = np.ascontiguousarray(mass).reshape(-1)
    sizes = [p.var(v).size for v in problem.source_vars]
    zsizes = [p.var(v).size for v in problem.z_vars]
    lz = int(np.prod(zsizes, dtype=np.int64)) if zsizes else 1
    ktot = int(np.prod(sizes, dtype=np.int64))
    errors = 0
    for trial in range(trials):
        rng = seqspace.rng_for(spec.master_seed, _SOURCE_STREAM + trial)
        binning = sample_binning(spec, trial)
        syms = rng.choice(len(flat), size=n, p=flat)
        zdig = syms % lz
        xsym = syms // lz
        xseqs = []
        rem = xsym
        comps = []
        for k in reversed(sizes):
            comps.append(rem % k)
            rem = rem // k
        comps.reverse()
        for t, k in enumerate(sizes):
            xseqs.append(int(seqspace.index_of(comps[t], k)))
        bins = [int(binning.maps[t][xseqs[t]]) for t in range(len(sizes))]
        if decoder == "map":
            res = map_decode(binning, bins, zdig, problem)
        else:
            res = typicality_decode(binning, bins, zdig, problem, delta=delta)
        if problem.target == "single":
            errors += res.estimates[0] != xseqs[0]
        else:
            errors += tuple(res.estimates) != tuple(xseqs)
    p_err = errors / trials
    stderr = math.sqrt(max(p_err * (1 - p_err), 0.0) / trials)
    return p_err, stderr


def sw_check(
    rates: Sequence[float],
    p: JointPmf,
    sources: Sequence[Sequence[str] | str],
    given: Sequence[str] = (),
    target: str = "all",
) -> RateCheck:
    """Slepian-Wolf sufficient rate conditions, full or single-source recovery.

    ``all``: every nonempty S needs sum_{t in S} R_t > H(X_S | X_{S^c}, Z).
    ``single``: every S inside {1..T-1} needs
    R_0 + sum_{t in S} R_t > H(X_0 X_S | X_{S^c} Z), S^c = {1..T-1} - S.
    """
    srcs = [((s,) if isinstance(s, str) else tuple(s)) for s in sources]
    rates = [float(r) for r in rates]
    if len(srcs) != len(rates):
        raise ValueError("rates and sources must align")
    if any(r < 0 for r in rates):
        raise ValueError("rates must be >= 0")
    given = tuple(given)
    T = len(srcs)
    cons: list[SubsetConstraint] = []
    if target == "all":
        for bits in range(1, 1 << T):
            S = tuple(t for t in range(T) if bits >> t & 1)
            comp = tuple(t for t in range(T) if t not in S)
            lhs = sum(rates[t] for t in S)
            cond = _union_vars(srcs, comp) + tuple(
                v for v in given if v not in _union_vars(srcs, comp)
            )
            bound = _cond_entropy_overlap(p, _union_vars(srcs, S), cond)
            cons.append(SubsetConstraint(S, lhs, bound, ">"))
    elif target == "single":
        rest = list(range(1, T))
        for bits in range(1 << len(rest)):
            S = tuple(rest[i] for i in range(len(rest)) if bits >> i & 1)
            comp = tuple(t for t in rest if t not in S)
            lhs = rates[0] + sum(rates[t] for t in S)
            tvars = _union_vars(srcs, (0,) + S)
            cond = _union_vars(srcs, comp) + tuple(
                v for v in given if v not in _union_vars(srcs, comp)
            )
            bound = _cond_entropy_overlap(p, tvars, cond)
            cons.append(SubsetConstraint((0,) + S, lhs, bound, ">"))
    else:
        raise ValueError("target must be 'all' or 'single'")
    return RateCheck(all(c.satisfied for c in cons), tuple(cons))
