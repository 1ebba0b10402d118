"""Distributed random binning: sampling, induced statistics, exact TV, rate checks.

A binning entry may bin a tuple of variables (nested binning, as superposition
layouts require), so a bin's source is a variable subset rather than a single
source.

Exact per-binning total variation against the ideal p(z^n) * prod p^U(b_t) is
never estimated from samples. Two exact strategies cover the feasible sizes:

* dense: push the bin indicator through the per-symbol joint kernel one symbol
  at a time, producing the full (z^n x bins) table; feasible while
  max(|X|^n, |Z|^n) * prod(M_t) fits the dense guard.
* typeclass (single binning only): group each bin's members' coordinates into
  pattern classes and enumerate per-class z-agreement counts; the z-sum then
  collapses to a product of binomial-weighted class sums. Feasible for huge
  bin counts as long as individual bins stay small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import seqspace
from .probkit import Alphabet, CapacityError, JointPmf, marginalize

DENSE_GUARD = 100_000_000
ENUM_GUARD = 10_000_000
TYPECLASS_SPACE_GUARD = 1 << 24
TYPECLASS_BIN_CAP = 48

try:
    from . import _typeclass_nb

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover - numba missing or broken
    _typeclass_nb = None
    _HAVE_NUMBA = False


@dataclass(frozen=True)
class BinEntry:
    """One random binning: a map from the n-sequences of ``vars`` to [0, count)."""

    vars: tuple[str, ...]
    sizes: tuple[int, ...]
    count: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "vars", tuple(self.vars))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.vars) != len(self.sizes) or not self.vars:
            raise ValueError("vars and sizes must be nonempty and aligned")
        if self.count < 1:
            raise ValueError("bin count must be >= 1")

    @property
    def symbol_size(self) -> int:
        return int(np.prod(self.sizes, dtype=np.int64))

    def space(self, n: int) -> int:
        return self.symbol_size ** n


@dataclass(frozen=True)
class BinningSpec:
    """A distributed binning layout at blocklength n with a master seed."""

    n: int
    entries: tuple[BinEntry, ...]
    master_seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.n < 1:
            raise ValueError("blocklength n must be >= 1")
        if not self.entries:
            raise ValueError("at least one binning entry required")

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(e.count for e in self.entries)

    @property
    def total_bins(self) -> int:
        return int(np.prod(self.counts, dtype=np.int64))

    @classmethod
    def from_rates(
        cls,
        base: JointPmf,
        n: int,
        sources: Sequence[tuple[Sequence[str] | str, float]],
        master_seed: int,
    ) -> "BinningSpec":
        """Build entries with M_t = ceil(2**(n*R_t)) from a symbol-level pmf."""
        entries = []
        for vars_, rate in sources:
            names = (vars_,) if isinstance(vars_, str) else tuple(vars_)
            sizes = tuple(base.var(v).size for v in names)
            entries.append(BinEntry(names, sizes, seqspace.bin_count(n, rate)))
        return cls(n, tuple(entries), master_seed)

    @classmethod
    def from_counts(
        cls,
        base: JointPmf,
        n: int,
        sources: Sequence[tuple[Sequence[str] | str, int]],
        master_seed: int,
    ) -> "BinningSpec":
        entries = []
        for vars_, count in sources:
            names = (vars_,) if isinstance(vars_, str) else tuple(vars_)
            sizes = tuple(base.var(v).size for v in names)
            entries.append(BinEntry(names, sizes, int(count)))
        return cls(n, tuple(entries), master_seed)


@dataclass(frozen=True)
class DistributedBinning:
    """A concrete realization: one total map per entry, reproducible from the seed."""

    spec: BinningSpec
    trial: int
    maps: tuple[np.ndarray, ...]

    def preimage(self, t: int, b: int) -> np.ndarray:
        return np.flatnonzero(self.maps[t] == b)


def sample_binning(spec: BinningSpec, trial: int = 0) -> DistributedBinning:
    """Draw every sequence's bin uniformly and independently, per entry.

    Trial k uses the SplitMix avalanche of master_seed XOR k, so trials are
    independent and order-insensitive.
    """
    rng = seqspace.rng_for(spec.master_seed, trial)
    maps = []
    for e in spec.entries:
        m = rng.integers(0, e.count, size=e.space(spec.n), dtype=np.int64)
        m.flags.writeable = False
        maps.append(m)
    return DistributedBinning(spec, trial, tuple(maps))


def all_binnings(spec: BinningSpec, guard: int = ENUM_GUARD) -> Iterator[DistributedBinning]:
    """Every possible realization, in a fixed lexicographic order (guarded)."""
    spaces = [e.space(spec.n) for e in spec.entries]
    log_total = 0.0
    for e, sp in zip(spec.entries, spaces):
        log_total += sp * math.log2(e.count) if e.count > 1 else 0.0
        if log_total > math.log2(guard):
            raise CapacityError(
                f"enumeration needs more than {guard} binnings; use monte_carlo"
            )
    total = 1
    for e, sp in zip(spec.entries, spaces):
        total *= e.count ** sp
    flat_len = sum(spaces)
    counts = np.concatenate([[e.count] * sp for e, sp in zip(spec.entries, spaces)]).astype(
        np.int64
    )
    assignment = np.zeros(flat_len, dtype=np.int64)
    splits = np.cumsum(spaces)[:-1]
    for _ in range(total):
        maps = tuple(np.array(m) for m in np.split(assignment, splits))
        for m in maps:
            m.flags.writeable = False
        yield DistributedBinning(spec, -1, maps)
        for i in range(flat_len - 1, -1, -1):
            assignment[i] += 1
            if assignment[i] < counts[i]:
                break
            assignment[i] = 0


def _split_vars(binning_vars: Sequence[BinEntry], p: JointPmf) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """(binned-union order of first appearance, remaining z variables)."""
    union: list[str] = []
    for e in binning_vars:
        for v in e.vars:
            if v not in union:
                union.append(v)
    z = tuple(n for n in p.names if n not in union)
    return tuple(union), z


def _entry_seq_indices(spec: BinningSpec, union: tuple[str, ...], union_sizes: tuple[int, ...]) -> list[np.ndarray]:
    """Per entry, the entry-sequence index of every union-sequence index.

    An entry over variables (a, b) indexes its map by the ravel of the
    per-variable sequence indices, (seq_a, seq_b) row-major, matching
    :func:`induced_bin_pmf`'s sequence-level axes.
    """
    K = int(np.prod(union_sizes, dtype=np.int64))
    xspace = K ** spec.n
    if xspace * spec.n > 8 * DENSE_GUARD:
        raise CapacityError(f"binned sequence space {xspace} too large")
    # per union variable, the symbol component of each union symbol
    comp = {}
    rem = np.arange(K, dtype=np.int64)
    for name, size in zip(reversed(union), reversed(union_sizes)):
        comp[name] = rem % size
        rem = rem // size
    idx = np.arange(xspace, dtype=np.int64)
    out = []
    for e in spec.entries:
        eidx = np.zeros(xspace, dtype=np.int64)
        for name, size in zip(e.vars, e.sizes):
            cmap = comp[name]
            vseq = np.zeros(xspace, dtype=np.int64)
            for i in range(spec.n):
                dig_i = (idx // K ** (spec.n - 1 - i)) % K
                vseq = vseq * size + cmap[dig_i]
            eidx = eidx * (size ** spec.n) + vseq
        out.append(eidx)
    return out


def joint_bin_index(binning: DistributedBinning, base: JointPmf) -> np.ndarray:
    """Raveled (b_1..b_T) for every union-sequence index, row-major over entries."""
    spec = binning.spec
    union, _ = _split_vars(spec.entries, base)
    union_sizes = tuple(base.var(v).size for v in union)
    entry_seq = _entry_seq_indices(spec, union, union_sizes)
    out = np.zeros(len(entry_seq[0]), dtype=np.int64)
    for e, seq, m in zip(spec.entries, entry_seq, binning.maps):
        out = out * e.count + m[seq]
    return out


def induced_bin_pmf(
    binning: DistributedBinning,
    p_seq: JointPmf,
    guard: int = DENSE_GUARD,
) -> JointPmf:
    """Exact P(z^n, b_1..b_T) from a sequence-level joint pmf.

    ``p_seq`` must carry each binned variable as a sequence variable of size
    (symbol alphabet)**n; all other variables are the unbinned Z block.
    """
    spec = binning.spec
    union, z_vars = _split_vars(spec.entries, p_seq)
    for e in spec.entries:
        for v, s in zip(e.vars, e.sizes):
            if p_seq.var(v).size != s ** spec.n:
                raise ValueError(
                    f"{v!r} has size {p_seq.var(v).size}, expected {s}**{spec.n}"
                )
    mtot = spec.total_bins
    zshape = tuple(p_seq.var(v).size for v in z_vars)
    zspace = int(np.prod(zshape, dtype=np.int64)) if z_vars else 1
    if mtot * zspace > guard:
        raise CapacityError(f"induced table {mtot}x{zspace} exceeds guard {guard}")
    mass = np.transpose(p_seq.mass, axes=p_seq.axes(union + z_vars))
    xspace = int(np.prod([p_seq.var(v).size for v in union], dtype=np.int64))
    flat = np.ascontiguousarray(mass).reshape(xspace, zspace)

    bins = np.zeros(xspace, dtype=np.int64)
    for t, e in enumerate(spec.entries):
        evars_axes = [union.index(v) for v in e.vars]
        # entry sequence index of each union-sequence cell
        idx = np.zeros(xspace, dtype=np.int64)
        rem = np.arange(xspace, dtype=np.int64)
        comp = {}
        for v in reversed(union):
            sz = p_seq.var(v).size
            comp[v] = rem % sz
            rem = rem // sz
        eidx = np.zeros(xspace, dtype=np.int64)
        for v in e.vars:
            eidx = eidx * p_seq.var(v).size + comp[v]
        bins = bins * e.count + binning.maps[t][eidx]

    order = np.argsort(bins, kind="stable")
    sorted_bins = bins[order]
    table = np.zeros((mtot, zspace))
    starts = np.flatnonzero(np.r_[True, sorted_bins[1:] != sorted_bins[:-1]])
    sums = np.add.reduceat(flat[order], starts, axis=0)
    table[sorted_bins[starts]] = sums

    out_vars = tuple(p_seq.var(v) for v in z_vars) + tuple(
        Alphabet(f"B{t + 1}", e.count) for t, e in enumerate(spec.entries)
    )
    out_shape = zshape + spec.counts
    out = np.transpose(table, (1, 0)).reshape(out_shape)
    return JointPmf(out_vars, out)


def ideal_bin_pmf(spec: BinningSpec, p_seq: JointPmf) -> JointPmf:
    """p(z^n) * prod_t p^U(b_t), aligned with :func:`induced_bin_pmf`."""
    _, z_vars = _split_vars(spec.entries, p_seq)
    pz = marginalize(p_seq, z_vars).mass if z_vars else np.ones(())
    zshape = tuple(p_seq.var(v).size for v in z_vars)
    table = np.multiply.outer(pz, np.full(spec.counts, 1.0 / spec.total_bins))
    out_vars = tuple(p_seq.var(v) for v in z_vars) + tuple(
        Alphabet(f"B{t + 1}", e.count) for t, e in enumerate(spec.entries)
    )
    return JointPmf(out_vars, table.reshape(zshape + spec.counts))


# ---------------------------------------------------------------------------
# exact per-binning TV strategies (symbol-level base pmf + blocklength)


def _base_layout(spec: BinningSpec, base: JointPmf):
    union, z_vars = _split_vars(spec.entries, base)
    for e in spec.entries:
        for v, s in zip(e.vars, e.sizes):
            if base.var(v).size != s:
                raise ValueError(f"{v!r} has symbol size {base.var(v).size}, spec says {s}")
    mass = np.transpose(base.mass, axes=base.axes(union + z_vars))
    union_sizes = tuple(base.var(v).size for v in union)
    K = int(np.prod(union_sizes, dtype=np.int64))
    L = int(np.prod([base.var(v).size for v in z_vars], dtype=np.int64)) if z_vars else 1
    kernel = np.ascontiguousarray(mass).reshape(K, L)
    return union, union_sizes, z_vars, K, L, kernel


def dense_tv(binning: DistributedBinning, base: JointPmf, guard: int = DENSE_GUARD) -> float:
    """Exact TV via the per-symbol indicator transform; needs the dense table to fit.

    Consumes x-symbols least significant first, so the produced z-axis carries
    its digits in reversed significance; the TV against an i.i.d. ideal is
    invariant under that relabeling, which keeps every step a flat matmul.
    """
    spec = binning.spec
    _, _, _, K, L, kernel = _base_layout(spec, base)
    xspace = K ** spec.n
    zspace = L ** spec.n
    mtot = spec.total_bins
    if max(xspace, zspace) * mtot > guard:
        raise CapacityError(
            f"dense strategy needs {max(xspace, zspace)}x{mtot} cells (> {guard})"
        )
    bins = joint_bin_index(binning, base)
    # group g symbols per pass; each pass costs one full sweep of the array,
    # which dominates on memory-bound machines
    g = 1
    while g < spec.n and K ** (g + 1) <= 64 and L ** (g + 1) <= 64:
        g += 1
    steps = [g] * (spec.n // g)
    if spec.n % g:
        steps.append(spec.n % g)
    kernels = {}
    for gs in set(steps):
        kg = kernel
        for _ in range(gs - 1):
            kg = np.kron(kg, kernel)
        kernels[gs] = kg
    arr = np.zeros((mtot, xspace))
    arr[bins, np.arange(xspace)] = 1.0
    arr = arr.reshape(mtot, 1, xspace)
    for gs in steps:
        kg, lg = K ** gs, L ** gs
        m_, zd, xr = arr.shape
        out = (arr.reshape(-1, kg) @ kernels[gs]).reshape(m_, zd, xr // kg, lg)
        arr = np.ascontiguousarray(np.moveaxis(out, 3, 1)).reshape(m_, zd * lg, xr // kg)
    table = arr.reshape(mtot, zspace)
    qz = seqspace.iid_vector(kernel.sum(axis=0), spec.n)
    return 0.5 * float(np.abs(table - qz[None, :] / mtot).sum())


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _typeclass_bin_sum_numpy(
    member_digits: np.ndarray, probs: np.ndarray, qz: np.ndarray, minv: float, n: int
) -> float:
    """Reference z-type enumeration for one bin: sum_z |P(z,b) - p(z)/M|."""
    s = member_digits.shape[0]
    ell = len(qz)
    patterns, m_counts = np.unique(member_digits.T, axis=0, return_counts=True)
    running = np.ones((s + 1, 1))
    counts = np.ones(1)
    for pat, m in zip(patterns, m_counts):
        comps = list(_compositions(int(m), ell))
        cvals = np.empty((s + 1, len(comps)))
        ccnt = np.empty(len(comps))
        for g, t in enumerate(comps):
            mult = math.factorial(int(m))
            for tv in t:
                mult //= math.factorial(tv)
            ccnt[g] = mult
            for j in range(s):
                cvals[j, g] = np.prod(probs[pat[j]] ** np.asarray(t))
            cvals[s, g] = np.prod(qz ** np.asarray(t))
        running = (running[:, :, None] * cvals[:, None, :]).reshape(s + 1, -1)
        counts = (counts[:, None] * ccnt[None, :]).reshape(-1)
    dev = np.abs(running[:s].sum(axis=0) - running[s] * minv)
    return float((counts * dev).sum())


def typeclass_tv(binning: DistributedBinning, base: JointPmf) -> float:
    """Exact TV for a single binning entry via per-bin z-type enumeration.

    Cost scales with the number of per-bin coordinate-class count vectors, so
    this is the high-rate complement of :func:`dense_tv` (many small bins).
    """
    spec = binning.spec
    if len(spec.entries) != 1:
        raise CapacityError("typeclass strategy handles a single binning entry")
    union, union_sizes, _, K, L, kernel = _base_layout(spec, base)
    xspace = K ** spec.n
    if xspace > TYPECLASS_SPACE_GUARD:
        raise CapacityError(f"sequence space {xspace} exceeds typeclass guard")
    mtot = spec.total_bins
    bmap = binning.maps[0]
    order = np.argsort(bmap, kind="stable")
    sizes = np.bincount(bmap, minlength=mtot)
    if int(sizes.max(initial=0)) > TYPECLASS_BIN_CAP:
        raise CapacityError(
            f"a bin holds {int(sizes.max())} sequences (> {TYPECLASS_BIN_CAP}); "
            "rates too low for the typeclass strategy"
        )
    n_empty = int((sizes == 0).sum())
    starts = np.concatenate([[0], np.cumsum(sizes)])[:-1]
    digits = seqspace.digits_of(np.arange(xspace, dtype=np.int64), spec.n, K).astype(np.uint8)
    qz = kernel.sum(axis=0)
    minv = 1.0 / mtot
    probs = kernel  # (K, L) per-symbol joint
    nonempty = np.flatnonzero(sizes)
    s_max = int(sizes.max(initial=0))
    keys_fit = s_max * math.log2(max(K, 2)) <= 62
    if _HAVE_NUMBA and L == 2 and keys_fit:
        acc = _typeclass_nb.bins_abs_dev(
            order, starts[nonempty], sizes[nonempty], digits, probs, qz, minv, spec.n
        )
    else:
        acc = 0.0
        for b in nonempty:
            members = order[starts[b] : starts[b] + sizes[b]]
            acc += _typeclass_bin_sum_numpy(digits[members].astype(np.int64), probs, qz, minv, spec.n)
    return 0.5 * (acc + n_empty * minv)


def exact_tv(binning: DistributedBinning, base: JointPmf, dense_guard: int = DENSE_GUARD) -> float:
    """Exact TV(P(z^n, b), p(z^n) prod p^U(b_t)) for one sampled binning."""
    spec = binning.spec
    union, union_sizes, _, K, L, _ = _base_layout(spec, base)
    xspace = K ** spec.n
    zspace = L ** spec.n
    if max(xspace, zspace) * spec.total_bins <= dense_guard:
        return dense_tv(binning, base, guard=dense_guard)
    if len(spec.entries) == 1:
        return typeclass_tv(binning, base)
    raise CapacityError(
        "instance too large for the dense table and not a single-entry binning"
    )


def exact_fidelity(binning: DistributedBinning, base: JointPmf, guard: int = DENSE_GUARD) -> float:
    """Exact F(P(z^n, b); ideal) for one binning, via the dense table."""
    spec = binning.spec
    p_seq = _seq_level(base, spec.n)
    induced = induced_bin_pmf(binning, p_seq, guard=guard)
    ideal = ideal_bin_pmf(spec, p_seq)
    return float(np.sqrt(induced.mass * ideal.mass).sum())


def _seq_level(base: JointPmf, n: int) -> JointPmf:
    from .probkit import iid_extend

    return iid_extend(base, n) if n > 1 else base


def enumerate_stats(
    spec: BinningSpec, base: JointPmf, guard: int = ENUM_GUARD
) -> tuple[float, float, int]:
    """(exact E[TV], exact E[F], #binnings) by enumerating every realization."""
    total_tv = 0.0
    total_f = 0.0
    count = 0
    p_seq = _seq_level(base, spec.n)
    ideal = ideal_bin_pmf(spec, p_seq)
    for binning in all_binnings(spec, guard=guard):
        induced = induced_bin_pmf(binning, p_seq)
        total_tv += 0.5 * float(np.abs(induced.mass - ideal.mass).sum())
        total_f += float(np.sqrt(induced.mass * ideal.mass).sum())
        count += 1
    return total_tv / count, total_f / count, count


def expected_tv(
    spec: BinningSpec,
    base: JointPmf,
    mode: str = "monte_carlo",
    trials: int = 100,
    enum_guard: int = ENUM_GUARD,
    dense_guard: int = DENSE_GUARD,
) -> tuple[float, float]:
    """E_B[TV(P(z^n,b), ideal)] with exact per-binning TV.

    ``mode='enumerate'`` averages over all realizations (stderr 0); otherwise a
    seeded Monte-Carlo average over fresh binnings, reported with its standard
    error. ``base`` is the per-symbol joint pmf; the i.i.d. extension happens
    inside the exact strategies, which is what makes blocklengths far beyond
    a materializable sequence-level joint feasible.
    """
    if mode == "enumerate":
        mean_tv, _, _ = enumerate_stats(spec, base, guard=enum_guard)
        return mean_tv, 0.0
    if mode != "monte_carlo":
        raise ValueError(f"unknown mode {mode!r}")
    vals = np.empty(trials)
    for t in range(trials):
        binning = sample_binning(spec, trial=t)
        vals[t] = exact_tv(binning, base, dense_guard=dense_guard)
    stderr = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return float(vals.mean()), stderr


# ---------------------------------------------------------------------------
# one-shot fidelity bound and rate-condition checks


def oneshot_fidelity_bound(
    p: JointPmf,
    sources: Sequence[Sequence[str] | str],
    counts: Sequence[int],
    z_vars: Sequence[str] | None = None,
) -> float:
    """Closed-form lower bound on E[F(P(b,z); p^U(b) p(z))] for one-shot binning.

    E_{X,Z} sqrt(1 / (1 + sum_{S nonempty} M_S 2^{-h(X_S|Z)})) with
    h(x|z) = -log2 p(x|z) evaluated pointwise and M_S = prod_{t in S} M_t.
    """
    srcs = [((s,) if isinstance(s, str) else tuple(s)) for s in sources]
    counts = [int(c) for c in counts]
    if len(srcs) != len(counts):
        raise ValueError("sources and counts must align")
    if any(c < 1 for c in counts):
        raise ValueError("bin counts must be >= 1")
    all_x = [v for s in srcs for v in s]
    if z_vars is None:
        z_vars = tuple(n for n in p.names if n not in all_x)
    z_axes = p.axes(z_vars)
    pz = p.mass.sum(axis=tuple(a for a in range(len(p.variables)) if a not in z_axes),
                    keepdims=True) if z_vars else np.ones_like(p.mass, shape=(1,) * p.mass.ndim)
    denom = np.ones_like(p.mass)
    T = len(srcs)
    for bits in range(1, 1 << T):
        S = [t for t in range(T) if bits >> t & 1]
        m_s = 1
        union: list[str] = []
        for t in S:
            m_s *= counts[t]
            for v in srcs[t]:
                if v not in union:
                    union.append(v)
        keep_axes = set(p.axes(union)) | set(z_axes)
        drop = tuple(a for a in range(len(p.variables)) if a not in keep_axes)
        pxs_z = p.mass.sum(axis=drop, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(pz > 0, pxs_z / np.where(pz > 0, pz, 1.0), 0.0)
        denom = denom + m_s * cond
    support = p.mass > 0
    return float((p.mass[support] / np.sqrt(denom[support])).sum())


@dataclass(frozen=True)
class SubsetConstraint:
    subset: tuple[int, ...]
    lhs: float
    bound: float
    sense: str

    @property
    def margin(self) -> float:
        return self.bound - self.lhs if self.sense == "<" else self.lhs - self.bound

    @property
    def satisfied(self) -> bool:
        return self.margin > 0.0


@dataclass(frozen=True)
class RateCheck:
    satisfied: bool
    constraints: tuple[SubsetConstraint, ...]

    @property
    def binding(self) -> tuple[SubsetConstraint, ...]:
        return tuple(c for c in self.constraints if not c.satisfied)


def _union_vars(sources: Sequence[tuple[str, ...]], subset: Iterable[int]) -> tuple[str, ...]:
    out: list[str] = []
    for t in subset:
        for v in sources[t]:
            if v not in out:
                out.append(v)
    return tuple(out)


def osrb_check(
    rates: Sequence[float],
    p: JointPmf,
    sources: Sequence[Sequence[str] | str],
    given: Sequence[str] = (),
    mode: str = "theorem1",
    exclude: Sequence[int] = (),
) -> RateCheck:
    """Near-uniformity / near-independence rate conditions for binned sources.

    ``theorem1``: every nonempty S has sum_{t in S} R_t < H(X_S | Z).
    ``corollary1``: with V=``exclude`` (0-based indices into sources, never 0),
    every S inside {1..T-1} minus V has R_0 + sum R_t < H(X_0 X_S | Z X_V).
    Sources may be variable subsets; nested layouts just share variables.
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
    if mode == "theorem1":
        for bits in range(1, 1 << T):
            S = tuple(t for t in range(T) if bits >> t & 1)
            lhs = sum(rates[t] for t in S)
            bound = _cond_entropy_overlap(p, _union_vars(srcs, S), given)
            cons.append(SubsetConstraint(S, lhs, bound, "<"))
    elif mode == "corollary1":
        V = tuple(sorted(set(int(v) for v in exclude)))
        if 0 in V:
            raise ValueError("exclude set may not contain source 0")
        rest = [t for t in range(1, T) if t not in V]
        v_vars = _union_vars(srcs, V)
        for bits in range(1 << len(rest)):
            S = tuple(rest[i] for i in range(len(rest)) if bits >> i & 1)
            lhs = rates[0] + sum(rates[t] for t in S)
            tvars = _union_vars(srcs, (0,) + S)
            cond = given + tuple(v for v in v_vars if v not in given)
            bound = _cond_entropy_overlap(p, tvars, cond)
            cons.append(SubsetConstraint((0,) + S, lhs, bound, "<"))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return RateCheck(all(c.satisfied for c in cons), tuple(cons))


def _cond_entropy_overlap(p: JointPmf, target: Sequence[str], cond: Sequence[str]) -> float:
    """H(target | cond) via H(target,cond) - H(cond); tolerates shared variables."""
    from .probkit import entropy

    joint = tuple(target) + tuple(v for v in cond if v not in target)
    if not cond:
        return entropy(p, joint)
    return entropy(p, joint) - entropy(p, tuple(cond))
