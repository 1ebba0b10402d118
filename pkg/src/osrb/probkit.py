"""Exact finite discrete probability: joint pmfs, conditionals, entropies, distances.

All mass tensors are dense numpy arrays indexed row-major by the product
alphabet, all logarithms are base 2, and 0*log(0) = 0 throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

NORM_ATOL = 1e-9
DEFAULT_MAX_CELLS = 1 << 26


class ShapeError(ValueError):
    """Operands disagree on variables or tensor shape."""


class CapacityError(RuntimeError):
    """A computation would exceed its configured size guard."""


@dataclass(frozen=True)
class Alphabet:
    name: str
    size: int

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(f"alphabet {self.name!r} needs size >= 1, got {self.size}")


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


class JointPmf:
    """Joint pmf over an ordered list of named finite alphabets.

    Inputs off by at most ``NORM_ATOL`` from total mass 1 are renormalized;
    anything further off is rejected rather than silently fixed.
    """

    __slots__ = ("variables", "mass")

    def __init__(self, variables: Sequence[Alphabet], mass: np.ndarray):
        variables = tuple(variables)
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise ShapeError(f"duplicate variable names: {names}")
        mass = np.asarray(mass, dtype=np.float64)
        shape = tuple(v.size for v in variables)
        if mass.shape != shape:
            raise ShapeError(f"mass shape {mass.shape} != alphabet shape {shape}")
        if mass.size and mass.min() < -NORM_ATOL:
            raise ValueError(f"negative probability {mass.min()}")
        mass = np.clip(mass, 0.0, None)
        total = mass.sum()
        if abs(total - 1.0) > NORM_ATOL:
            raise ValueError(f"pmf sums to {total}, off by more than {NORM_ATOL}")
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "mass", _freeze(mass / total))

    def __setattr__(self, *a):  # pragma: no cover - immutability guard
        raise AttributeError("JointPmf is immutable")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ShapeError(f"unknown variable {name!r}; have {self.names}") from None

    def axes(self, names: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.axis(n) for n in names)

    def var(self, name: str) -> Alphabet:
        return self.variables[self.axis(name)]

    def __repr__(self) -> str:
        dims = ", ".join(f"{v.name}:{v.size}" for v in self.variables)
        return f"JointPmf({dims})"

    def to_json(self) -> str:
        return json.dumps(
            {
                "variables": [{"name": v.name, "size": v.size} for v in self.variables],
                "mass": [float(x) for x in self.mass.reshape(-1)],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "JointPmf":
        obj = json.loads(text)
        return cls.from_dict(obj)

    @classmethod
    def from_dict(cls, obj: Mapping) -> "JointPmf":
        variables = [Alphabet(v["name"], int(v["size"])) for v in obj["variables"]]
        shape = tuple(v.size for v in variables)
        mass = np.asarray(obj["mass"], dtype=np.float64).reshape(shape)
        return cls(variables, mass)


class ConditionalPmf:
    """Conditional pmf p(output | given); row-stochastic over the output axes."""

    __slots__ = ("given", "output", "mass")

    def __init__(self, given: Sequence[Alphabet], output: Sequence[Alphabet], mass: np.ndarray):
        given, output = tuple(given), tuple(output)
        names = [v.name for v in given + output]
        if len(set(names)) != len(names):
            raise ShapeError(f"duplicate variable names: {names}")
        mass = np.asarray(mass, dtype=np.float64)
        shape = tuple(v.size for v in given + output)
        if mass.shape != shape:
            raise ShapeError(f"mass shape {mass.shape} != alphabet shape {shape}")
        if mass.size and mass.min() < -NORM_ATOL:
            raise ValueError(f"negative probability {mass.min()}")
        mass = np.clip(mass, 0.0, None)
        gsize = int(np.prod([v.size for v in given], dtype=np.int64)) if given else 1
        rows = mass.reshape(gsize, -1)
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > NORM_ATOL):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"conditional slice {bad} sums to {sums[bad]}")
        rows = rows / sums[:, None]
        object.__setattr__(self, "given", given)
        object.__setattr__(self, "output", output)
        object.__setattr__(self, "mass", _freeze(rows.reshape(shape)))

    def __setattr__(self, *a):  # pragma: no cover - immutability guard
        raise AttributeError("ConditionalPmf is immutable")

    @property
    def given_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.given)

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.output)

    def matrix(self) -> np.ndarray:
        """Row-stochastic 2-D view: (prod given sizes) x (prod output sizes)."""
        gsize = int(np.prod([v.size for v in self.given], dtype=np.int64)) if self.given else 1
        return self.mass.reshape(gsize, -1)

    def __repr__(self) -> str:
        g = ",".join(self.given_names)
        o = ",".join(self.output_names)
        return f"ConditionalPmf({o}|{g})"

    def to_json(self) -> str:
        return json.dumps(
            {
                "given": [{"name": v.name, "size": v.size} for v in self.given],
                "output": [{"name": v.name, "size": v.size} for v in self.output],
                "mass": [float(x) for x in self.mass.reshape(-1)],
            }
        )

    @classmethod
    def from_dict(cls, obj: Mapping) -> "ConditionalPmf":
        given = [Alphabet(v["name"], int(v["size"])) for v in obj["given"]]
        output = [Alphabet(v["name"], int(v["size"])) for v in obj["output"]]
        shape = tuple(v.size for v in given + output)
        mass = np.asarray(obj["mass"], dtype=np.float64).reshape(shape)
        return cls(given, output, mass)

    @classmethod
    def from_json(cls, text: str) -> "ConditionalPmf":
        return cls.from_dict(json.loads(text))


def _check_same_variables(p: JointPmf, q: JointPmf) -> None:
    if p.names != q.names or p.mass.shape != q.mass.shape:
        raise ShapeError(f"variable mismatch: {p.names}{p.mass.shape} vs {q.names}{q.mass.shape}")


def total_variation(p: JointPmf, q: JointPmf) -> float:
    """(1/2) sum |p - q| over the shared product alphabet."""
    _check_same_variables(p, q)
    return 0.5 * float(np.abs(p.mass - q.mass).sum())


def fidelity(p: JointPmf, q: JointPmf) -> float:
    """Bhattacharyya coefficient sum sqrt(p*q); 1 iff equal, 0 iff disjoint."""
    _check_same_variables(p, q)
    return float(np.sqrt(p.mass * q.mass).sum())


def _entropy_of_mass(mass: np.ndarray) -> float:
    m = mass[mass > 0.0]
    return float(-(m * np.log2(m)).sum())


def marginalize(p: JointPmf, keep: Sequence[str]) -> JointPmf:
    """Marginal over ``keep``, in the requested order. Empty keep gives the scalar 1."""
    keep = tuple(keep)
    if not keep:
        return JointPmf((Alphabet("unit", 1),), np.asarray([p.mass.sum()]))
    axes_keep = p.axes(keep)
    if len(set(axes_keep)) != len(axes_keep):
        raise ShapeError(f"duplicate names in keep: {keep}")
    drop = tuple(i for i in range(len(p.variables)) if i not in axes_keep)
    mass = p.mass.sum(axis=drop) if drop else p.mass
    # summed axes are gone; remaining axes sit in original order
    kept_sorted = sorted(axes_keep)
    mass = np.transpose(mass, axes=[kept_sorted.index(a) for a in axes_keep])
    return JointPmf(tuple(p.var(n) for n in keep), mass)


def entropy(p: JointPmf, names: Sequence[str] | None = None) -> float:
    """H of the marginal over ``names`` (all variables when omitted), in bits."""
    if names is None or tuple(names) == p.names:
        return _entropy_of_mass(p.mass)
    return _entropy_of_mass(marginalize(p, names).mass)


def entropy_conditional(p: JointPmf, target: Sequence[str], given: Sequence[str] = ()) -> float:
    """H(target | given) in bits; empty ``given`` is the plain entropy."""
    target, given = tuple(target), tuple(given)
    if set(target) & set(given):
        raise ValueError(f"target and given overlap: {set(target) & set(given)}")
    if not given:
        return entropy(p, target)
    return entropy(p, target + given) - entropy(p, given)


def mutual_information(p: JointPmf, a: Sequence[str], b: Sequence[str]) -> float:
    """I(A;B) = H(A) + H(B) - H(A,B) in bits."""
    a, b = tuple(a), tuple(b)
    if set(a) & set(b):
        raise ValueError(f"argument sets overlap: {set(a) & set(b)}")
    return entropy(p, a) + entropy(p, b) - entropy(p, a + b)


def condition(p: JointPmf, event: Mapping[str, int]) -> JointPmf:
    """Slice on ``{name: symbol}`` and renormalize; the event must have positive mass."""
    idx: list = [slice(None)] * len(p.variables)
    for name, sym in event.items():
        ax = p.axis(name)
        if not 0 <= sym < p.variables[ax].size:
            raise ValueError(f"symbol {sym} outside alphabet {name!r}")
        idx[ax] = sym
    sliced = p.mass[tuple(idx)]
    total = float(sliced.sum())
    if total <= 0.0:
        raise ZeroDivisionError(f"conditioning event {dict(event)} has zero probability")
    keep = tuple(v for v in p.variables if v.name not in event)
    if not keep:
        return JointPmf((Alphabet("unit", 1),), np.asarray([1.0]))
    return JointPmf(keep, sliced / total)


def conditional(p: JointPmf, output: Sequence[str], given: Sequence[str]) -> ConditionalPmf:
    """Extract p(output | given) as a ConditionalPmf.

    Zero-probability given-cells get a uniform row so the result stays
    row-stochastic; they never matter when recomposed against p.
    """
    output, given = tuple(output), tuple(given)
    if set(output) & set(given):
        raise ValueError("output and given overlap")
    joint = marginalize(p, given + output)
    gsizes = [p.var(n).size for n in given]
    gsize = int(np.prod(gsizes, dtype=np.int64)) if given else 1
    rows = joint.mass.reshape(gsize, -1)
    sums = rows.sum(axis=1)
    out = np.where(sums[:, None] > 0.0, rows / np.where(sums[:, None] > 0.0, sums[:, None], 1.0),
                   1.0 / rows.shape[1])
    shape = tuple(gsizes) + tuple(p.var(n).size for n in output)
    return ConditionalPmf(tuple(p.var(n) for n in given), tuple(p.var(n) for n in output),
                          out.reshape(shape))


def compose(p: JointPmf, cond: ConditionalPmf) -> JointPmf:
    """Chain rule product p(a) * q(b|a) -> joint over a's variables then b's."""
    for name in cond.given_names:
        p.axis(name)  # raises on missing
    for name in cond.output_names:
        if name in p.names:
            raise ShapeError(f"output variable {name!r} already present in the marginal")
    # align p's axes so the conditional's given variables come last, in its order
    rest = tuple(n for n in p.names if n not in cond.given_names)
    pm = np.transpose(p.mass, axes=p.axes(rest + cond.given_names))
    gshape = tuple(p.var(n).size for n in cond.given_names)
    gsize = int(np.prod(gshape, dtype=np.int64)) if gshape else 1
    joint = pm.reshape(-1, gsize)[:, :, None] * cond.matrix()[None, :, :]
    variables = tuple(p.var(n) for n in rest + cond.given_names) + cond.output
    shape = tuple(v.size for v in variables)
    return JointPmf(variables, joint.reshape(shape))


def iid_extend(p: JointPmf, n: int, max_cells: int = DEFAULT_MAX_CELLS) -> JointPmf:
    """n-fold product pmf; every variable becomes its own n-sequence (size k^n).

    Sequence indices are row-major in symbol order (first symbol most
    significant).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return p
    sizes = [v.size for v in p.variables]
    cells = 1
    for s in sizes:
        cells *= s ** n
        if cells > max_cells:
            raise CapacityError(f"iid_extend would need > {max_cells} cells")
    t = len(sizes)
    mass = p.mass
    out = mass
    for _ in range(n - 1):
        out = np.multiply.outer(out, mass)
    # axes are (rep0: v0..vT-1, rep1: v0.., ...); regroup so each variable's
    # n repetitions are adjacent, first repetition most significant
    perm = [r * t + v for v in range(t) for r in range(n)]
    out = np.transpose(out, axes=perm).reshape([s ** n for s in sizes])
    variables = tuple(Alphabet(v.name, v.size ** n) for v in p.variables)
    return JointPmf(variables, out)


def uniform(variables: Sequence[Alphabet]) -> JointPmf:
    variables = tuple(variables)
    shape = tuple(v.size for v in variables)
    cells = int(np.prod(shape, dtype=np.int64))
    return JointPmf(variables, np.full(shape, 1.0 / cells))
