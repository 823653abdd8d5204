"""Finite and Gaussian probability objects.

Everything here is immutable.  Finite objects keep zero-probability atoms so
that singular parts of a divergence are measured against the declared support.
"""

from __future__ import annotations

import json
import numbers
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Sequence

import numpy as np

MASS_TOL = 1e-12


class DistributionError(ValueError):
    """Invalid probability object or incompatible supports."""


def _atom_key(atom: Hashable) -> tuple:
    if isinstance(atom, numbers.Real):
        return (0, float(atom), "")
    if isinstance(atom, tuple):
        return (1, 0.0, tuple(_atom_key(a) for a in atom))
    return (2, 0.0, repr(atom))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _from_jsonable(atom: Any) -> Hashable:
    if isinstance(atom, list):
        return tuple(_from_jsonable(a) for a in atom)
    return atom


def _to_jsonable(atom: Hashable) -> Any:
    if isinstance(atom, tuple):
        return [_to_jsonable(a) for a in atom]
    if isinstance(atom, np.generic):
        return atom.item()
    return atom


@dataclass(frozen=True, eq=False)
class FiniteDist:
    """Probability mass function on an explicit, canonically sorted support."""

    support: tuple
    probs: np.ndarray

    def __init__(self, support: Iterable[Hashable], probs: Iterable[float]):
        atoms = tuple(support)
        p = np.asarray(list(probs) if not isinstance(probs, np.ndarray) else probs, dtype=float)
        if p.ndim != 1 or len(atoms) != p.size:
            raise DistributionError("support and probs must have equal length")
        if p.size == 0:
            raise DistributionError("empty support")
        if len(set(atoms)) != len(atoms):
            raise DistributionError("atoms must be distinct")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise DistributionError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > MASS_TOL:
            raise DistributionError(f"probabilities sum to {p.sum()!r}, not 1")
        order = sorted(range(len(atoms)), key=lambda i: _atom_key(atoms[i]))
        object.__setattr__(self, "support", tuple(atoms[i] for i in order))
        object.__setattr__(self, "probs", _frozen(p[order]))

    @classmethod
    def point(cls, atom: Hashable) -> "FiniteDist":
        return cls([atom], [1.0])

    @classmethod
    def bernoulli(cls, p: float) -> "FiniteDist":
        return cls([0, 1], [1.0 - p, p])

    @classmethod
    def uniform(cls, support: Sequence[Hashable]) -> "FiniteDist":
        return cls(support, np.full(len(support), 1.0 / len(support)))

    def __len__(self) -> int:
        return len(self.support)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FiniteDist):
            return NotImplemented
        return self.support == other.support and np.array_equal(self.probs, other.probs)

    def __hash__(self) -> int:
        return hash((self.support, self.probs.tobytes()))

    def prob(self, atom: Hashable) -> float:
        try:
            return float(self.probs[self.support.index(atom)])
        except ValueError:
            return 0.0

    def coordinates(self) -> np.ndarray:
        """Real coordinates of the atoms; raises if an atom is not a real number."""
        if not all(isinstance(a, numbers.Real) for a in self.support):
            raise DistributionError("atoms carry no real coordinate")
        return np.array([float(a) for a in self.support])

    def expect(self, values: Sequence[float] | np.ndarray) -> float:
        return float(np.dot(self.probs, np.asarray(values, dtype=float)))

    def extend(self, support: Sequence[Hashable]) -> "FiniteDist":
        """Same measure on a larger support; new atoms get probability zero."""
        extra = [a for a in support if a not in set(self.support)]
        return FiniteDist(self.support + tuple(extra), np.concatenate([self.probs, np.zeros(len(extra))]))

    def to_json(self) -> dict:
        return {"support": [_to_jsonable(a) for a in self.support], "probs": self.probs.tolist()}

    @classmethod
    def from_json(cls, obj: dict | str) -> "FiniteDist":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls([_from_jsonable(a) for a in obj["support"]], obj["probs"])


def align(p: FiniteDist, q: FiniteDist) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Probability vectors of ``p`` and ``q`` on the union of their supports."""
    if p.support == q.support:
        return p.probs, q.probs, p.support
    union = tuple(sorted(set(p.support) | set(q.support), key=_atom_key))
    pa = p.extend(union)
    qa = q.extend(union)
    return pa.probs, qa.probs, pa.support


@dataclass(frozen=True)
class Decomposition:
    """Lebesgue decomposition of ``p`` relative to ``q`` on a finite support."""

    support: tuple
    continuous: np.ndarray
    singular_mass: float

    @property
    def continuous_mass(self) -> float:
        return float(self.continuous.sum())


def decompose_relative(p: FiniteDist, q: FiniteDist) -> Decomposition:
    pv, qv, support = align(p, q)
    on_q = qv > 0
    continuous = _frozen(np.where(on_q, pv, 0.0))
    return Decomposition(support, continuous, float(pv[~on_q].sum()))


@dataclass(frozen=True, eq=False)
class FiniteKernel:
    """Conditional law of W given Z: one distribution over W per input atom."""

    inputs: tuple
    support_w: tuple
    matrix: np.ndarray  # shape (len(support_w), len(inputs)); column z is P(W | Z=z)

    def __init__(self, inputs: Iterable[Hashable], rows: Sequence[FiniteDist]):
        inputs = tuple(inputs)
        if len(inputs) != len(rows):
            raise DistributionError("one row per input atom required")
        if len(set(inputs)) != len(inputs):
            raise DistributionError("input atoms must be distinct")
        union = tuple(sorted(set().union(*(r.support for r in rows)), key=_atom_key))
        cols = [r.extend(union).probs for r in rows]
        order = sorted(range(len(inputs)), key=lambda i: _atom_key(inputs[i]))
        object.__setattr__(self, "inputs", tuple(inputs[i] for i in order))
        object.__setattr__(self, "support_w", union)
        object.__setattr__(self, "matrix", _frozen(np.column_stack([cols[i] for i in order])))

    def row(self, z: Hashable) -> FiniteDist:
        return FiniteDist(self.support_w, self.matrix[:, self.inputs.index(z)])

    @classmethod
    def constant(cls, inputs: Sequence[Hashable], dist: FiniteDist) -> "FiniteKernel":
        return cls(inputs, [dist] * len(inputs))

    @classmethod
    def deterministic(cls, mapping: dict) -> "FiniteKernel":
        return cls(list(mapping), [FiniteDist.point(v) for v in mapping.values()])


@dataclass(frozen=True, eq=False)
class FiniteJoint:
    """Joint pmf on W x Z stored as a ``(|W|, |Z|)`` matrix."""

    support_w: tuple
    support_z: tuple
    matrix: np.ndarray

    def __init__(self, support_w: Iterable[Hashable], support_z: Iterable[Hashable], matrix):
        sw, sz = tuple(support_w), tuple(support_z)
        m = np.asarray(matrix, dtype=float)
        if m.shape != (len(sw), len(sz)):
            raise DistributionError(f"matrix shape {m.shape} does not match supports")
        if len(set(sw)) != len(sw) or len(set(sz)) != len(sz):
            raise DistributionError("atoms must be distinct")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise DistributionError("joint entries must be finite and nonnegative")
        if abs(m.sum() - 1.0) > MASS_TOL:
            raise DistributionError(f"joint mass {m.sum()!r} is not 1")
        ow = sorted(range(len(sw)), key=lambda i: _atom_key(sw[i]))
        oz = sorted(range(len(sz)), key=lambda i: _atom_key(sz[i]))
        object.__setattr__(self, "support_w", tuple(sw[i] for i in ow))
        object.__setattr__(self, "support_z", tuple(sz[i] for i in oz))
        object.__setattr__(self, "matrix", _frozen(m[np.ix_(ow, oz)]))

    @classmethod
    def product(cls, pw: FiniteDist, pz: FiniteDist) -> "FiniteJoint":
        return cls(pw.support, pz.support, np.outer(pw.probs, pz.probs))

    def flat(self) -> FiniteDist:
        """The joint as a distribution over ``(w, z)`` pairs."""
        atoms = [(w, z) for w in self.support_w for z in self.support_z]
        return FiniteDist(atoms, self.matrix.ravel())

    def grid(self, fn) -> np.ndarray:
        """Evaluate ``fn(w, z)`` on the support grid, shape ``(|W|, |Z|)``."""
        return np.array([[fn(w, z) for z in self.support_z] for w in self.support_w], dtype=float)

    def same_supports(self, other: "FiniteJoint") -> bool:
        return self.support_w == other.support_w and self.support_z == other.support_z

    def to_json(self) -> dict:
        return {
            "supportW": [_to_jsonable(a) for a in self.support_w],
            "supportZ": [_to_jsonable(a) for a in self.support_z],
            "matrix": self.matrix.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict | str) -> "FiniteJoint":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(
            [_from_jsonable(a) for a in obj["supportW"]],
            [_from_jsonable(a) for a in obj["supportZ"]],
            obj["matrix"],
        )


def marginal(joint: FiniteJoint, axis: str) -> FiniteDist:
    """Marginal of ``joint`` on ``"W"`` or ``"Z"``."""
    if axis.upper() == "W":
        return FiniteDist(joint.support_w, joint.matrix.sum(axis=1))
    if axis.upper() == "Z":
        return FiniteDist(joint.support_z, joint.matrix.sum(axis=0))
    raise ValueError(f"axis must be 'W' or 'Z', got {axis!r}")


def compose(kernel: FiniteKernel, source: FiniteDist) -> FiniteJoint:
    """Joint law ``kernel(w|z) * source(z)``."""
    if kernel.inputs != source.support:
        raise DistributionError("kernel inputs differ from the input distribution's support")
    return FiniteJoint(kernel.support_w, kernel.inputs, kernel.matrix * source.probs[None, :])


def conditional(joint: FiniteJoint) -> FiniteKernel:
    """Kernel P(W | Z) of a joint; Z atoms with zero mass get the W-marginal."""
    pz = joint.matrix.sum(axis=0)
    pw = marginal(joint, "W")
    rows = []
    for j, z in enumerate(joint.support_z):
        if pz[j] > 0:
            col = joint.matrix[:, j] / pz[j]
            rows.append(FiniteDist(joint.support_w, col / col.sum()))
        else:
            rows.append(pw)
    return FiniteKernel(joint.support_z, rows)


# --------------------------------------------------------------------------
# Gaussians


def _is_pd(cov: np.ndarray, tol: float = 1e-10) -> bool:
    return all(np.linalg.det(cov[:k, :k]) > tol for k in range(1, cov.shape[0] + 1))


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Multivariate normal with diagonal or full covariance.

    A full covariance must be symmetric; it must be positive definite unless
    ``allow_singular`` is set (the degenerate ``n = 1`` joint of the
    Gaussian experiment is the only intended use).
    """

    mean: np.ndarray
    cov_diag: np.ndarray
    full_cov: np.ndarray | None = None
    singular: bool = field(default=False)

    def __init__(self, mean, cov_diag=None, full_cov=None, allow_singular: bool = False):
        m = np.atleast_1d(np.asarray(mean, dtype=float))
        if full_cov is not None:
            c = np.atleast_2d(np.asarray(full_cov, dtype=float))
            if c.shape != (m.size, m.size):
                raise DistributionError("covariance shape does not match mean")
            if not np.allclose(c, c.T, atol=1e-12):
                raise DistributionError("covariance must be symmetric")
            diag = np.diag(c).copy()
            pd = _is_pd(c)
            if not pd:
                eig = np.linalg.eigvalsh(c)
                if not allow_singular or eig.min() < -1e-10:
                    raise DistributionError("covariance is not positive definite")
            object.__setattr__(self, "full_cov", _frozen(c))
            object.__setattr__(self, "singular", not pd)
        else:
            if cov_diag is None:
                raise DistributionError("need cov_diag or full_cov")
            diag = np.broadcast_to(np.asarray(cov_diag, dtype=float), m.shape).copy()
            if np.any(diag <= 0):
                raise DistributionError("variances must be positive")
            object.__setattr__(self, "full_cov", None)
            object.__setattr__(self, "singular", False)
        if np.any(diag <= 0):
            raise DistributionError("variances must be positive")
        object.__setattr__(self, "mean", _frozen(m))
        object.__setattr__(self, "cov_diag", _frozen(diag))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def cov(self) -> np.ndarray:
        return self.full_cov if self.full_cov is not None else np.diag(self.cov_diag)
