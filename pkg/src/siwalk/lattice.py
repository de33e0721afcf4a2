"""Sparse signed fields on the integer lattice Z^d.

A field maps finitely many lattice points to real weights.  These carry
occupation probabilities, expansion coefficients, and differences thereof,
so entries may be negative and exact cancellation matters: weights are
never pruned implicitly, only by an explicit :meth:`SignedField.normalize`.

All reductions (convolution, Fourier sums, moments) run in lexicographic
order of the support, which makes results bit-reproducible across runs
and worker counts.
"""

from __future__ import annotations

import json
from typing import Iterable, Iterator, Mapping

import numpy as np

Coords = tuple[int, ...]

PRUNE_TOL = 1e-15


class DimensionMismatchError(ValueError):
    """Two fields with different lattice dimensions were combined."""


def _check_same_dim(a: "SignedField", b: "SignedField") -> None:
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimension mismatch: {a.dim} vs {b.dim}")


class SignedField:
    """Finitely supported real-valued function on Z^d."""

    __slots__ = ("dim", "entries")

    def __init__(self, dim: int, entries: Mapping[Coords, float] | None = None):
        if dim < 1:
            raise ValueError(f"dimension must be >= 1, got {dim}")
        self.dim = dim
        self.entries: dict[Coords, float] = {}
        if entries:
            for x, w in entries.items():
                x = tuple(int(c) for c in x)
                if len(x) != dim:
                    raise DimensionMismatchError(
                        f"point {x} has {len(x)} coordinates, expected {dim}")
                self.entries[x] = self.entries.get(x, 0.0) + float(w)

    @classmethod
    def delta(cls, point: Iterable[int]) -> "SignedField":
        """Point mass of weight 1 at ``point``."""
        pt = tuple(int(c) for c in point)
        return cls(len(pt), {pt: 1.0})

    # -- basic accessors -------------------------------------------------

    def __getitem__(self, x: Coords) -> float:
        return self.entries.get(tuple(x), 0.0)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[Coords, float]]:
        return iter(sorted(self.entries.items()))

    def support(self) -> list[Coords]:
        return sorted(self.entries)

    def support_radius(self) -> int:
        """Sup-norm radius of the support."""
        r = 0
        for x in self.entries:
            r = max(r, max(abs(c) for c in x))
        return r

    def copy(self) -> "SignedField":
        out = SignedField(self.dim)
        out.entries = dict(self.entries)
        return out

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other: "SignedField") -> "SignedField":
        _check_same_dim(self, other)
        out = self.copy()
        for x in sorted(other.entries):
            out.entries[x] = out.entries.get(x, 0.0) + other.entries[x]
        return out

    def __sub__(self, other: "SignedField") -> "SignedField":
        _check_same_dim(self, other)
        out = self.copy()
        for x in sorted(other.entries):
            out.entries[x] = out.entries.get(x, 0.0) - other.entries[x]
        return out

    def scale(self, c: float) -> "SignedField":
        out = SignedField(self.dim)
        out.entries = {x: c * w for x, w in self.entries.items()}
        return out

    def normalize(self, tol: float = PRUNE_TOL) -> "SignedField":
        """Drop entries with |weight| <= tol.  The only pruning pass."""
        out = SignedField(self.dim)
        out.entries = {x: w for x, w in self.entries.items() if abs(w) > tol}
        return out

    def translate(self, v: Iterable[int]) -> "SignedField":
        v = tuple(int(c) for c in v)
        if len(v) != self.dim:
            raise DimensionMismatchError(
                f"shift {v} has {len(v)} coordinates, expected {self.dim}")
        out = SignedField(self.dim)
        out.entries = {
            tuple(a + b for a, b in zip(x, v)): w for x, w in self.entries.items()
        }
        return out

    def max_abs(self) -> float:
        return max((abs(w) for w in self.entries.values()), default=0.0)

    def total_abs_mass(self) -> float:
        return sum(abs(self.entries[x]) for x in sorted(self.entries))

    # -- the three core reductions --------------------------------------

    def convolve(self, other: "SignedField") -> "SignedField":
        """(f*g)(x) = sum_y f(y) g(x-y), summed in lexicographic order."""
        _check_same_dim(self, other)
        out = SignedField(self.dim)
        acc = out.entries
        g_items = sorted(other.entries.items())
        for y, fy in sorted(self.entries.items()):
            for z, gz in g_items:
                x = tuple(a + b for a, b in zip(y, z))
                acc[x] = acc.get(x, 0.0) + fy * gz
        return out

    def fourier(self, k: Iterable[float]) -> complex:
        """Exact finite sum sum_x e^{i k.x} f(x)."""
        kv = np.asarray(list(k), dtype=float)
        if kv.shape != (self.dim,):
            raise DimensionMismatchError(
                f"wavevector has shape {kv.shape}, expected ({self.dim},)")
        total = 0.0 + 0.0j
        for x in sorted(self.entries):
            total += self.entries[x] * np.exp(1j * float(np.dot(kv, x)))
        return total

    def moments(self) -> tuple[float, np.ndarray, np.ndarray]:
        """Return (mass, sum_x x f(x), sum_x x x^T f(x))."""
        mass = 0.0
        first = np.zeros(self.dim)
        second = np.zeros((self.dim, self.dim))
        for x in sorted(self.entries):
            w = self.entries[x]
            xv = np.asarray(x, dtype=float)
            mass += w
            first += w * xv
            second += w * np.outer(xv, xv)
        return mass, first, second

    # -- serialization ---------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "dim": self.dim,
            "entries": [[list(x), self.entries[x]] for x in sorted(self.entries)],
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "SignedField":
        out = cls(int(obj["dim"]))
        for coords, w in obj["entries"]:
            pt = tuple(int(c) for c in coords)
            out.entries[pt] = out.entries.get(pt, 0.0) + float(w)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    def to_csv_rows(self) -> list[str]:
        header = ",".join(f"x{i+1}" for i in range(self.dim)) + ",weight"
        rows = [header]
        for x in sorted(self.entries):
            rows.append(",".join(str(c) for c in x) + f",{self.entries[x]!r}")
        return rows

    def __repr__(self) -> str:
        return f"SignedField(dim={self.dim}, npoints={len(self.entries)})"


def fourier_pair_check(f: SignedField, k: Iterable[float]) -> float:
    """|f^(k)| never exceeds the total absolute mass; returns the slack."""
    return f.total_abs_mass() - abs(f.fourier(k))
