"""Pauli-string observables and the text label format.

An observable is a real-weighted sum of Pauli strings; a label such as
"X 0 X 1" alternates Pauli letters with qubit indices (the empty label is
the identity term).
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class OperatorError(ValueError):
    pass


class MalformedLabel(OperatorError):
    pass


class DuplicateQubitInLabel(OperatorError):
    pass


@dataclass(frozen=True)
class PauliString:
    """Map qubit index -> letter in {X, Y, Z}; absent indices are identity."""

    paulis: tuple = ()

    def __post_init__(self):
        seen = set()
        for q, letter in self.paulis:
            if letter not in ("X", "Y", "Z"):
                raise OperatorError(f"bad Pauli letter {letter!r}")
            if q < 0:
                raise OperatorError(f"negative qubit index {q}")
            if q in seen:
                raise DuplicateQubitInLabel(f"qubit {q} appears twice")
            seen.add(q)
        object.__setattr__(self, "paulis", tuple(sorted(self.paulis)))

    @staticmethod
    def from_dict(mapping) -> "PauliString":
        return PauliString(tuple((int(q), s) for q, s in mapping.items()))

    @staticmethod
    def from_label(label: str) -> "PauliString":
        tokens = label.split()
        if len(tokens) % 2 != 0:
            raise MalformedLabel(f"label {label!r} must alternate letters and indices")
        pairs = []
        for letter, index in zip(tokens[::2], tokens[1::2]):
            up = letter.upper()
            if up not in ("X", "Y", "Z", "I"):
                raise MalformedLabel(f"bad Pauli letter {letter!r} in {label!r}")
            if not index.isdigit():
                raise MalformedLabel(f"bad qubit index {index!r} in {label!r}")
            if up == "I":
                # identity on an explicit qubit: contributes nothing but still
                # claims the index for duplicate detection
                pairs.append((int(index), None))
            else:
                pairs.append((int(index), up))
        seen = set()
        for q, _ in pairs:
            if q in seen:
                raise DuplicateQubitInLabel(f"qubit {q} appears twice in {label!r}")
            seen.add(q)
        return PauliString(tuple((q, s) for q, s in pairs if s is not None))

    def label(self) -> str:
        return " ".join(f"{s} {q}" for q, s in self.paulis)

    def get(self, qubit: int):
        for q, s in self.paulis:
            if q == qubit:
                return s
        return None

    @property
    def support(self) -> tuple:
        return tuple(q for q, _ in self.paulis)

    @property
    def is_identity(self) -> bool:
        return not self.paulis

    def items(self):
        return iter(self.paulis)

    def __len__(self):
        return len(self.paulis)


IDENTITY = PauliString()


class Observable:
    """Real-weighted sum of Pauli strings; duplicate terms merge, exact-zero sums are pruned."""

    def __init__(self, terms=None):
        merged: dict[PauliString, float] = {}
        for pauli, coeff in (terms or {}).items() if isinstance(terms, dict) else (terms or []):
            coeff = float(coeff)
            if not math.isfinite(coeff):
                raise OperatorError(f"non-finite coefficient {coeff!r}")
            merged[pauli] = merged.get(pauli, 0.0) + coeff
        self._terms = {p: c for p, c in merged.items() if c != 0.0}

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return iter(sorted(self._terms.items(), key=lambda kv: kv[0].paulis))

    def coefficient(self, pauli: PauliString) -> float:
        return self._terms.get(pauli, 0.0)

    @property
    def identity_coefficient(self) -> float:
        return self._terms.get(IDENTITY, 0.0)

    @property
    def n_qubits(self) -> int:
        return max((q + 1 for p in self._terms for q in p.support), default=0)

    def __len__(self):
        return len(self._terms)

    def __eq__(self, other):
        return isinstance(other, Observable) and self._terms == other._terms

    def __add__(self, other: "Observable") -> "Observable":
        combined = list(self._terms.items()) + list(other._terms.items())
        return Observable(combined)

    def __mul__(self, scalar: float) -> "Observable":
        return Observable([(p, c * scalar) for p, c in self._terms.items()])

    __rmul__ = __mul__

    def __repr__(self):
        inner = ", ".join(f"{p.label() or 'I'}: {c}" for p, c in self.items())
        return f"Observable({{{inner}}})"

    def to_pairs(self) -> list:
        return [[p.label(), c] for p, c in self.items()]


def parse_operator(pairs) -> Observable:
    """Build an Observable from [label, coefficient] pairs, merging duplicates."""
    terms = []
    for label, coeff in pairs:
        terms.append((PauliString.from_label(label), float(coeff)))
    return Observable(terms)
