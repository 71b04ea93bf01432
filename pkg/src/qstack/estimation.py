"""Expectation-value estimation from basis-rotated sampling.

The observable is split into qubit-wise-commuting groups (greedy, largest
|coefficient| first); each group gets one measurement circuit (X -> h,
Y -> sdg;h, Z -> bare measure) and an equal share of the shot budget. Term
expectations are parity averages of the sampled (optionally mitigated)
distribution, recombined with their coefficients on the classical side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .circuits import Gate, QuantumCircuit
from .devices import Counts, DeviceSpec
from .mitigation import QuasiDistribution, build_mitigator, matrices_for_measures
from .operators import Observable, PauliString
from .simulator import RNG_ALGORITHM, sample
from .transpiler import TranspilerRegistry, transpile


class EstimationError(ValueError):
    pass


class BaseCircuitHasMeasurements(EstimationError):
    pass


class UnmeasuredSupportQubit(EstimationError):
    pass


@dataclass(frozen=True)
class MeasurementGroup:
    """Shared measurement basis plus the terms it covers."""

    basis: PauliString
    terms: tuple  # of (PauliString, float)

    def __post_init__(self):
        if self.basis.is_identity:
            raise EstimationError("a measurement group needs at least one non-identity letter")
        for pauli, _ in self.terms:
            for q, letter in pauli.items():
                if self.basis.get(q) != letter:
                    raise EstimationError(
                        f"term {pauli.label()!r} is not qubit-wise compatible with basis {self.basis.label()!r}"
                    )


def group_terms(observable: Observable) -> tuple[list[MeasurementGroup], float]:
    """Greedy qubit-wise-commuting grouping, descending |coefficient|.

    Returns (groups, identity_constant); every non-identity term lands in
    exactly one group.
    """
    identity_constant = observable.identity_coefficient
    ordered = sorted(
        ((p, c) for p, c in observable.terms.items() if not p.is_identity),
        key=lambda pc: (-abs(pc[1]), pc[0].paulis),
    )
    bases: list[dict] = []
    members: list[list] = []
    for pauli, coeff in ordered:
        placed = False
        for basis, terms in zip(bases, members):
            if all(basis.get(q, letter) == letter for q, letter in pauli.items()):
                basis.update(dict(pauli.items()))
                terms.append((pauli, coeff))
                placed = True
                break
        if not placed:
            bases.append(dict(pauli.items()))
            members.append([(pauli, coeff)])
    groups = [
        MeasurementGroup(basis=PauliString.from_dict(b), terms=tuple(t))
        for b, t in zip(bases, members)
    ]
    return groups, identity_constant


def measurement_circuit(base: QuantumCircuit, group: MeasurementGroup) -> QuantumCircuit:
    """Append basis rotations and measurements for one group.

    Qubits with a non-identity letter are measured into clbits in
    ascending qubit order (clbit k = k-th smallest measured qubit).
    """
    if base.measurements:
        raise BaseCircuitHasMeasurements("base circuit already measures")
    support = sorted(group.basis.support)
    if support and support[-1] >= base.n_qubits:
        raise EstimationError(
            f"observable acts on qubit {support[-1]}, circuit has {base.n_qubits} qubits"
        )
    extra: list[Gate] = []
    for q in support:
        letter = group.basis.get(q)
        if letter == "X":
            extra.append(Gate("h", (q,)))
        elif letter == "Y":
            extra.append(Gate("sdg", (q,)))
            extra.append(Gate("h", (q,)))
    for k, q in enumerate(support):
        extra.append(Gate("measure", (q,), clbit=k))
    return QuantumCircuit(base.n_qubits, len(support), base.gates + tuple(extra))


def expectation_from_counts(data, pauli: PauliString, clbit_of: dict) -> float:
    """Parity average of a sampled distribution for one Pauli term.

    `data` is Counts or a QuasiDistribution (raw weights when mitigation is
    on); `clbit_of` maps each support qubit to the clbit holding its
    measured bit.
    """
    if isinstance(data, Counts):
        weights = data.probabilities()
        width = data.n_clbits
    elif isinstance(data, QuasiDistribution):
        weights = data.raw
        width = data.n_clbits
    else:
        raise EstimationError(f"cannot take expectations over {type(data).__name__}")
    positions = []
    for q in pauli.support:
        if q not in clbit_of:
            raise UnmeasuredSupportQubit(f"qubit {q} of {pauli.label()!r} was not measured")
        positions.append(width - 1 - clbit_of[q])
    value = 0.0
    for key, w in weights.items():
        parity = sum(key[p] == "1" for p in positions) & 1
        value += -w if parity else w
    return value


@dataclass
class EstimationOutcome:
    value: float
    identity_constant: float
    per_group: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "identity_constant": self.identity_constant,
            "per_group": self.per_group,
            "rng": RNG_ALGORITHM,
        }


def estimate(
    circuit: QuantumCircuit,
    observable: Observable,
    shots: int,
    device: DeviceSpec,
    seed: int,
    *,
    noise: bool = True,
    mitigation: bool = False,
    transpiler_name: str = "default",
    transpiler_options=None,
    registry: TranspilerRegistry | None = None,
) -> EstimationOutcome:
    """Estimate <psi|H|psi> by sampling one circuit per measurement group.

    Shots are split equally across groups (remainder to earlier groups);
    group g samples with seed + g. An identity-only observable returns its
    constant with zero device executions.
    """
    if circuit.measurements:
        raise BaseCircuitHasMeasurements("estimation circuit must not measure")
    groups, identity_constant = group_terms(observable)
    outcome = EstimationOutcome(value=identity_constant, identity_constant=identity_constant)
    if not groups:
        return outcome
    if shots < len(groups):
        raise EstimationError(f"{shots} shots cannot cover {len(groups)} measurement groups")
    base_shots, remainder = divmod(shots, len(groups))
    for g, group in enumerate(groups):
        g_shots = base_shots + (1 if g < remainder else 0)
        mc = measurement_circuit(circuit, group)
        tr = transpile(mc, device, transpiler_name, transpiler_options, registry)
        counts = sample(tr.circuit, g_shots, seed + g, device, noise=noise)
        if mitigation:
            mats = matrices_for_measures(device, tr.circuit)
            data = build_mitigator(mats).apply(counts)
        else:
            data = counts
        clbit_of = {q: k for k, q in enumerate(sorted(group.basis.support))}
        term_values = []
        for pauli, coeff in group.terms:
            expectation = expectation_from_counts(data, pauli, clbit_of)
            outcome.value += coeff * expectation
            term_values.append({"pauli": pauli.label(), "coefficient": coeff, "expectation": expectation})
        outcome.per_group.append(
            {
                "basis": group.basis.label(),
                "shots": g_shots,
                "counts": dict(counts.counts),
                "terms": term_values,
            }
        )
    return outcome
