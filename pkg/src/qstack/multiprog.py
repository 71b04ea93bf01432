"""Manual multi-programming: pack circuits onto disjoint device regions.

Regions are grown by BFS over free qubits (largest circuit first, ties by
array order) so each sub-circuit lands on a connected patch; clbits are
packed in array order. Splitting projects combined counts back onto each
sub-circuit's clbits.
"""

from __future__ import annotations

from dataclasses import dataclass

from .circuits import Gate, QuantumCircuit
from .devices import Counts, DeviceSpec


class MultiprogError(ValueError):
    pass


class InsufficientQubits(MultiprogError):
    pass


class NoConnectedRegion(MultiprogError):
    pass


class KeyLengthMismatch(MultiprogError):
    pass


@dataclass(frozen=True)
class SubPlan:
    qubit_map: tuple[int, ...]  # sub-circuit qubit i -> combined physical qubit
    clbit_map: tuple[int, ...]  # sub-circuit clbit j -> combined clbit


@dataclass(frozen=True)
class CombinePlan:
    sub_plans: tuple[SubPlan, ...]
    combined_n_qubits: int
    combined_n_clbits: int

    def to_json(self) -> dict:
        return {
            "sub_plans": [
                {"qubit_map": list(s.qubit_map), "clbit_map": list(s.clbit_map)}
                for s in self.sub_plans
            ],
            "combined_n_qubits": self.combined_n_qubits,
            "combined_n_clbits": self.combined_n_clbits,
        }


def _grow_region(device: DeviceSpec, free: set, size: int) -> list[int]:
    """First-k prefix of a BFS over free qubits, seeded at the lowest free index."""
    for seed in sorted(free):
        order = [seed]
        seen = {seed}
        i = 0
        while i < len(order) and len(order) < size:
            for nb in device.topology.neighbors(order[i]):
                if nb in free and nb not in seen:
                    seen.add(nb)
                    order.append(nb)
                    if len(order) == size:
                        break
            i += 1
        if len(order) >= size:
            return order[:size]
    raise NoConnectedRegion(
        f"no connected region of {size} free qubits on device {device.id}"
    )


def combine(circuits, device: DeviceSpec) -> tuple[QuantumCircuit, CombinePlan]:
    """Concatenate circuits onto disjoint connected regions of one device."""
    circuits = list(circuits)
    if not circuits:
        raise MultiprogError("no circuits to combine")
    for i, c in enumerate(circuits):
        if not c.gates:
            raise MultiprogError(f"sub-circuit {i} has no gates")
    total = sum(c.n_qubits for c in circuits)
    if total > device.n_qubits:
        raise InsufficientQubits(
            f"{total} qubits requested, device {device.id} has {device.n_qubits}"
        )

    free = set(range(device.n_qubits))
    regions: dict[int, list[int]] = {}
    for i in sorted(range(len(circuits)), key=lambda i: (-circuits[i].n_qubits, i)):
        region = _grow_region(device, free, circuits[i].n_qubits)
        free -= set(region)
        regions[i] = region

    sub_plans = []
    offset = 0
    gates: list[Gate] = []
    for i, c in enumerate(circuits):
        qmap = tuple(regions[i])
        cmap = tuple(range(offset, offset + c.n_clbits))
        sub_plans.append(SubPlan(qubit_map=qmap, clbit_map=cmap))
        for g in c.gates:
            if g.name == "measure":
                gates.append(Gate("measure", (qmap[g.qubits[0]],), clbit=offset + g.clbit))
            elif g.name == "barrier":
                # a bare barrier stays local to its own region
                ops = tuple(qmap[q] for q in g.qubits) if g.qubits else qmap
                gates.append(Gate("barrier", ops))
            else:
                gates.append(Gate(g.name, tuple(qmap[q] for q in g.qubits), g.params))
        offset += c.n_clbits

    combined = QuantumCircuit(device.n_qubits, offset, tuple(gates))
    plan = CombinePlan(tuple(sub_plans), device.n_qubits, offset)
    return combined, plan


def split_counts(combined: Counts, plan: CombinePlan) -> list[Counts]:
    """Project combined counts onto each sub-circuit's clbits (shots conserved)."""
    width = plan.combined_n_clbits
    for key in combined.counts:
        if len(key) != width:
            raise KeyLengthMismatch(f"key {key!r} has {len(key)} bits, plan has {width} clbits")
    out = []
    for sub in plan.sub_plans:
        n_i = len(sub.clbit_map)
        acc: dict[str, int] = {}
        for key, cnt in combined.counts.items():
            chars = ["0"] * n_i
            for j, m in enumerate(sub.clbit_map):
                chars[n_i - 1 - j] = key[width - 1 - m]
            sub_key = "".join(chars)
            acc[sub_key] = acc.get(sub_key, 0) + cnt
        out.append(Counts(acc, combined.shots))
    return out
