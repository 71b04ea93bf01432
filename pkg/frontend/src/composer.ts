// Grid-based circuit composer model and its QASM serialization.
//
// The grid is time-steps (columns) by qubit wires (rows). A cell holds at
// most one gate glyph; two-qubit gates span two wires in one column; a
// measure glyph terminates its wire. Serialization walks columns left to
// right so the emitted program always parses on the server.

export const ONE_QUBIT_GATES = ["h", "x", "y", "z", "s", "sdg", "t", "tdg", "sx"] as const;
export const ROTATION_GATES = ["rx", "ry", "rz"] as const;
export const TWO_QUBIT_GATES = ["cx", "cz", "swap"] as const;
export const ALL_GATES = [...ONE_QUBIT_GATES, ...ROTATION_GATES, ...TWO_QUBIT_GATES, "measure"] as const;

export type GateName = (typeof ALL_GATES)[number];

export interface PlacedGate {
  name: GateName;
  step: number;
  wires: number[]; // one wire, or [first, second] for 2q gates
  param?: number; // radians, rotations only
  paramText?: string; // original angle entry, e.g. "pi/2"
}

export class ComposerError extends Error {}

const PI = Math.PI;

/** Parse an angle entry: plain numbers plus pi shortcuts like "pi/2", "-pi", "2*pi". */
export function parseAngle(text: string): number {
  const src = text.trim();
  if (!src) throw new ComposerError("angle is empty");
  let pos = 0;

  function parseExpr(): number {
    let value = parseTerm();
    while (pos < src.length && (src[pos] === "+" || src[pos] === "-")) {
      const op = src[pos++];
      const rhs = parseTerm();
      value = op === "+" ? value + rhs : value - rhs;
    }
    return value;
  }
  function parseTerm(): number {
    let value = parseFactor();
    while (pos < src.length && (src[pos] === "*" || src[pos] === "/")) {
      const op = src[pos++];
      const rhs = parseFactor();
      if (op === "/" && rhs === 0) throw new ComposerError("division by zero");
      value = op === "*" ? value * rhs : value / rhs;
    }
    return value;
  }
  function parseFactor(): number {
    while (src[pos] === " ") pos++;
    if (src[pos] === "-") {
      pos++;
      return -parseFactor();
    }
    if (src[pos] === "+") {
      pos++;
      return parseFactor();
    }
    if (src[pos] === "(") {
      pos++;
      const v = parseExpr();
      if (src[pos] !== ")") throw new ComposerError("missing )");
      pos++;
      return v;
    }
    if (src.slice(pos, pos + 2).toLowerCase() === "pi") {
      pos += 2;
      skipSpace();
      return PI;
    }
    if (src.slice(pos, pos + 1) === "π") {
      pos += 1;
      skipSpace();
      return PI;
    }
    const m = /^\d+(\.\d*)?([eE][+-]?\d+)?|^\.\d+([eE][+-]?\d+)?/.exec(src.slice(pos));
    if (!m) throw new ComposerError(`cannot read angle at "${src.slice(pos)}"`);
    pos += m[0].length;
    skipSpace();
    return parseFloat(m[0]);
  }
  function skipSpace() {
    while (src[pos] === " ") pos++;
  }

  const value = parseExpr();
  if (pos !== src.length) throw new ComposerError(`trailing input in angle "${src}"`);
  if (!Number.isFinite(value)) throw new ComposerError("angle is not finite");
  return value;
}

function isRotation(name: GateName): boolean {
  return (ROTATION_GATES as readonly string[]).includes(name);
}

function isTwoQubit(name: GateName): boolean {
  return (TWO_QUBIT_GATES as readonly string[]).includes(name);
}

export class ComposerModel {
  nWires: number;
  ops: PlacedGate[] = [];

  constructor(nWires: number) {
    if (nWires < 1) throw new ComposerError("need at least one wire");
    this.nWires = nWires;
  }

  clone(): ComposerModel {
    const copy = new ComposerModel(this.nWires);
    copy.ops = this.ops.map((op) => ({ ...op, wires: [...op.wires] }));
    return copy;
  }

  /** Step index of the measure glyph on a wire, or Infinity. */
  measureStep(wire: number): number {
    const m = this.ops.find((op) => op.name === "measure" && op.wires[0] === wire);
    return m ? m.step : Infinity;
  }

  occupied(step: number, wire: number): PlacedGate | undefined {
    return this.ops.find((op) => op.step === step && op.wires.includes(wire));
  }

  get nSteps(): number {
    return this.ops.reduce((acc, op) => Math.max(acc, op.step + 1), 0);
  }

  private validate(gate: PlacedGate): void {
    const wires = gate.wires;
    const wantTwo = isTwoQubit(gate.name);
    if (wires.length !== (wantTwo ? 2 : 1)) {
      throw new ComposerError(`${gate.name} spans ${wantTwo ? 2 : 1} wire(s)`);
    }
    if (new Set(wires).size !== wires.length) throw new ComposerError("wires must differ");
    for (const w of wires) {
      if (w < 0 || w >= this.nWires) throw new ComposerError(`wire ${w} out of range`);
      if (this.occupied(gate.step, w)) throw new ComposerError(`cell (${gate.step}, ${w}) occupied`);
      if (gate.step >= this.measureStep(w)) {
        throw new ComposerError(`wire ${w} is measured before step ${gate.step}`);
      }
    }
    if (gate.name === "measure") {
      const wire = wires[0];
      for (const op of this.ops) {
        if (op.wires.includes(wire) && op.step > gate.step) {
          throw new ComposerError(`wire ${wire} has gates after step ${gate.step}`);
        }
      }
      if (this.measureStep(wire) !== Infinity) {
        throw new ComposerError(`wire ${wire} is already measured`);
      }
    }
    if (isRotation(gate.name)) {
      if (gate.param === undefined || !Number.isFinite(gate.param)) {
        throw new ComposerError(`${gate.name} needs a finite angle`);
      }
    } else if (gate.param !== undefined) {
      throw new ComposerError(`${gate.name} takes no angle`);
    }
    if (gate.step < 0 || !Number.isInteger(gate.step)) throw new ComposerError("bad step");
  }

  /** Place a gate at an explicit grid position. */
  place(gate: PlacedGate): void {
    this.validate(gate);
    this.ops.push({ ...gate, wires: [...gate.wires] });
  }

  /** Place a gate at the earliest free column on its wires (ASAP). */
  placeAuto(name: GateName, wires: number[], param?: number, paramText?: string): PlacedGate {
    let step = 0;
    for (const w of wires) {
      for (const op of this.ops) {
        if (op.wires.includes(w)) step = Math.max(step, op.step + 1);
      }
    }
    const gate: PlacedGate = { name, step, wires: [...wires], param, paramText };
    this.place(gate);
    return gate;
  }

  removeAt(step: number, wire: number): boolean {
    const found = this.occupied(step, wire);
    if (!found) return false;
    // glyphs after a measure depend on it staying terminal; removing any
    // other gate is always safe
    this.ops = this.ops.filter((op) => op !== found);
    this.compact();
    return true;
  }

  /** Re-place every op ASAP, preserving per-wire order (no gap columns). */
  compact(): void {
    const ordered = this.orderedOps();
    this.ops = [];
    for (const op of ordered) this.placeAuto(op.name, op.wires, op.param, op.paramText);
  }

  /** Ops in column-major order: by step, then by first wire. */
  orderedOps(): PlacedGate[] {
    return [...this.ops].sort((a, b) => a.step - b.step || Math.min(...a.wires) - Math.min(...b.wires));
  }

  hasMeasure(): boolean {
    return this.ops.some((op) => op.name === "measure");
  }
}

function formatAngle(gate: PlacedGate): string {
  if (gate.paramText !== undefined) return gate.paramText;
  // full precision so the server reparses the identical double
  const v = gate.param as number;
  if (Number.isInteger(v)) return v.toFixed(1);
  return String(v);
}

/** Column-major serialization into the canonical OpenQASM 3 subset. */
export function composerToQasm(model: ComposerModel): string {
  const lines = ["OPENQASM 3;", 'include "stdgates.inc";', `qubit[${model.nWires}] q;`];
  if (model.hasMeasure()) lines.push(`bit[${model.nWires}] c;`);
  for (const op of model.orderedOps()) {
    if (op.name === "measure") {
      lines.push(`c[${op.wires[0]}] = measure q[${op.wires[0]}];`);
    } else if (op.wires.length === 2) {
      lines.push(`${op.name} q[${op.wires[0]}], q[${op.wires[1]}];`);
    } else if (isRotation(op.name)) {
      lines.push(`${op.name}(${formatAngle(op)}) q[${op.wires[0]}];`);
    } else {
      lines.push(`${op.name} q[${op.wires[0]}];`);
    }
  }
  return lines.join("\n") + "\n";
}

/** Parse the canonical subset back into a grid (ASAP placement). */
export function qasmToComposer(text: string): ComposerModel {
  let nWires = 0;
  const statements: { name: GateName; wires: number[]; param?: number; paramText?: string }[] = [];
  for (let rawLine of text.split(/[;\n]+/)) {
    const line = rawLine.replace(/\/\/.*$/, "").trim();
    if (!line || line.startsWith("OPENQASM") || line.startsWith("include")) continue;
    let m = /^qubit\[(\d+)\]\s+\w+$/.exec(line);
    if (m) {
      nWires = parseInt(m[1], 10);
      continue;
    }
    if (/^bit\[(\d+)\]\s+\w+$/.test(line)) continue;
    m = /^(\w+)\[(\d+)\]\s*=\s*measure\s+\w+\[(\d+)\]$/.exec(line);
    if (m) {
      const clbit = parseInt(m[2], 10);
      const wire = parseInt(m[3], 10);
      if (clbit !== wire) throw new ComposerError("composer only represents c[w] = measure q[w]");
      statements.push({ name: "measure", wires: [wire] });
      continue;
    }
    m = /^barrier\b/.exec(line);
    if (m) throw new ComposerError("composer has no barrier glyph");
    m = /^(\w+)\s*(\(([^)]*)\))?\s+(.+)$/.exec(line);
    if (!m) throw new ComposerError(`cannot read statement: ${line}`);
    const name = m[1] as GateName;
    if (!(ALL_GATES as readonly string[]).includes(name)) {
      throw new ComposerError(`composer has no glyph for '${name}'`);
    }
    const wires = [...m[4].matchAll(/\w+\[(\d+)\]/g)].map((g) => parseInt(g[1], 10));
    const st: { name: GateName; wires: number[]; param?: number; paramText?: string } = { name, wires };
    if (m[3] !== undefined) {
      st.param = parseAngle(m[3]);
      st.paramText = m[3].trim();
    }
    statements.push(st);
  }
  if (nWires < 1) throw new ComposerError("program declares no qubits");
  const model = new ComposerModel(nWires);
  for (const st of statements) model.placeAuto(st.name, st.wires, st.param, st.paramText);
  return model;
}
