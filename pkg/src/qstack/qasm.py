"""OpenQASM 3 subset parser and canonical emitter.

Supported statements: the version line, `include "stdgates.inc";`, one
`qubit[n]` and at most one `bit[n]` declaration, applications of the
supported gate set, `c[i] = measure q[j];`, and `barrier`. Classical
control flow, custom gate definitions, and physical-qubit syntax are
rejected as unsupported rather than as syntax errors.
"""

from __future__ import annotations

import math
import re

from .circuits import GATE_SIGNATURES, Gate, QuantumCircuit


class QasmError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        where = f" (line {line}, column {col})" if line else ""
        super().__init__(message + where)


class QasmSyntaxError(QasmError):
    """Input does not scan/parse as the supported grammar."""


class UnsupportedConstruct(QasmError):
    """Valid OpenQASM 3 that this subset deliberately rejects."""


class IndexOutOfRange(QasmError):
    """Register index beyond the declared size."""


_UNSUPPORTED_KEYWORDS = {
    "if", "else", "for", "while", "gate", "def", "defcal", "cal", "reset",
    "input", "output", "const", "gphase", "ctrl", "inv", "pow", "delay",
    "box", "duration", "stretch", "extern", "let", "array", "angle", "int",
    "uint", "float", "bool", "complex", "qreg", "creg", "U", "switch",
    "return", "while", "durationof", "sizeof",
}

# stdgates members outside the supported set: recognized, rejected as unsupported
_UNSUPPORTED_GATES = {
    "p", "u1", "u2", "u3", "cy", "ch", "cp", "crx", "cry", "crz", "cu",
    "ccx", "cswap", "id", "phase", "cphase", "rxx", "ryy", "rzz", "sxdg", "csx",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>//[^\n]*)
  | (?P<newline>\n)
  | (?P<number>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_$][A-Za-z_0-9]*)
  | (?P<string>"[^"\n]*")
  | (?P<sym>==|->|[\[\](){},;=+\-*/:@])
    """,
    re.VERBOSE,
)


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col

    def __repr__(self):
        return f"{self.kind}:{self.text!r}"


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QasmSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok = m.group()
        if kind == "newline":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(tok)
        else:
            tokens.append(_Token(kind, tok, line, col))
            col += len(tok)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise QasmSyntaxError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def fail_unsupported(self, tok: _Token, what: str):
        raise UnsupportedConstruct(f"unsupported construct: {what}", tok.line, tok.col)

    # expression grammar for gate angles: + - * / pi, parentheses, literals
    def parse_expr(self) -> float:
        val = self.parse_term()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            rhs = self.parse_term()
            val = val + rhs if op == "+" else val - rhs
        return val

    def parse_term(self) -> float:
        val = self.parse_factor()
        while self.peek().text in ("*", "/"):
            op = self.next().text
            rhs = self.parse_factor()
            if op == "*":
                val = val * rhs
            else:
                if rhs == 0:
                    tok = self.peek()
                    raise QasmSyntaxError("division by zero in angle expression", tok.line, tok.col)
                val = val / rhs
        return val

    def parse_factor(self) -> float:
        tok = self.next()
        if tok.text == "-":
            return -self.parse_factor()
        if tok.text == "+":
            return self.parse_factor()
        if tok.text == "(":
            val = self.parse_expr()
            self.expect(")")
            return val
        if tok.kind == "number":
            return float(tok.text)
        if tok.text in ("pi", "π"):
            return math.pi
        if tok.text == "tau":
            return 2 * math.pi
        if tok.text == "euler":
            return math.e
        raise QasmSyntaxError(f"expected a number in angle expression, found {tok.text!r}", tok.line, tok.col)

    def parse_index(self, reg_name: str, declared: dict) -> int:
        name_tok = self.next()
        if name_tok.kind != "name":
            raise QasmSyntaxError(f"expected a register name, found {name_tok.text!r}", name_tok.line, name_tok.col)
        if name_tok.text.startswith("$"):
            self.fail_unsupported(name_tok, "physical qubit operands")
        if name_tok.text != reg_name:
            raise QasmSyntaxError(f"unknown register {name_tok.text!r}", name_tok.line, name_tok.col)
        self.expect("[")
        idx_tok = self.next()
        if idx_tok.kind != "number" or "." in idx_tok.text or "e" in idx_tok.text.lower():
            raise QasmSyntaxError(f"expected an integer index, found {idx_tok.text!r}", idx_tok.line, idx_tok.col)
        self.expect("]")
        idx = int(idx_tok.text)
        if idx >= declared[reg_name]:
            raise IndexOutOfRange(
                f"index {idx} out of range for {reg_name}[{declared[reg_name]}]", idx_tok.line, idx_tok.col
            )
        return idx


def parse_qasm(text: str) -> QuantumCircuit:
    """Parse the supported OpenQASM 3 subset into a circuit.

    Declaration order fixes qubit/clbit numbering. Raises QasmSyntaxError,
    UnsupportedConstruct, or IndexOutOfRange with line/column info; circuit
    invariant violations (e.g. a gate on an already-measured qubit)
    propagate as CircuitError.
    """
    p = _Parser(text)
    qreg: str | None = None
    creg: str | None = None
    sizes: dict[str, int] = {}
    gates: list[Gate] = []

    def require_qreg(tok):
        if qreg is None:
            raise QasmSyntaxError("no qubit register declared yet", tok.line, tok.col)

    while True:
        tok = p.peek()
        if tok.kind == "eof":
            break
        if tok.text == "OPENQASM":
            p.next()
            ver = p.next()
            if ver.text not in ("3", "3.0"):
                raise UnsupportedConstruct(f"unsupported OPENQASM version {ver.text!r}", ver.line, ver.col)
            p.expect(";")
            continue
        if tok.text == "include":
            p.next()
            inc = p.next()
            if inc.kind != "string":
                raise QasmSyntaxError("include expects a quoted path", inc.line, inc.col)
            if inc.text != '"stdgates.inc"':
                p.fail_unsupported(inc, f"include of {inc.text}")
            p.expect(";")
            continue
        if tok.text in ("qubit", "bit"):
            kw = p.next()
            p.expect("[")
            size_tok = p.next()
            if size_tok.kind != "number" or "." in size_tok.text:
                raise QasmSyntaxError("register size must be an integer", size_tok.line, size_tok.col)
            size = int(size_tok.text)
            p.expect("]")
            name_tok = p.next()
            if name_tok.kind != "name":
                raise QasmSyntaxError("expected register name", name_tok.line, name_tok.col)
            p.expect(";")
            if kw.text == "qubit":
                if qreg is not None:
                    p.fail_unsupported(kw, "more than one qubit register")
                if size < 1:
                    raise QasmSyntaxError("qubit register must have positive size", size_tok.line, size_tok.col)
                qreg = name_tok.text
            else:
                if creg is not None:
                    p.fail_unsupported(kw, "more than one bit register")
                if size < 1:
                    raise QasmSyntaxError("bit register must have positive size", size_tok.line, size_tok.col)
                creg = name_tok.text
            sizes[name_tok.text] = size
            continue
        if tok.text == "barrier":
            p.next()
            require_qreg(tok)
            qubits = []
            if p.peek().text != ";":
                qubits.append(p.parse_index(qreg, sizes))
                while p.peek().text == ",":
                    p.next()
                    qubits.append(p.parse_index(qreg, sizes))
            p.expect(";")
            gates.append(Gate("barrier", tuple(qubits)))
            continue
        if tok.text in _UNSUPPORTED_KEYWORDS:
            p.fail_unsupported(tok, f"'{tok.text}' statements")
        if tok.kind == "name" and creg is not None and tok.text == creg:
            # c[i] = measure q[j];
            clbit = p.parse_index(creg, sizes)
            p.expect("=")
            m = p.next()
            if m.text != "measure":
                raise QasmSyntaxError(f"expected 'measure', found {m.text!r}", m.line, m.col)
            require_qreg(m)
            qubit = p.parse_index(qreg, sizes)
            p.expect(";")
            gates.append(Gate("measure", (qubit,), clbit=clbit))
            continue
        if tok.text == "measure":
            raise QasmSyntaxError("measure must assign into a bit: c[i] = measure q[j];", tok.line, tok.col)
        if tok.kind == "name" and tok.text in GATE_SIGNATURES:
            name_tok = p.next()
            name = name_tok.text
            require_qreg(name_tok)
            _, n_params = GATE_SIGNATURES[name]
            params: list[float] = []
            if p.peek().text == "(":
                p.next()
                params.append(p.parse_expr())
                while p.peek().text == ",":
                    p.next()
                    params.append(p.parse_expr())
                p.expect(")")
            if len(params) != n_params:
                raise QasmSyntaxError(
                    f"{name} takes {n_params} parameter(s), got {len(params)}", name_tok.line, name_tok.col
                )
            qubits = [p.parse_index(qreg, sizes)]
            while p.peek().text == ",":
                p.next()
                qubits.append(p.parse_index(qreg, sizes))
            p.expect(";")
            n_qubits_expected, _ = GATE_SIGNATURES[name]
            if len(qubits) != n_qubits_expected:
                raise QasmSyntaxError(
                    f"{name} takes {n_qubits_expected} qubit(s), got {len(qubits)}", name_tok.line, name_tok.col
                )
            gates.append(Gate(name, tuple(qubits), tuple(params)))
            continue
        if tok.kind == "name" and tok.text in _UNSUPPORTED_GATES:
            p.fail_unsupported(tok, f"gate '{tok.text}'")
        raise QasmSyntaxError(f"unexpected token {tok.text!r}", tok.line, tok.col)

    if qreg is None:
        last = p.tokens[-1]
        raise QasmSyntaxError("program declares no qubit register", last.line, last.col)
    return QuantumCircuit(sizes[qreg], sizes.get(creg, 0) if creg else 0, tuple(gates))


def _fmt_angle(v: float) -> str:
    # repr round-trips the exact double (17 significant digits where needed)
    return repr(float(v))


def emit_qasm(circuit: QuantumCircuit) -> str:
    """Serialize to canonical one-statement-per-line OpenQASM 3.

    parse_qasm(emit_qasm(c)) is structurally equal to c.
    """
    lines = ['OPENQASM 3;', 'include "stdgates.inc";', f"qubit[{circuit.n_qubits}] q;"]
    if circuit.n_clbits:
        lines.append(f"bit[{circuit.n_clbits}] c;")
    for g in circuit.gates:
        if g.name == "measure":
            lines.append(f"c[{g.clbit}] = measure q[{g.qubits[0]}];")
        elif g.name == "barrier":
            ops = ", ".join(f"q[{q}]" for q in g.qubits)
            lines.append(f"barrier {ops};" if ops else "barrier;")
        else:
            params = f"({', '.join(_fmt_angle(x) for x in g.params)})" if g.params else ""
            ops = ", ".join(f"q[{q}]" for q in g.qubits)
            lines.append(f"{g.name}{params} {ops};")
    return "\n".join(lines) + "\n"
