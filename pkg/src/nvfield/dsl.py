"""Parser for the pulse-sequence mini-language.

Grammar::

    seq   := "init" ";" (step ";")* "read" level [";"]
    step  := "pulse" pol angle | "free" ("tau" | NUMBER unit)
    pol   := "plus" | "minus" | "linear"
    angle := "pi" | "pi/2" | NUMBER "rad"
    level := "p0" | "p+1" | "p-1"

Whitespace is insignificant and ``#`` starts a comment running to end of line.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Union

POLARIZATIONS = ("plus", "minus", "linear")
LEVELS = {"p0": 0, "p+1": 1, "p-1": -1}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9, "ps": 1e-12}


class SequenceSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Init:
    pass


@dataclass(frozen=True)
class Pulse:
    polarization: str
    angle: float


@dataclass(frozen=True)
class Free:
    duration: Optional[float] = None  # None means the swept tau

    @property
    def symbolic(self) -> bool:
        return self.duration is None


@dataclass(frozen=True)
class Read:
    level: int


Step = Union[Init, Pulse, Free, Read]


@dataclass(frozen=True)
class PulseSequence:
    steps: tuple
    name: str = ""

    def __post_init__(self):
        if not self.steps or not isinstance(self.steps[0], Init):
            raise ValueError("sequence must begin with init")
        if not isinstance(self.steps[-1], Read):
            raise ValueError("sequence must end with read")

    @property
    def read_level(self) -> int:
        return self.steps[-1].level

    @property
    def body(self) -> tuple:
        return self.steps[1:-1]

    @property
    def n_symbolic(self) -> int:
        return sum(1 for s in self.body if isinstance(s, Free) and s.symbolic)

    @property
    def is_sweep(self) -> bool:
        return self.n_symbolic >= 1


_TOKEN = re.compile(r"\s*(?:(#[^\n]*)|(;)|([^\s;#]+))")


def _tokenize(text: str):
    tokens = []
    pos = 0
    line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def where(offset):
        ln = 0
        while ln + 1 < len(line_starts) and line_starts[ln + 1] <= offset:
            ln += 1
        return ln + 1, offset - line_starts[ln] + 1

    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        if m.group(2) or m.group(3):
            start = m.start(2) if m.group(2) else m.start(3)
            tokens.append((m.group(2) or m.group(3), *where(start)))
        pos = m.end()
    return tokens, where(len(text))


class _Parser:
    def __init__(self, text: str):
        self.tokens, self.eof = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self, what: str):
        tok = self.peek()
        if tok is None:
            raise SequenceSyntaxError(f"unexpected end of input, expected {what}", *self.eof)
        self.i += 1
        return tok

    def expect(self, literal: str):
        tok = self.take(repr(literal))
        if tok[0].lower() != literal:
            raise SequenceSyntaxError(f"expected {literal!r}, found {tok[0]!r}", tok[1], tok[2])
        return tok

    def parse(self) -> list:
        first = self.peek()
        if first is None:
            raise SequenceSyntaxError("empty sequence", *self.eof)
        if first[0].lower() != "init":
            raise SequenceSyntaxError(f"sequence must start with 'init', found {first[0]!r}",
                                      first[1], first[2])
        self.take("init")
        self.expect(";")
        steps: list = [Init()]
        while True:
            tok = self.take("a step or 'read'")
            word = tok[0].lower()
            if word == "read":
                steps.append(self.read_level())
                break
            if word == "pulse":
                steps.append(self.pulse())
            elif word == "free":
                steps.append(self.free())
            elif word == "init":
                raise SequenceSyntaxError("duplicate 'init'", tok[1], tok[2])
            else:
                raise SequenceSyntaxError(f"unknown step {tok[0]!r}", tok[1], tok[2])
            self.expect(";")
        tail = self.peek()
        if tail is not None and tail[0] == ";":
            self.i += 1
            tail = self.peek()
        if tail is not None:
            raise SequenceSyntaxError(f"unexpected {tail[0]!r} after 'read'", tail[1], tail[2])
        return steps

    def pulse(self) -> Pulse:
        tok = self.take("polarization")
        pol = tok[0].lower()
        if pol not in POLARIZATIONS:
            raise SequenceSyntaxError(f"unknown polarization {tok[0]!r}", tok[1], tok[2])
        tok = self.take("angle")
        word = tok[0].lower()
        if word == "pi":
            return Pulse(pol, math.pi)
        if word == "pi/2":
            return Pulse(pol, math.pi / 2)
        value = self.number(tok)
        self.expect("rad")
        if value < 0:
            raise SequenceSyntaxError("pulse angle must be >= 0", tok[1], tok[2])
        return Pulse(pol, value)

    def free(self) -> Free:
        tok = self.take("'tau' or duration")
        if tok[0].lower() == "tau":
            return Free(None)
        glued = re.fullmatch(r"([-+0-9.eE]+)([a-zµ]+)", tok[0])
        if glued and glued.group(2).lower() in TIME_UNITS:
            value = self.number((glued.group(1), tok[1], tok[2]))
            unit_tok = (glued.group(2), tok[1], tok[2] + len(glued.group(1)))
        else:
            value = self.number(tok)
            unit_tok = self.take("time unit")
        unit = TIME_UNITS.get(unit_tok[0].lower())
        if unit is None:
            raise SequenceSyntaxError(f"unknown time unit {unit_tok[0]!r}", unit_tok[1], unit_tok[2])
        if value < 0:
            raise SequenceSyntaxError("free duration must be >= 0", tok[1], tok[2])
        return Free(value * unit)

    def read_level(self) -> Read:
        tok = self.take("readout level")
        level = LEVELS.get(tok[0].lower())
        if level is None:
            raise SequenceSyntaxError(f"unknown readout level {tok[0]!r}", tok[1], tok[2])
        return Read(level)

    @staticmethod
    def number(tok) -> float:
        try:
            value = float(tok[0])
        except ValueError:
            raise SequenceSyntaxError(f"expected a number, found {tok[0]!r}", tok[1], tok[2]) from None
        if not math.isfinite(value):
            raise SequenceSyntaxError("number must be finite", tok[1], tok[2])
        return value


def parse_sequence(text: str, name: str = "") -> PulseSequence:
    """Parse DSL text into an immutable :class:`PulseSequence`."""
    return PulseSequence(tuple(_Parser(text).parse()), name=name)


def format_sequence(seq: PulseSequence) -> str:
    parts = ["init"]
    for step in seq.body:
        if isinstance(step, Pulse):
            angle = {math.pi: "pi", math.pi / 2: "pi/2"}.get(step.angle, f"{step.angle!r} rad")
            parts.append(f"pulse {step.polarization} {angle}")
        elif step.symbolic:
            parts.append("free tau")
        else:
            parts.append(f"free {step.duration!r} s")
    level = {0: "p0", 1: "p+1", -1: "p-1"}[seq.read_level]
    parts.append(f"read {level}")
    return "; ".join(parts)


FID_XI_PERP = "init; pulse plus pi; free tau; pulse plus pi; read p0"
FID_PHI_E = "init; pulse linear pi; free tau; pulse plus pi; read p0"
FID_XI_Z = "init; pulse minus pi/2; free tau; pulse minus pi/2; read p0"
HAHN = "init; pulse plus pi; free tau; pulse plus pi; free tau; pulse plus pi; read p0"

BUILTIN = {
    "fid_xi_perp": FID_XI_PERP,
    "fid_phi_e": FID_PHI_E,
    "fid_xi_z": FID_XI_Z,
    "hahn": HAHN,
}


def builtin(name: str) -> PulseSequence:
    try:
        return parse_sequence(BUILTIN[name], name=name)
    except KeyError:
        raise KeyError(f"unknown built-in sequence {name!r}; choose from {sorted(BUILTIN)}") from None
