import math

import pytest
from hypothesis import given, strategies as st

from nvfield.dsl import (BUILTIN, Free, Init, Pulse, Read, SequenceSyntaxError, builtin,
                         format_sequence, parse_sequence)


def test_fid_sequence_has_five_steps():
    seq = parse_sequence("init; pulse plus pi; free tau; pulse plus pi; read p0")
    assert seq.steps == (Init(), Pulse("plus", math.pi), Free(None), Pulse("plus", math.pi), Read(0))
    assert seq.is_sweep and seq.n_symbolic == 1


def test_minimal_sequence():
    seq = parse_sequence("init; read p0")
    assert len(seq.steps) == 2 and not seq.is_sweep


def test_whitespace_comments_and_units():
    text = """
    init;            # start in |0>
    pulse minus pi/2;
    free 100 ns; free 0.5us; free 2 µs;
    pulse linear 1.25 rad;
    free tau;
    read p-1;
    """
    seq = parse_sequence(text)
    frees = [s for s in seq.body if isinstance(s, Free)]
    assert [f.duration for f in frees[:3]] == pytest.approx([100e-9, 0.5e-6, 2e-6])
    assert frees[3].symbolic
    assert seq.read_level == -1
    assert seq.body[-2] == Pulse("linear", 1.25)


@pytest.mark.parametrize("text,line,col,fragment", [
    ("pulse plus pi", 1, 1, "init"),
    ("init; pulse circular pi; read p0", 1, 13, "polarization"),
    ("init; pulse plus pi; free tau", 1, 30, "end of input"),
    ("init;\ninit; read p0", 2, 1, "duplicate"),
    ("init; wait 5 ns; read p0", 1, 7, "unknown step"),
    ("init; free 5 fortnights; read p0", 1, 14, "time unit"),
    ("init; read p2", 1, 12, "readout level"),
    ("init; read p0; pulse plus pi", 1, 16, "after 'read'"),
    ("", 1, 1, "empty"),
])
def test_syntax_errors_have_locations(text, line, col, fragment):
    with pytest.raises(SequenceSyntaxError) as exc:
        parse_sequence(text)
    assert exc.value.line == line
    assert exc.value.column == col
    assert fragment in str(exc.value)


def test_negative_duration_rejected():
    with pytest.raises(SequenceSyntaxError):
        parse_sequence("init; free -5 ns; read p0")


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_builtins_roundtrip_through_formatter(name):
    seq = builtin(name)
    again = parse_sequence(format_sequence(seq), name=name)
    assert again == seq


def test_unknown_builtin():
    with pytest.raises(KeyError):
        builtin("ramsey")


step = st.one_of(
    st.builds(Pulse, st.sampled_from(["plus", "minus", "linear"]),
              st.one_of(st.just(math.pi), st.just(math.pi / 2), st.floats(0, 10))),
    st.builds(Free, st.one_of(st.none(), st.floats(0, 1e-3))),
)


@given(st.lists(step, max_size=8), st.sampled_from([0, 1, -1]))
def test_format_parse_roundtrip(body, level):
    from nvfield.dsl import PulseSequence
    seq = PulseSequence((Init(), *body, Read(level)))
    assert parse_sequence(format_sequence(seq)) == seq
