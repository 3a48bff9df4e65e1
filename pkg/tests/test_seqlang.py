import math

import numpy as np
import pytest

from nvnmr import seqlang as S
from nvnmr.dynamics import Adjoint, Delay, Flip, Pulse, sequence_unitary, initial_state
from nvnmr.operators import P_ALPHA
from nvnmr.protocols import AcquisitionGrid, CpParams, fid_protocol

ECHO = "seq echo(tau: time) { pulse(90deg, x); delay(tau); pulse(180deg, y); delay(tau); pulse(90deg, x); }"


def test_parse_echo():
    prog = S.parse(ECHO)
    assert prog.name == "echo"
    assert len(prog.body) == 5
    assert prog.params == (S.Param("tau", "time"),)


def test_xy8_pattern_phases():
    prog = S.parse("seq a(tau: time, N: count) { repeat(N, xy8) { delay(tau/2); "
                   "pulse(180deg, @pattern); delay(tau/2); } }")
    seq = S.bind_and_expand(prog, {"tau": 1e-7, "N": 8})
    phases = [round(math.degrees(e.phase)) for e in seq.elements if isinstance(e, Pulse)]
    assert phases == [0, 90, 0, 90, 90, 0, 90, 0]


def test_repeat_literal_xy8():
    prog = S.parse("seq a() { repeat(8, xy8) { pulse(180deg, @pattern); } }")
    seq = S.bind_and_expand(prog, {})
    assert len(seq.elements) == 8


def test_repeat_one_delay():
    prog = S.parse("seq a() { repeat(1) { delay(5ns); } }")
    assert S.bind_and_expand(prog, {}).elements == (Delay(5e-9),)


def test_explicit_pattern_list():
    prog = S.parse("seq a() { repeat(4, [x -x y 45deg]) { pulse(180deg, @pattern); } }")
    phases = [e.phase for e in S.bind_and_expand(prog, {}).elements]
    assert phases == pytest.approx([0, math.pi, math.pi / 2, math.pi / 4])


@pytest.mark.parametrize(
    "text, line, col, fragment",
    [
        ("seq a(t: time) {\n  delay(t)\n}", 3, 1, "expected ';'"),
        ("seq a(t: time, t: time) {}", 1, 16, "duplicate parameter"),
        ("seq a() { delay(5fs); }", 1, 18, "unknown unit"),
        ("seq a() { delay(5$); }", 1, 18, "unexpected character"),
        ("seq a() { delay(5deg); }", 1, 17, "must be time"),
        ("seq a() { delay(5); }", 1, 17, "must be time"),
        ("seq a() { delay(q); }", 1, 17, "unknown parameter"),
        ("seq a() { pulse(1ns, x); }", 1, 17, "must be angle"),
        ("seq a(t: time) { delay(t + 1deg); }", 1, 24, "cannot add"),
        ("seq a() { wobble; }", 1, 11, "expected a statement"),
        ("seq a() { delay(1ns);", 1, 22, "unterminated block"),
        ("seq a(x: time) {}", 1, 7, "reserved"),
    ],
)
def test_errors_carry_position(text, line, col, fragment):
    with pytest.raises(S.SeqError) as err:
        S.parse(text)
    assert (err.value.line, err.value.col) == (line, col)
    assert fragment in err.value.message
    assert str(err.value).startswith(f"{line}:{col}: ")


def test_binding_errors():
    prog = S.parse("seq a(tau: time, N: count) { repeat(N) { delay(tau); } }")
    with pytest.raises(S.SeqError, match="unbound"):
        S.bind_and_expand(prog, {"tau": 1e-9})
    with pytest.raises(S.SeqError, match="integer"):
        S.bind_and_expand(prog, {"tau": 1e-9, "N": 2.5})
    with pytest.raises(S.SeqError, match="negative duration"):
        S.bind_and_expand(prog, {"tau": -1e-9, "N": 2})
    with pytest.raises(S.SeqError, match=">= 1"):
        S.bind_and_expand(prog, {"tau": 1e-9, "N": 0})
    with pytest.raises(S.SeqError, match="unknown argument"):
        S.bind_and_expand(prog, {"tau": 1e-9, "N": 1, "M": 2})
    with pytest.raises(S.SeqError, match="@pattern"):
        S.bind_and_expand(S.parse("seq a() { pulse(180deg, @pattern); }"), {})


def test_expression_precedence_and_units():
    prog = S.parse("seq a(tau: time) { delay(tau - 2 * 10ns / 4); delay(-(-tau)); }")
    d1, d2 = S.bind_and_expand(prog, {"tau": 100e-9}).elements
    assert d1.duration == pytest.approx(95e-9)
    assert d2.duration == pytest.approx(100e-9)


def test_flip_and_adjoint_statements():
    prog = S.parse("seq a() { flip; adjoint { pulse(90deg, y); delay(1us); } }")
    seq = S.bind_and_expand(prog, {})
    assert isinstance(seq.elements[0], Flip)
    assert isinstance(seq.elements[1], Adjoint)
    assert len(seq.elements[1].body) == 2


def test_format_round_trip_library():
    for name in S.LIBRARY:
        prog = S.load_library(name)
        text = S.format_program(prog)
        assert S.parse(text) == prog
        assert S.format_program(S.parse(text)) == text


def test_format_nested_and_precedence():
    src = ("seq n(a: time, b: time, k: count) { repeat(k, [x y]) { repeat(2) { "
           "delay(a - (b - a)); delay((a + b) / 2); pulse(90deg, @pattern, a / (k * 2)); } } }")
    prog = S.parse(src)
    assert S.parse(S.format_program(prog)) == prog


def test_substitute_then_expand_equals_expand():
    prog = S.load_library("fid_h2")
    args = {"tau": 121.8e-9, "N": 4, "t1": 3e-7, "cycle": math.pi / 2}
    partial = S.substitute(prog, {"tau": args["tau"]})
    rest = {k: v for k, v in args.items() if k != "tau"}
    assert S.bind_and_expand(partial, rest) == S.bind_and_expand(prog, args)


def test_parse_value():
    assert S.parse_value("121.8ns", "time") == pytest.approx(121.8e-9)
    assert S.parse_value("8", "count") == 8
    assert S.parse_value("-90deg", "angle") == pytest.approx(-math.pi / 2)
    with pytest.raises(S.SeqError):
        S.parse_value("8ns", "count")
    with pytest.raises(S.SeqError):
        S.parse_value("abc")


def test_xy8_schedule():
    seq = S.bind_and_expand(S.load_library("xy8"), {"tau": 121.8e-9, "N": 8})
    rows = S.schedule(seq)
    kinds = [r[1] for r in rows]
    assert kinds.count("pulse") == 8 and kinds.count("delay") == 16
    assert seq.duration == pytest.approx(8 * 121.8e-9)
    assert rows[-1][0] + rows[-1][4] == pytest.approx(8 * 121.8e-9)


def test_library_fid_h2_reproduces_protocol(ref_system):
    tau = ref_system.resonant_tau(0)
    n = 26
    grid = AcquisitionGrid(0.0, 1.3e-7, 6)
    ref = fid_protocol(ref_system, CpParams(n, tau), "H2", grid)
    prog = S.load_library("fid_h2")
    rho0 = initial_state(ref_system)
    proj = np.kron(P_ALPHA, np.eye(2))
    for i, t1 in enumerate(grid.times):
        p = []
        for cycle in (math.pi / 2, 3 * math.pi / 2):
            seq = S.bind_and_expand(prog, {"tau": tau, "N": n, "t1": t1, "cycle": cycle})
            u = sequence_unitary(seq, ref_system)
            p.append(np.trace(proj @ u @ rho0 @ u.conj().T).real)
        assert (p[0] - p[1]) / 2 == pytest.approx(ref.values[i], abs=1e-12)


def test_unknown_library_name():
    with pytest.raises(KeyError):
        S.load_library("nope")
