"""Property-based checks over random systems, sequences, signals and programs."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from nvnmr import seqlang as S
from nvnmr.constants import UNITARY_ATOL
from nvnmr.dynamics import (
    Delay,
    Pulse,
    PulseSequence,
    Repeat,
    evolve,
    initial_state,
    sequence_unitary,
)
from nvnmr.protocols import AcquisitionGrid, CpParams, fid_protocol, multipulse_sweep
from nvnmr.spectra import fold, transform, unalias
from nvnmr.spinsys import ISOTOPES, FreeHamiltonianKind, Nucleus, SpinSystem

FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

nuclei = st.builds(
    Nucleus,
    st.sampled_from(sorted(ISOTOPES)).map(ISOTOPES.get),
    st.floats(-5e6, 5e6),
    st.floats(0, 5e5),
)
systems = st.builds(SpinSystem, st.floats(0.05, 1.0), st.lists(nuclei, max_size=3).map(tuple))

elements = st.one_of(
    st.builds(Pulse, st.floats(0.01, 2 * math.pi), st.floats(0, 2 * math.pi),
              st.sampled_from([0.0, 1e-8, 2.5e-8])),
    st.builds(Delay, st.floats(0, 1e-6)),
)
sequences = st.lists(elements, min_size=1, max_size=6).flatmap(
    lambda body: st.integers(1, 20).map(lambda n: PulseSequence((Repeat(n, tuple(body)),) + tuple(body)))
)


@FAST
@given(systems, sequences)
def test_unitarity_and_trace(system, seq):
    u = sequence_unitary(seq, system)
    assert np.abs(u.conj().T @ u - np.eye(system.dim)).max() < UNITARY_ATOL
    rho = evolve(initial_state(system), u)
    assert abs(np.trace(rho).real - 1) < 1e-12
    assert np.abs(rho - rho.conj().T).max() < 1e-12


@FAST
@given(systems, st.integers(1, 8).map(lambda k: 8 * k), st.floats(0.0, 2e-8))
def test_multipulse_probability_bounds(system, n, d):
    sig = multipulse_sweep(system, AcquisitionGrid(1e-7, 7e-9, 3), n, "XY8", d)
    assert np.all(sig.values >= -1e-12) and np.all(sig.values <= 1 + 1e-12)


@FAST
@given(st.floats(0.1, 0.5), st.floats(-2e6, 2e6), st.floats(0, 3e5),
       st.sampled_from(["H1", "H2", "H3"]), st.integers(1, 20).map(lambda k: 2 * k))
def test_fid_probability_bounds(b0, apar, aperp, kind, n):
    system = SpinSystem(b0, (Nucleus(ISOTOPES["1H"], apar, aperp),))
    tau = system.resonant_tau(0)
    if not tau > 0:
        return
    k = FreeHamiltonianKind(kind, tau if kind == "H3" else None)
    sig = fid_protocol(system, CpParams(n, abs(tau)), k, AcquisitionGrid(0, 3.1e-7, 4), phase_cycle=False)
    assert np.all(sig.values >= -1e-12) and np.all(sig.values <= 1 + 1e-12)
    assert np.all(np.abs(sig.nuclear) <= 0.5 + 1e-12)


@FAST
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=300))
def test_parseval(ys):
    y = np.asarray(ys)
    spec = transform((np.arange(len(y)) * 1e-7, y), remove_dc=False)
    e_time = float(np.sum(y**2))
    assert abs(spec.energy() - e_time) <= 1e-9 * max(e_time, 1e-300)


@FAST
@given(st.floats(1e3, 2e7), st.floats(1e-8, 2e-6))
def test_unalias_contains_true_frequency(f, dwell):
    cands = unalias(fold(f, dwell), dwell, (0.0, 2.5e7))
    assert any(abs(c - f) <= 1e-6 * max(f, 1 / dwell) for c in cands)


# -- seqlang programs ---------------------------------------------------------

names = st.sampled_from(["tau", "t1", "d"])
times = st.one_of(
    st.builds(S.Num, st.integers(0, 999).map(float), st.sampled_from(["ns", "us"])),
    names.map(S.Ref),
)


def time_expr(depth=2):
    if depth == 0:
        return times
    sub = time_expr(depth - 1)
    scalars = st.builds(S.Num, st.integers(1, 9).map(float))
    return st.one_of(
        times,
        st.builds(S.BinOp, st.sampled_from(["+", "-"]), sub, sub),
        st.builds(S.BinOp, st.just("*"), scalars, sub),
        st.builds(S.BinOp, st.just("/"), sub, scalars),
        st.builds(S.Neg, sub),
    )


angles = st.builds(S.Num, st.integers(1, 360).map(float), st.just("deg"))
phases = st.one_of(st.sampled_from(["x", "y", "-x", "-y"]).map(S.NamedPhase), angles)


def statements(depth=2):
    leaf = st.one_of(
        st.builds(S.PulseStmt, angles, phases, st.one_of(st.none(), time_expr(1))),
        st.builds(S.DelayStmt, time_expr()),
        st.just(S.FlipStmt()),
    )
    if depth == 0:
        return leaf
    body = st.lists(statements(depth - 1), min_size=1, max_size=3).map(tuple)
    pattern = st.one_of(st.none(), st.sampled_from(["xy8", "cp"]).map(S.Pattern))
    return st.one_of(
        leaf,
        st.builds(S.RepeatStmt, st.builds(S.Num, st.integers(1, 4).map(float)), pattern, body),
        st.builds(S.AdjointStmt, body),
    )


programs = st.builds(
    S.SeqProgram,
    st.sampled_from(["p", "prog_1"]),
    st.just((S.Param("tau", "time"), S.Param("t1", "time"), S.Param("d", "time"))),
    st.lists(statements(), max_size=5).map(tuple),
)


@settings(max_examples=150, deadline=None)
@given(programs)
def test_format_parse_round_trip(prog):
    text = S.format_program(prog)
    back = S.parse(text)
    assert back == prog
    assert S.format_program(back) == text


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=80))
def test_parser_never_crashes(text):
    try:
        S.parse(text)
    except S.SeqError as exc:
        assert exc.line is not None and exc.col is not None


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="seqpulsdayrtfi(){};,:@[]-+*/ 0123456789nsdegxy\n", max_size=80))
def test_parser_fuzz_near_grammar(text):
    try:
        S.parse(text)
    except S.SeqError as exc:
        assert exc.line is not None and exc.col is not None
