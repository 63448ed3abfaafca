"""Trace parts, tail-state singular parts, norm bounds, and the quotient."""

import numpy as np
import pytest

from commlab import (
    FunctionalSpec,
    HermitianTuple,
    NotConverged,
    OperatorModelSpec,
    PredualElement,
    SampleSpec,
    TracePart,
    combine,
    coordinate_tail_states,
    detect_limit,
    e_norm_max,
    eval_functional,
    eval_singular_part,
    eval_trace_part,
    functional_norm_bounds,
    instantiate_model,
    pairing,
    quotient_norm_bounds,
    reduce_to_trace,
    schatten,
)

G2 = schatten(2)
EMPTY = np.zeros((0, 0), dtype=np.complex128)


def diag_pair():
    """Single-operator tuple diag(0, 1) with zero bandwidth."""
    return HermitianTuple.from_matrices([np.diag([0.0, 1.0])], bandwidth=0)


def random_block(rng, s):
    return rng.standard_normal((s, s)) + 1j * rng.standard_normal((s, s))


def embed(block, dim):
    out = np.zeros((dim, dim), dtype=np.complex128)
    out[: block.shape[0], : block.shape[0]] = block
    return out


# -------------------------------------------------------- limit detection


def test_detect_limit_constant_sequence():
    assert detect_limit([3.0] * 8) == 3.0


def test_detect_limit_too_short():
    with pytest.raises(NotConverged) as err:
        detect_limit([1.0] * 5)
    assert err.value.sequence == (1.0,) * 5


def test_detect_limit_unknown_rule():
    with pytest.raises(ValueError):
        detect_limit([0.0] * 8, rule="median")


# ------------------------------------------------------------ trace parts


def test_eval_picks_out_matrix_entry():
    tau = diag_pair()
    tp = TracePart(x=np.array([[1.0]]), ys=(EMPTY,), gauge=G2)
    rng = np.random.default_rng(41)
    s = random_block(rng, 2)
    s = (s + s.conj().T) / 2
    assert eval_trace_part(tp, tau, s) == pytest.approx(s[0, 0], abs=1e-14)


def test_eval_commutator_slot_hand_example():
    tau = diag_pair()
    y = np.array([[0.0, 0.0], [1.0, 0.0]])  # single 1 at (2,1)
    tp = TracePart(x=EMPTY, ys=(y,), gauge=G2)
    rng = np.random.default_rng(42)
    s = random_block(rng, 2)
    s = (s + s.conj().T) / 2
    assert eval_trace_part(tp, tau, s) == pytest.approx(-s[0, 1], abs=1e-14)


def test_eval_refuses_oversized_supports():
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 8)
    tp = TracePart(x=np.eye(9), ys=(EMPTY, EMPTY), gauge=G2)
    with pytest.raises(ValueError):
        eval_trace_part(tp, tau, np.eye(8))


def test_eval_stable_under_reinstantiation():
    # The value only sees fixed leading corners of S, so growing the ambient
    # dimension with the same corner cannot move it.
    rng = np.random.default_rng(43)
    x = random_block(rng, 3)
    ys = (random_block(rng, 4), random_block(rng, 4))
    spec = OperatorModelSpec(name="lap-pos")
    small = instantiate_model(spec, 16)
    big = instantiate_model(spec, 48)
    tp = TracePart(x=x, ys=ys, gauge=G2)
    corner = random_block(rng, 16)
    a = eval_trace_part(tp, small, corner)
    b = eval_trace_part(tp, big, embed(corner, 48))
    assert a == pytest.approx(b, abs=1e-12)


def test_reduce_identity_cases():
    tau = instantiate_model(OperatorModelSpec(name="diagonal-grid", n=2), 8)
    rng = np.random.default_rng(44)
    x = random_block(rng, 4)
    plain = TracePart(x=x, ys=(EMPTY, EMPTY), gauge=G2)
    assert np.array_equal(reduce_to_trace(plain, tau), x)
    # diagonal y commutes with the diagonal model, contributing nothing
    y = np.diag(rng.standard_normal(3)).astype(np.complex128)
    commuting = TracePart(x=x, ys=(y, EMPTY), gauge=G2)
    assert np.allclose(reduce_to_trace(commuting, tau), x, atol=1e-14)


def test_reduce_matches_direct_evaluation():
    rng = np.random.default_rng(45)
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 24)
    tp = TracePart(x=random_block(rng, 4),
                   ys=(random_block(rng, 4), random_block(rng, 4)),
                   gauge=G2)
    xp = reduce_to_trace(tp, tau)
    for _ in range(20):
        s = random_block(rng, 24)
        s = (s + s.conj().T) / 2
        direct = eval_trace_part(tp, tau, s)
        via_xp = complex(np.trace(embed(xp, 24) @ s))
        assert abs(direct - via_xp) < 1e-10


# ---------------------------------------------------------- tail states


def test_singular_constant_diagonal():
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 64)
    ts = coordinate_tail_states(range(40, 50))
    value = eval_singular_part(ts, tau.matrices[1])
    assert value == pytest.approx(2.0, abs=1e-14)


def test_singular_vanishes_exactly_on_finite_support():
    ts = coordinate_tail_states(range(20, 30))
    s = np.zeros((32, 32), dtype=np.complex128)
    s[:10, :10] = np.eye(10)
    assert eval_singular_part(ts, s) == 0.0


def test_oscillation_needs_cesaro():
    n = 48
    s = np.diag([(-1.0) ** j for j in range(1, n + 1)])
    plain = coordinate_tail_states(range(1, 41))
    with pytest.raises(NotConverged) as err:
        eval_singular_part(plain, s)
    assert len(err.value.sequence) == 40
    cesaro = coordinate_tail_states(range(1, 41), limit_rule="cesaro",
                                    detection_tol=0.06)
    assert eval_singular_part(cesaro, s) == pytest.approx(0.0, abs=1e-12)


def test_tail_state_validation():
    with pytest.raises(ValueError):
        coordinate_tail_states([5, 5, 6])  # starts must strictly increase
    with pytest.raises(ValueError):
        # a weighted point mass is not a state unless its trace is one
        from commlab import TailStateSpec
        TailStateSpec(windows=((3, 3),), states=(np.array([[2.0]]),))


def test_singular_depth_validation():
    ts = coordinate_tail_states(range(4, 16))
    with pytest.raises(ValueError):
        eval_singular_part(ts, np.eye(8))  # windows outrun the matrix
    with pytest.raises(ValueError):
        eval_singular_part(ts, np.eye(20), depth=0)


# ------------------------------------------------------ whole functionals


def test_functional_spec_needs_a_part():
    with pytest.raises(ValueError):
        FunctionalSpec()


def test_trace_only_functional_matches_part():
    rng = np.random.default_rng(46)
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 24)
    tp = TracePart(x=random_block(rng, 3),
                   ys=(random_block(rng, 3), random_block(rng, 3)), gauge=G2)
    phi = FunctionalSpec(trace_part=tp)
    s = random_block(rng, 24)
    assert eval_functional(phi, tau, s) == eval_trace_part(tp, tau, s)


def test_mixed_functional_sums_parts():
    rng = np.random.default_rng(47)
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 64)
    tp = TracePart(x=random_block(rng, 3),
                   ys=(random_block(rng, 3), random_block(rng, 3)), gauge=G2)
    ts = coordinate_tail_states(range(40, 50))
    phi = FunctionalSpec(trace_part=tp, singular_part=ts)
    s = tau.matrices[1]
    want = eval_trace_part(tp, tau, s) + eval_singular_part(ts, s)
    assert eval_functional(phi, tau, s) == pytest.approx(want, abs=1e-14)


def test_singular_only_functional_kills_finite_support():
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 48)
    phi = FunctionalSpec(singular_part=coordinate_tail_states(range(30, 40)))
    s = embed(np.eye(8), 48)
    assert eval_functional(phi, tau, s) == 0.0


def test_combination_is_linear():
    rng = np.random.default_rng(48)
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 64)
    phis = []
    for _ in range(2):
        tp = TracePart(x=random_block(rng, 4),
                       ys=(random_block(rng, 4), random_block(rng, 4)), gauge=G2)
        phis.append(FunctionalSpec(
            trace_part=tp, singular_part=coordinate_tail_states(range(40, 50))))
    s = (lambda m: (m + m.conj().T) / 2)(random_block(rng, 64))
    s[40:, 40:] = np.eye(24) * 0.7  # constant on the tail so limits exist
    alpha, beta = 2.0, -0.5
    direct = (alpha * eval_functional(phis[0], tau, s)
              + beta * eval_functional(phis[1], tau, s))
    got = eval_functional(combine((alpha, phis[0]), (beta, phis[1])), tau, s)
    assert abs(got - direct) < 1e-10


# ------------------------------------------------------------ norm bounds


def test_norm_bounds_rank_one_trace_part():
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 32)
    tp = TracePart(x=np.array([[1.0]]), ys=(EMPTY, EMPTY), gauge=G2)
    phi = FunctionalSpec(trace_part=tp)
    bounds = functional_norm_bounds(phi, tau, G2, SampleSpec(seed=5, count=8))
    assert bounds.upper == pytest.approx(1.0, abs=1e-12)
    assert bounds.lower == pytest.approx(1.0, abs=1e-9)
    assert bounds.skipped == 0


def test_norm_bounds_zero_functional():
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 32)
    phi = FunctionalSpec(trace_part=TracePart.zero(2, G2))
    bounds = functional_norm_bounds(phi, tau, G2, SampleSpec(seed=6, count=4))
    assert bounds.lower == 0.0 and bounds.upper == 0.0


def test_norm_bounds_singular_state():
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 64)
    phi = FunctionalSpec(singular_part=coordinate_tail_states(range(40, 50)))
    spec = SampleSpec(seed=7, count=6, kinds=("finitely-supported",), support=6)
    bounds = functional_norm_bounds(phi, tau, G2, spec)
    assert bounds.upper == pytest.approx(1.0, abs=1e-12)
    assert bounds.lower == pytest.approx(1.0, abs=1e-9)
    # finitely supported samples evaluate to zero, none fail to converge
    assert bounds.skipped == 0


def test_norm_bounds_counts_nonconvergent_samples():
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 64)
    # three windows cannot carry the five-delta detection run
    phi = FunctionalSpec(singular_part=coordinate_tail_states([40, 44, 48]))
    bounds = functional_norm_bounds(phi, tau, G2, SampleSpec(seed=8, count=5))
    assert bounds.skipped == bounds.samples
    assert bounds.lower == 0.0


def test_norm_bounds_sandwich_on_random_functionals():
    rng = np.random.default_rng(49)
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 48)
    for i in range(5):
        tp = TracePart(x=random_block(rng, 4),
                       ys=(random_block(rng, 4), random_block(rng, 4)), gauge=G2)
        phi = FunctionalSpec(trace_part=tp)
        bounds = functional_norm_bounds(phi, tau, G2, SampleSpec(seed=50 + i, count=10))
        assert bounds.lower <= bounds.upper + 1e-9
        assert bounds.lower_alt <= bounds.upper_alt + 1e-9
        assert bounds.upper_alt <= bounds.upper + 1e-12


# --------------------------------------------------------------- quotient


def test_quotient_null_element_certifies_zero():
    rng = np.random.default_rng(51)
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 40)
    ys = [embed(random_block(rng, 4), 6) for _ in range(2)]
    x = np.zeros((7, 7), dtype=np.complex128)
    for t, y in zip(tau.matrices, ys):
        ye = embed(y, 7)
        tc = t[:7, :7]
        x += tc @ ye - ye @ tc
    pe = PredualElement(x=x, ys=tuple(ys), gauge=G2)
    bounds = quotient_norm_bounds(pe, tau, G2, window=12,
                                  sample_spec=SampleSpec(seed=9, count=6))
    assert bounds.upper <= 1e-6
    assert bounds.lower <= bounds.upper + 1e-6


def test_quotient_rank_one_is_pinned():
    tau = instantiate_model(OperatorModelSpec(name="diagonal-grid", n=2), 24)
    pe = PredualElement(x=np.array([[1.0]]), ys=(EMPTY, EMPTY), gauge=G2)
    bounds = quotient_norm_bounds(pe, tau, G2, window=10,
                                  sample_spec=SampleSpec(seed=10, count=6))
    assert bounds.lower == pytest.approx(1.0, abs=1e-6)
    assert bounds.upper == pytest.approx(1.0, abs=1e-6)


def test_quotient_sandwich_random_elements():
    rng = np.random.default_rng(52)
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 40)
    for i in range(10):
        pe = PredualElement(x=random_block(rng, 4),
                            ys=(random_block(rng, 4), random_block(rng, 4)),
                            gauge=G2)
        bounds = quotient_norm_bounds(pe, tau, G2, window=10,
                                      sample_spec=SampleSpec(seed=60 + i, count=8))
        assert bounds.lower <= bounds.upper + 1e-6


def test_quotient_duality_consistency():
    rng = np.random.default_rng(53)
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 40)
    pe = PredualElement(x=random_block(rng, 4),
                        ys=(random_block(rng, 4), random_block(rng, 4)), gauge=G2)
    spec = SampleSpec(seed=11, count=10)
    bounds = quotient_norm_bounds(pe, tau, G2, window=10, sample_spec=spec)
    from commlab import generate_test_set
    for op in generate_test_set(spec, tau, G2):
        lhs = abs(pairing(pe, tau, op.matrix))
        assert lhs <= bounds.upper * e_norm_max(tau, G2, op.matrix) + 1e-8


def test_quotient_window_validation():
    tau = instantiate_model(OperatorModelSpec(name="lap-pos"), 16)
    pe = PredualElement(x=np.eye(2), ys=(EMPTY, EMPTY), gauge=G2)
    with pytest.raises(ValueError):
        quotient_norm_bounds(pe, tau, G2, window=16,
                             sample_spec=SampleSpec(seed=1, count=2))
    big = PredualElement(x=np.eye(16), ys=(EMPTY, EMPTY), gauge=G2)
    with pytest.raises(ValueError):
        quotient_norm_bounds(big, tau, G2, window=4,
                             sample_spec=SampleSpec(seed=1, count=2))
