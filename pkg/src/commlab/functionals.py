"""Functionals on truncated operator tuples: trace parts, tail states, preduals.

A trace part is a pair (X, (Y_j)) of finitely supported matrices pairing with
a test operator S as

    phi(S) = Tr(S X) + sum_j Tr(Y_j [T_j, S]),

which collapses to a single trace against X - sum_j [T_j, Y_j].  A tail-state
part evaluates S along a marching sequence of density matrices and takes the
detected limit; it vanishes identically on finitely supported S once the
windows pass the support, which is what makes it singular.  Predual elements
are the same data considered modulo the subspace of pairs whose first slot is
a commutator sum, with the quotient norm bracketed from both sides.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .gauges import GaugeSpec, conjugate_gauge, gauge_norm, norm_subgradient, operator_norm
from .idealops import (HermitianTuple, commutator_tuple, e_norm_max, e_norm_sum,
                       support_size, tuple_gauge_norm)
from .sampling import SampleSpec, generate_test_set

DETECTION_RUN = 5
STATE_TOL = 1e-12


class NotConverged(Exception):
    """Limit detection failed within the available depth."""

    def __init__(self, message: str, sequence=()):
        super().__init__(message)
        self.sequence = tuple(complex(v) for v in sequence)


def detect_limit(values, rule: str = "plain", tol: float = 1e-9) -> complex:
    """Detected limit of a finite sequence.

    plain: the last value, provided the final DETECTION_RUN consecutive
    deltas are below `tol` (so a finitely supported evaluation that has
    dropped to exact zero is detected as exactly zero).  cesaro: the same
    detection applied to running averages.
    """
    seq = [complex(v) for v in values]
    if rule == "cesaro":
        seq = list(np.cumsum(seq) / np.arange(1, len(seq) + 1))
    elif rule != "plain":
        raise ValueError(f"unknown limit rule {rule!r}")
    if len(seq) < DETECTION_RUN + 1:
        raise NotConverged(
            f"need at least {DETECTION_RUN + 1} values, got {len(seq)}", values)
    deltas = [abs(a - b) for a, b in zip(seq[-DETECTION_RUN:], seq[-DETECTION_RUN - 1:-1])]
    if max(deltas) >= tol:
        raise NotConverged(
            f"no stabilized tail of length {DETECTION_RUN} at tolerance {tol:g}", values)
    return seq[-1]


def _as_block(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("blocks must be square matrices")
    return m


def _embed(block: np.ndarray, dim: int) -> np.ndarray:
    s = block.shape[0]
    if s > dim:
        raise ValueError(f"support {s} exceeds the instantiated dimension {dim}")
    out = np.zeros((dim, dim), dtype=np.complex128)
    out[:s, :s] = block
    return out


@dataclass(frozen=True)
class TracePart:
    """Finitely supported pair (X, (Y_j)) with its gauge."""

    x: np.ndarray
    ys: tuple[np.ndarray, ...]
    gauge: GaugeSpec

    def __post_init__(self):
        object.__setattr__(self, "x", _as_block(self.x))
        object.__setattr__(self, "ys", tuple(_as_block(y) for y in self.ys))

    @property
    def support(self) -> int:
        return max([self.x.shape[0]] + [y.shape[0] for y in self.ys])

    @classmethod
    def zero(cls, n: int, gauge: GaugeSpec) -> "TracePart":
        empty = np.zeros((0, 0), dtype=np.complex128)
        return cls(x=empty, ys=tuple(empty for _ in range(n)), gauge=gauge)


def _block_trace_product(a_block: np.ndarray, full: np.ndarray) -> complex:
    # Tr(A F) for A supported in its leading block.
    s = a_block.shape[0]
    if s == 0:
        return 0.0 + 0.0j
    return complex(np.trace(a_block @ full[:s, :s]))


def _check_margin(tp: TracePart, tau: HermitianTuple):
    if len(tp.ys) != tau.n:
        raise ValueError(f"trace part carries {len(tp.ys)} commutator slots, tuple has {tau.n}")
    need = max([tp.x.shape[0]] + [y.shape[0] + tau.bandwidth for y in tp.ys])
    if need > tau.dimension:
        raise ValueError(
            f"supports exceed instantiation: need dimension {need}, have {tau.dimension}")


def eval_trace_part(tp: TracePart, tau: HermitianTuple, s) -> complex:
    """Exact finite sum Tr(S X) + sum_j Tr(Y_j [T_j, S]).

    Only leading corners of S enter: the commutator entries on the support of
    Y_j depend on S through its (support + bandwidth) corner, because T_j is
    banded.  The value therefore does not change when S is re-instantiated at
    a larger dimension with the same corner.
    """
    _check_margin(tp, tau)
    sm = np.asarray(s)
    if sm.shape != (tau.dimension, tau.dimension):
        raise ValueError("operand dimension does not match the tuple")
    value = _block_trace_product(tp.x, sm)
    for t, y in zip(tau.matrices, tp.ys):
        sy = y.shape[0]
        if sy == 0:
            continue
        c = min(tau.dimension, sy + tau.bandwidth)
        tc = t[:c, :c]
        pc = sm[:c, :c]
        k = tc @ pc - pc @ tc
        value += complex(np.trace(y @ k[:sy, :sy]))
    return value


def reduce_to_trace(tp: TracePart, tau: HermitianTuple) -> np.ndarray:
    """Collapse the pair to the single matrix X - sum_j [T_j, Y_j].

    Evaluating any S against the result reproduces eval_trace_part exactly;
    starting from (X, 0) returns X unchanged.
    """
    _check_margin(tp, tau)
    out_size = max([tp.x.shape[0]] +
                   [y.shape[0] + tau.bandwidth for y in tp.ys if y.shape[0]] + [0])
    out = np.zeros((out_size, out_size), dtype=np.complex128)
    sx = tp.x.shape[0]
    out[:sx, :sx] = tp.x
    for t, y in zip(tau.matrices, tp.ys):
        sy = y.shape[0]
        if sy == 0:
            continue
        c = sy + tau.bandwidth
        tc = t[:c, :c]
        ye = _embed(y, c)
        out[:c, :c] -= tc @ ye - ye @ tc
    return out


@dataclass(frozen=True)
class TailStateSpec:
    """Marching windows with a density matrix on each, and a limit rule."""

    windows: tuple[tuple[int, int], ...]  # 1-based inclusive (lo, hi)
    states: tuple[np.ndarray, ...]
    limit_rule: str = "plain"
    detection_tol: float = 1e-9

    def __post_init__(self):
        if self.limit_rule not in ("plain", "cesaro"):
            raise ValueError(f"unknown limit rule {self.limit_rule!r}")
        windows = tuple((int(lo), int(hi)) for lo, hi in self.windows)
        states = tuple(_as_block(rho) for rho in self.states)
        if len(windows) != len(states):
            raise ValueError("windows and states must have matching lengths")
        prev_lo = 0
        for (lo, hi), rho in zip(windows, states):
            if lo < 1 or hi < lo:
                raise ValueError(f"bad window ({lo}, {hi})")
            if lo <= prev_lo:
                raise ValueError("window starts must be strictly increasing")
            prev_lo = lo
            if rho.shape[0] != hi - lo + 1:
                raise ValueError("state block must match its window size")
            if abs(np.trace(rho) - 1.0) > STATE_TOL:
                raise ValueError("states must have unit trace")
            lam = np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)
            if lam[0] < -STATE_TOL:
                raise ValueError("states must be positive semidefinite")
        object.__setattr__(self, "windows", windows)
        object.__setattr__(self, "states", states)

    @property
    def depth(self) -> int:
        return len(self.windows)

    @property
    def max_index(self) -> int:
        return max(hi for _, hi in self.windows)


def coordinate_tail_states(positions, limit_rule: str = "plain",
                           detection_tol: float = 1e-9) -> TailStateSpec:
    """One-point windows at the given (strictly increasing) positions."""
    one = np.ones((1, 1), dtype=np.complex128)
    positions = tuple(int(p) for p in positions)
    return TailStateSpec(windows=tuple((p, p) for p in positions),
                         states=tuple(one for _ in positions),
                         limit_rule=limit_rule, detection_tol=detection_tol)


def eval_singular_part(ts: TailStateSpec, s, depth: int | None = None) -> complex:
    """Detected limit of tr(rho_k S) along the windows.

    Exactly zero for finitely supported S once the windows have passed the
    support, since every window block of S is then the zero matrix.
    """
    sm = np.asarray(s)
    if sm.ndim != 2 or sm.shape[0] != sm.shape[1]:
        raise ValueError("operand must be a square matrix")
    depth = ts.depth if depth is None else int(depth)
    if not (0 < depth <= ts.depth):
        raise ValueError(f"depth must be in 1..{ts.depth}")
    deepest = max(hi for _, hi in ts.windows[:depth])
    if deepest > sm.shape[0]:
        raise ValueError(
            f"window end {deepest} exceeds the instantiated dimension {sm.shape[0]}")
    values = []
    for (lo, hi), rho in zip(ts.windows[:depth], ts.states[:depth]):
        block = sm[lo - 1:hi, lo - 1:hi]
        values.append(complex(np.trace(rho @ block)))
    return detect_limit(values, ts.limit_rule, ts.detection_tol)


@dataclass(frozen=True)
class FunctionalSpec:
    """A functional with an optional trace part and an optional singular part."""

    trace_part: TracePart | None = None
    singular_part: TailStateSpec | None = None
    label: str = ""

    def __post_init__(self):
        if self.trace_part is None and self.singular_part is None:
            raise ValueError("a functional needs at least one part")


@dataclass(frozen=True)
class FunctionalCombo:
    """Formal linear combination of functionals, evaluated part-wise."""

    terms: tuple[tuple[complex, FunctionalSpec], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "terms",
            tuple((complex(c), phi) for c, phi in self.terms))


def combine(*terms) -> FunctionalCombo:
    """combine((c1, phi1), (c2, phi2), ...) -> formal sum of functionals."""
    flat = []
    for coeff, phi in terms:
        if isinstance(phi, FunctionalCombo):
            flat.extend((complex(coeff) * c, inner) for c, inner in phi.terms)
        else:
            flat.append((complex(coeff), phi))
    return FunctionalCombo(terms=tuple(flat))


def combined_trace_part(phi, tau: HermitianTuple) -> TracePart:
    """The (exactly combined) trace part of a functional or combination."""
    if isinstance(phi, FunctionalSpec):
        return phi.trace_part if phi.trace_part is not None \
            else TracePart.zero(tau.n, _default_gauge(phi))
    parts = [(c, t.trace_part) for c, t in phi.terms if t.trace_part is not None]
    if not parts:
        raise ValueError("combination has no trace part")
    gauge = parts[0][1].gauge
    sx = max(p.x.shape[0] for _, p in parts)
    sys = [max(p.ys[j].shape[0] for _, p in parts) for j in range(tau.n)]
    x = np.zeros((sx, sx), dtype=np.complex128)
    ys = [np.zeros((s, s), dtype=np.complex128) for s in sys]
    for c, p in parts:
        x[:p.x.shape[0], :p.x.shape[0]] += c * p.x
        for j, y in enumerate(p.ys):
            ys[j][:y.shape[0], :y.shape[0]] += c * y
    return TracePart(x=x, ys=tuple(ys), gauge=gauge)


def _default_gauge(phi: FunctionalSpec) -> GaugeSpec:
    if phi.trace_part is not None:
        return phi.trace_part.gauge
    from .gauges import schatten
    return schatten(2.0)


def eval_functional(phi, tau: HermitianTuple, s, depth: int | None = None) -> complex:
    """Evaluate a FunctionalSpec or FunctionalCombo; NotConverged propagates."""
    if isinstance(phi, FunctionalCombo):
        return sum((c * eval_functional(f, tau, s, depth) for c, f in phi.terms),
                   start=0.0 + 0.0j)
    value = 0.0 + 0.0j
    if phi.trace_part is not None:
        value += eval_trace_part(phi.trace_part, tau, s)
    if phi.singular_part is not None:
        value += eval_singular_part(phi.singular_part, s, depth)
    return value


def trace_part_norms(tp: TracePart, gauge: GaugeSpec) -> tuple[float, float]:
    """(trace norm of X, sum of conjugate-gauge norms of the Y_j)."""
    dual = conjugate_gauge(gauge)
    x1 = gauge_norm(GaugeSpec(family="schatten", p=1.0), tp.x) if tp.x.size else 0.0
    ysum = sum(gauge_norm(dual, y) for y in tp.ys if y.size)
    return float(x1), float(ysum)


@dataclass(frozen=True)
class NormBounds:
    """Sampled lower and certified upper bounds for both dual norms.

    `lower`/`upper` bracket the norm dual to the max-form operator norm;
    `lower_alt`/`upper_alt` bracket the dual of the sum-form norm.  Samples
    whose singular evaluation fails to converge are skipped and counted.
    """

    lower: float
    upper: float
    lower_alt: float
    upper_alt: float
    skipped: int
    samples: int


def functional_norm_bounds(phi: FunctionalSpec, tau: HermitianTuple, gauge: GaugeSpec,
                           sample_spec: SampleSpec) -> NormBounds:
    x1, ysum = (trace_part_norms(phi.trace_part, gauge)
                if phi.trace_part is not None else (0.0, 0.0))
    singular = 1.0 if phi.singular_part is not None else 0.0
    upper = x1 + ysum + singular
    upper_alt = max(x1 + singular, ysum)

    lower = 0.0
    lower_alt = 0.0
    skipped = 0
    ops = generate_test_set(sample_spec, tau, gauge)
    for op in ops:
        try:
            value = abs(eval_functional(phi, tau, op.matrix))
        except NotConverged:
            skipped += 1
            continue
        nmax = e_norm_max(tau, gauge, op.matrix)
        nsum = e_norm_sum(tau, gauge, op.matrix)
        if nmax > 1e-14:
            lower = max(lower, value / nmax)
        if nsum > 1e-14:
            lower_alt = max(lower_alt, value / nsum)
    return NormBounds(lower=lower, upper=upper, lower_alt=lower_alt,
                      upper_alt=upper_alt, skipped=skipped, samples=len(ops))


@dataclass(frozen=True)
class PredualElement:
    """Pair (x, (y_j)) representing a class modulo commutator-sum pairs."""

    x: np.ndarray
    ys: tuple[np.ndarray, ...]
    gauge: GaugeSpec

    def __post_init__(self):
        object.__setattr__(self, "x", _as_block(self.x))
        object.__setattr__(self, "ys", tuple(_as_block(y) for y in self.ys))

    @property
    def support(self) -> int:
        return max([self.x.shape[0]] + [y.shape[0] for y in self.ys])


def pairing(pe: PredualElement, tau: HermitianTuple, s) -> complex:
    """Tr(S x) + sum_j Tr(y_j [T_j, S]); constant on the class of pe."""
    tp = TracePart(x=pe.x, ys=pe.ys, gauge=pe.gauge)
    return eval_trace_part(tp, tau, s)


@dataclass(frozen=True)
class QuotientBounds:
    lower: float
    upper: float
    iterations: int


def quotient_norm_bounds(pe: PredualElement, tau: HermitianTuple, gauge: GaugeSpec,
                         window: int, sample_spec: SampleSpec,
                         max_iterations: int = 1500) -> QuotientBounds:
    """Bracket the quotient norm of the class of pe.

    Upper: minimize |x + sum_j [T_j, w_j]|_1 + sum_j |y_j + w_j|_dual over
    perturbations w_j supported in the leading `window` coordinates, by
    subgradient descent from w = 0 with Polyak-type steps (the objective is
    sharp when the class is zero).  The negated y blocks are also tried as a
    candidate, so elements constructed inside the null subspace certify an
    upper bound of exactly zero.  Any evaluated point gives a valid bound.

    Lower: the largest normalized pairing against the sampled test set.
    """
    if len(pe.ys) != tau.n:
        raise ValueError(f"predual element carries {len(pe.ys)} slots, tuple has {tau.n}")
    if window < 1 or window + tau.bandwidth > tau.dimension:
        raise ValueError(f"window {window} infeasible at dimension {tau.dimension}")
    if pe.support + tau.bandwidth > tau.dimension:
        raise ValueError("supports exceed instantiation")
    dual = conjugate_gauge(gauge)
    work = min(tau.dimension, max(window, pe.support) + tau.bandwidth)
    corners = [t[:work, :work] for t in tau.matrices]
    xe = _embed(pe.x, work)
    yes = [_embed(y, work) for y in pe.ys]

    def representative(ws):
        first = xe.copy()
        for tc, w in zip(corners, ws):
            first += tc @ w - w @ tc
        return first

    def cost(ws) -> float:
        first = representative(ws)
        return (gauge_norm(GaugeSpec(family="schatten", p=1.0), first)
                + sum(gauge_norm(dual, y + w) for y, w in zip(yes, ws)))

    def blocked(m: np.ndarray) -> np.ndarray:
        out = np.zeros_like(m)
        out[:window, :window] = m[:window, :window]
        return out

    zero_ws = [np.zeros((work, work), dtype=np.complex128) for _ in range(tau.n)]
    best = cost(zero_ws)
    neg_ws = [blocked(-y) for y in yes]
    best = min(best, cost(neg_ws))

    ws = [w.copy() for w in zero_ws]
    current = cost(ws)
    iterations = 0
    for it in range(max_iterations):
        iterations = it + 1
        first = representative(ws)
        d1 = norm_subgradient(GaugeSpec(family="schatten", p=1.0), first)
        grads = []
        for tc, y, w in zip(corners, yes, ws):
            g = tc @ d1 - d1 @ tc + norm_subgradient(dual, y + w)
            grads.append(blocked(g))
        gsq = sum(float(np.linalg.norm(g)) ** 2 for g in grads)
        if gsq <= 1e-30 or current <= 1e-14:
            break
        step = current / gsq
        ws = [w - step * g for w, g in zip(ws, grads)]
        current = cost(ws)
        if current < best:
            best = current
        if best <= 1e-14:
            break

    lower = 0.0
    for op in generate_test_set(sample_spec, tau, gauge):
        value = abs(pairing(pe, tau, op.matrix))
        norm = e_norm_max(tau, gauge, op.matrix)
        if norm > 1e-14:
            lower = max(lower, value / norm)
    return QuotientBounds(lower=float(lower), upper=float(best), iterations=iterations)
