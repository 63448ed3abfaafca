"""Quasicentral approximate units and the window-constrained commutator table.

A unit is a hermitian A with P_m <= A <= I, supported in the leading r
coordinates.  For a tuple tau and gauge the cell value

    beta(m, r) = min over feasible A of max_j |[T_j, A]|_gauge

is estimated by projected subgradient descent warm-started at the diagonal
ramp.  The table's summary statistic, max over floors of the min over caps,
is the desk surrogate for the obstruction measured by vanishing commutator
norms along approximate units growing to the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor
import csv
import numpy as np

from .gauges import GaugeSpec, gauge_norm, norm_subgradient
from .idealops import HermitianTuple, commutator_tuple, tuple_gauge_norm

EIG_TOL = 1e-10
LEAK_TOL = 0.0
MONOTONE_TOL = 1e-6


class CertificationError(ValueError):
    """A candidate unit failed its feasibility certificate."""


class MonotonizationError(ValueError):
    """Projection onto the monotone constraint broke another constraint."""


@dataclass(frozen=True)
class SolverParams:
    max_iterations: int = 2000
    step_rule: str = "sqrt"
    step_scale: float = 1.0
    stop_tolerance: float = 1e-8
    patience: int = 50

    def __post_init__(self):
        if self.step_rule != "sqrt":
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.max_iterations < 0 or self.patience < 1:
            raise ValueError("solver parameters out of range")


@dataclass(frozen=True)
class UnitCertificate:
    min_eigenvalue: float
    max_eigenvalue: float
    floor_residual: float
    support_leak: float

    @property
    def ok(self) -> bool:
        return (self.min_eigenvalue >= -EIG_TOL
                and self.max_eigenvalue <= 1.0 + EIG_TOL
                and self.floor_residual <= EIG_TOL
                and self.support_leak <= LEAK_TOL)


@dataclass(frozen=True)
class UnitElement:
    matrix: np.ndarray
    floor_m: int
    cap_r: int
    certificate: UnitCertificate


def _hermitize(block: np.ndarray) -> np.ndarray:
    return (block + block.conj().T) / 2.0


def _certify_block(block: np.ndarray, floor_m: int) -> UnitCertificate:
    lam = np.linalg.eigvalsh(block)
    shifted = block.copy()
    idx = np.arange(floor_m)
    shifted[idx, idx] -= 1.0
    floor_lam = np.linalg.eigvalsh(shifted)
    return UnitCertificate(
        min_eigenvalue=float(lam[0]),
        max_eigenvalue=float(lam[-1]),
        floor_residual=float(max(0.0, -floor_lam[0])),
        support_leak=0.0,
    )


def _make_unit(block: np.ndarray, floor_m: int, cap_r: int, dim: int) -> UnitElement:
    cert = _certify_block(block, floor_m)
    if not cert.ok:
        raise CertificationError(
            f"unit certificate failed for window ({floor_m}, {cap_r}): "
            f"eig range [{cert.min_eigenvalue:.3e}, {cert.max_eigenvalue:.3e}], "
            f"floor residual {cert.floor_residual:.3e}")
    full = np.zeros((dim, dim), dtype=block.dtype)
    full[:cap_r, :cap_r] = block
    full.setflags(write=False)
    return UnitElement(matrix=full, floor_m=floor_m, cap_r=cap_r, certificate=cert)


def _validate_window(tau: HermitianTuple, floor_m: int, cap_r: int):
    if not (0 < floor_m <= cap_r):
        raise ValueError(f"infeasible window: need 0 < m <= r, got ({floor_m}, {cap_r})")
    if cap_r + tau.bandwidth > tau.dimension:
        raise ValueError(
            f"infeasible window: cap {cap_r} plus bandwidth {tau.bandwidth} "
            f"exceeds dimension {tau.dimension}")


def ramp_unit(tau: HermitianTuple, floor_m: int, cap_r: int) -> UnitElement:
    """Diagonal ramp: ones through the floor, linear decay to zero at the cap."""
    _validate_window(tau, floor_m, cap_r)
    if floor_m == cap_r:
        raise ValueError("ramp needs m < r; the degenerate window is the projection itself")
    j = np.arange(1, cap_r + 1, dtype=float)
    diag = np.clip((cap_r - j) / (cap_r - floor_m), 0.0, 1.0)
    return _make_unit(np.diag(diag), floor_m, cap_r, tau.dimension)


def _project_window(block: np.ndarray, floor_m: int) -> np.ndarray:
    """Exact Frobenius projection onto {P_m <= A <= I} on the cap block.

    The floor and the box pin down more than they seem to: A >= P_m with
    A <= I forces the leading m x m block to the identity exactly, and a
    positive matrix with a vanishing diagonal block has vanishing off-blocks.
    The feasible set is therefore I_m (+) {0 <= C <= I} on the trailing
    block, and the projection reduces to a spectral clamp of that block.
    """
    x = _hermitize(block)
    out = np.zeros_like(x)
    idx = np.arange(floor_m)
    out[idx, idx] = 1.0
    if x.shape[0] > floor_m:
        tail = x[floor_m:, floor_m:]
        lam, w = np.linalg.eigh(tail)
        out[floor_m:, floor_m:] = (w * np.clip(lam, 0.0, 1.0)) @ w.conj().T
    return out


@dataclass(frozen=True)
class OptimizeResult:
    unit: UnitElement
    value: float
    trace: tuple[tuple[int, float, float], ...]  # (iteration, value, best)


def _embed_block(block: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros((dim, dim), dtype=np.complex128)
    r = block.shape[0]
    out[:r, :r] = block
    return out


def optimize_unit(tau: HermitianTuple, gauge: GaugeSpec, floor_m: int, cap_r: int,
                  params: SolverParams | None = None,
                  extra_starts: tuple[np.ndarray, ...] = ()) -> OptimizeResult:
    """Minimize max_j |[T_j, A]|_gauge over the window's feasible units.

    Projected subgradient descent from the ramp (never accepting an ascent:
    the best feasible iterate is tracked and returned).  `extra_starts` may
    carry feasible candidate blocks from neighboring windows; they only ever
    lower the reported value.
    """
    params = params or SolverParams()
    _validate_window(tau, floor_m, cap_r)
    dim = tau.dimension
    band = tau.bandwidth

    if floor_m == cap_r:
        # Degenerate window: the only feasible unit is the projection itself.
        block = np.eye(cap_r, dtype=np.complex128)
        unit = _make_unit(block, floor_m, cap_r, dim)
        value = tuple_gauge_norm(commutator_tuple(tau, unit.matrix), gauge)
        return OptimizeResult(unit=unit, value=value, trace=((0, value, value),))

    work = min(dim, cap_r + band)
    corners = [t[:work, :work] for t in tau.matrices]

    def commutators(block: np.ndarray) -> list[np.ndarray]:
        a = _embed_block(block, work)
        return [tc @ a - a @ tc for tc in corners]

    def objective(block: np.ndarray) -> tuple[float, list[float], list[np.ndarray]]:
        ks = commutators(block)
        norms = [gauge_norm(gauge, k) for k in ks]
        return max(norms), norms, ks

    def subgradient(norms: list[float], ks: list[np.ndarray]) -> np.ndarray:
        j = int(np.argmax(norms))  # lowest index wins ties
        d = norm_subgradient(gauge, ks[j])
        g = corners[j] @ d - d @ corners[j]
        return _hermitize(g[:cap_r, :cap_r])

    ramp = ramp_unit(tau, floor_m, cap_r)
    candidates = [np.asarray(ramp.matrix[:cap_r, :cap_r], dtype=np.complex128)]
    for raw in extra_starts:
        outer = np.asarray(raw, dtype=np.complex128)
        if outer.shape[0] > cap_r:
            continue
        block = np.zeros((cap_r, cap_r), dtype=np.complex128)
        block[:outer.shape[0], :outer.shape[0]] = outer
        candidates.append(_project_window(block, floor_m))

    best_block = None
    best_value = np.inf
    start_block = None
    start_value = np.inf
    for cand in candidates:
        cert = _certify_block(cand, floor_m)
        if not cert.ok:
            continue
        value, _, _ = objective(cand)
        if value < best_value:
            best_value, best_block = value, cand
        if value < start_value:
            start_value, start_block = value, cand
    if best_block is None:
        raise CertificationError(f"no feasible start for window ({floor_m}, {cap_r})")

    trace = [(0, float(start_value), float(best_value))]
    if best_value <= params.stop_tolerance or params.max_iterations == 0:
        unit = _make_unit(best_block, floor_m, cap_r, dim)
        return OptimizeResult(unit=unit, value=float(best_value), trace=tuple(trace))

    x = start_block
    value, norms, ks = objective(x)
    g = subgradient(norms, ks)
    gnorm = float(np.linalg.norm(g))
    if gnorm <= 1e-15:
        unit = _make_unit(best_block, floor_m, cap_r, dim)
        return OptimizeResult(unit=unit, value=float(best_value), trace=tuple(trace))
    base_step = params.step_scale * start_value / gnorm

    stall = 0
    reference = best_value
    for it in range(1, params.max_iterations + 1):
        step = base_step / np.sqrt(it)
        x = _project_window(x - step * g, floor_m)
        cert = _certify_block(x, floor_m)
        if not cert.ok:
            raise CertificationError(
                f"projection failed to certify at iteration {it} for window "
                f"({floor_m}, {cap_r})")
        value, norms, ks = objective(x)
        if value < best_value:
            best_value = value
            best_block = x
        trace.append((it, float(value), float(best_value)))
        if reference - best_value < params.stop_tolerance:
            stall += 1
            if stall >= params.patience:
                break
        else:
            stall = 0
            reference = best_value
        if best_value <= params.stop_tolerance:
            break
        g = subgradient(norms, ks)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= 1e-15:
            break

    unit = _make_unit(best_block, floor_m, cap_r, dim)
    return OptimizeResult(unit=unit, value=float(best_value), trace=tuple(trace))


@dataclass(frozen=True)
class KCell:
    floor_m: int
    cap_r: int
    beta: float
    iterations: int
    status: str


@dataclass(frozen=True)
class KEstimateTable:
    gauge: GaugeSpec
    floors: tuple[int, ...]
    caps: tuple[int, ...]
    cells: tuple[KCell, ...]
    estimate: float

    def cell(self, floor_m: int, cap_r: int) -> KCell:
        for c in self.cells:
            if c.floor_m == floor_m and c.cap_r == cap_r:
                return c
        raise KeyError((floor_m, cap_r))

    def monotonicity_violations(self, tol: float = MONOTONE_TOL) -> tuple[str, ...]:
        """Cells breaking the structural monotonicity, reported as failures."""
        problems = []
        beta = {(c.floor_m, c.cap_r): c.beta for c in self.cells}
        for m in self.floors:
            for r_small, r_big in zip(self.caps, self.caps[1:]):
                if beta[(m, r_big)] > beta[(m, r_small)] + tol:
                    problems.append(
                        f"beta({m},{r_big}) > beta({m},{r_small}) + {tol:g}")
        for m_small, m_big in zip(self.floors, self.floors[1:]):
            for r in self.caps:
                if beta[(m_small, r)] > beta[(m_big, r)] + tol:
                    problems.append(
                        f"beta({m_small},{r}) > beta({m_big},{r}) + {tol:g}")
        return tuple(problems)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["m", "r", "beta", "iterations", "status"])
            for c in self.cells:
                writer.writerow([c.floor_m, c.cap_r, f"{c.beta:.17g}",
                                 c.iterations, c.status])


def k_estimate(tau: HermitianTuple, gauge: GaugeSpec, floors, caps,
               params: SolverParams | None = None, jobs: int = 1) -> KEstimateTable:
    """Table of beta(m, r) over a floor/cap grid with its summary estimate.

    Cells are solved independently (in parallel when jobs > 1) and then a
    deterministic chaining pass propagates feasible values: a unit for a
    window stays feasible when the floor shrinks or the cap grows, so each
    cell reports the best certified value available to it.  The summary is
    max over floors of the min over caps.
    """
    params = params or SolverParams()
    floors = tuple(sorted(int(m) for m in floors))
    caps = tuple(sorted(int(r) for r in caps))
    if not floors or not caps:
        raise ValueError("floors and caps must be nonempty")
    if len(set(floors)) != len(floors) or len(set(caps)) != len(caps):
        raise ValueError("floors and caps must be distinct")
    for m in floors:
        for r in caps:
            _validate_window(tau, m, r)

    pairs = [(m, r) for m in floors for r in caps]

    def solve(pair):
        m, r = pair
        return optimize_unit(tau, gauge, m, r, params)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            solved = dict(zip(pairs, pool.map(solve, pairs)))
    else:
        solved = {pair: solve(pair) for pair in pairs}

    beta = {}
    status = {}
    for m in sorted(floors, reverse=True):
        for i, r in enumerate(caps):
            value = solved[(m, r)].value
            tag = "ok"
            if i > 0 and beta[(m, caps[i - 1])] < value:
                value = beta[(m, caps[i - 1])]
                tag = "chained"
            larger = [f for f in floors if f > m]
            if larger:
                up = min(larger)
                if beta[(up, r)] < value:
                    value = beta[(up, r)]
                    tag = "chained"
            beta[(m, r)] = value
            status[(m, r)] = tag

    cells = tuple(
        KCell(floor_m=m, cap_r=r, beta=beta[(m, r)],
              iterations=len(solved[(m, r)].trace) - 1, status=status[(m, r)])
        for m in floors for r in caps)
    estimate = max(min(beta[(m, r)] for r in caps) for m in floors)
    return KEstimateTable(gauge=gauge, floors=floors, caps=caps,
                          cells=cells, estimate=float(estimate))


@dataclass(frozen=True)
class UnitSchedule:
    steps: tuple[UnitElement, ...]
    commutator_norms: tuple[float, ...]
    gauge: GaugeSpec

    def __len__(self) -> int:
        return len(self.steps)


def _check_monotone_steps(steps):
    for prev, cur in zip(steps, steps[1:]):
        r = cur.cap_r
        diff = cur.matrix[:r, :r] - prev.matrix[:r, :r]
        lam = np.linalg.eigvalsh(_hermitize(np.asarray(diff)))
        if lam[0] < -EIG_TOL:
            raise MonotonizationError(
                f"schedule steps not monotone: min eig {lam[0]:.3e} between caps "
                f"{prev.cap_r} and {cur.cap_r}")


def build_schedule(tau: HermitianTuple, gauge: GaugeSpec, windows,
                   mode: str = "ramp",
                   params: SolverParams | None = None) -> UnitSchedule:
    """A monotone sequence of units over nested windows, with commutator norms.

    Windows are (floor, cap) pairs with nondecreasing floors, strictly
    increasing caps, and the march condition floor[k+1] >= cap[k-1], so the
    units sweep out to the identity.  mode "ramp" uses the diagonal ramps
    (monotone by construction); "optimized-then-monotonized" runs the
    optimizer per window and projects each unit onto the cone above its
    predecessor, re-certifying afterwards.
    """
    windows = [(int(m), int(r)) for m, r in windows]
    if not windows:
        raise ValueError("schedule needs at least one window")
    for m, r in windows:
        _validate_window(tau, m, r)
        if m >= r:
            raise ValueError(f"schedule windows need m < r, got ({m}, {r})")
    for (m0, r0), (m1, r1) in zip(windows, windows[1:]):
        if m1 < m0:
            raise ValueError("floors must be nondecreasing")
        if r1 <= r0:
            raise ValueError("caps must be strictly increasing")
    for (m0, r0), (m2, r2) in zip(windows, windows[2:]):
        if m2 < r0:
            raise ValueError(
                f"march condition violated: floor {m2} precedes earlier cap {r0}")

    if mode == "ramp":
        steps = [ramp_unit(tau, m, r) for m, r in windows]
    elif mode == "optimized-then-monotonized":
        steps = []
        for m, r in windows:
            unit = optimize_unit(tau, gauge, m, r, params).unit
            if steps:
                prev = steps[-1]
                block = np.asarray(unit.matrix[:r, :r], dtype=np.complex128).copy()
                block[:prev.cap_r, :prev.cap_r] -= prev.matrix[:prev.cap_r, :prev.cap_r]
                lam, w = np.linalg.eigh(_hermitize(block))
                lifted = (w * np.maximum(lam, 0.0)) @ w.conj().T
                lifted[:prev.cap_r, :prev.cap_r] += prev.matrix[:prev.cap_r, :prev.cap_r]
                try:
                    unit = _make_unit(_hermitize(lifted), m, r, tau.dimension)
                except CertificationError as exc:
                    raise MonotonizationError(
                        f"monotonization failed at window ({m}, {r}): {exc}") from exc
            steps.append(unit)
    else:
        raise ValueError(f"unknown schedule mode {mode!r}")

    _check_monotone_steps(steps)
    norms = tuple(
        tuple_gauge_norm(commutator_tuple(tau, u.matrix), gauge) for u in steps)
    return UnitSchedule(steps=tuple(steps), commutator_norms=norms, gauge=gauge)
