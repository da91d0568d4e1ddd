"""
Batch orchestration: prepare a configured problem, compare methods over the
(lambda, t) grid, fit convergence slopes and run the cross-oracle suite.

Lambda-free work (block corrections, quadrature terms, RS assemblies) is done
once per time; exact propagators once per lambda. Cells may run in a thread
pool but rows always come back in (lambda index, t index, pair) order.
"""
import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, TypeVar, Union

import numpy as np

import dyson
import oscillator
import rspt
from block_method import (
    assemble,
    approximate_state,
    block_power_entry,
    evolve,
    first_block_row,
    power_first_order_sum,
    power_second_order_sum,
)
from errors import ConfigError, DegeneracyError, NumericalFailure
from models import (
    BlockSystem,
    ComplexMatrix,
    CorrectionSeries,
    FockSpec,
    Method,
    OscillatorProblem,
    ProblemConfig,
    ProblemKind,
    QuadratureScheme,
    ResultRow,
    UnperturbedSolution,
    Vector,
)
from operators import basis_state, eigendecompose_hermitian, load_matrix, load_vector, propagate
from problem_config import active_pairs

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# ---------------- Metrics ----------------
METRIC_STATE_ERROR = "state_error"
METRIC_NORM_DEVIATION = "norm_deviation"
METRIC_IDENTITY_RESIDUAL = "identity_residual"
METRIC_ENERGY_ERROR = "energy_error"
METRIC_SLOPE = "slope"
NO_METHOD = "none"

# Errors below this are numerical noise; a slope fitted through them is meaningless.
FLOOR_ERROR = 1e-13
FLOOR = "floor"

# ---------------- Cross-oracle thresholds ----------------
VERIFY_THRESHOLDS = {
    "verify_power_identity": 1e-10,
    "verify_dense_vs_structured": 1e-9,
    "verify_block_vs_dyson": 1e-7,
    "verify_rs_first_order": 1e-8,
    "verify_rs_second_order": 1e-8,
    "verify_squeeze_route": 1e-8,
}
POWER_IDENTITY_MAX_N = 6


@dataclass(frozen=True, eq=False)
class PreparedProblem:
    """Matrices, unperturbed solution and initial state resolved from a config."""
    config: ProblemConfig
    h0: ComplexMatrix
    v: ComplexMatrix
    unperturbed: UnperturbedSolution
    psi0: Vector
    scheme: QuadratureScheme
    fock: Optional[FockSpec] = None

    @property
    def dyson_order(self) -> int:
        return min(self.config.order, dyson.DEFAULT_DYSON_CAP)

    def oscillator_at(self, lam: float) -> OscillatorProblem:
        return OscillatorProblem(spec=self.fock, lam=lam)


@dataclass(frozen=True, eq=False)
class TimeSlice:
    """Lambda-free quantities at one time."""
    t: float
    series: Optional[CorrectionSeries]
    dyson_terms: Optional[list[Vector]]
    rs_first_order: Optional[Vector]


def _ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int) -> list[R]:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def prepare(config: ProblemConfig) -> PreparedProblem:
    scheme = QuadratureScheme(panels=config.tolerances.panels, nodes_per_panel=config.tolerances.nodes)
    fock = None
    if config.problem is ProblemKind.OSCILLATOR:
        fock = FockSpec(dimension=config.dimension, omega=config.omega)
        h0, v = oscillator.hamiltonians(OscillatorProblem(spec=fock, lam=0.0))
    else:
        h0, v = load_matrix(config.h0_path), load_matrix(config.v_path)
    if config.initial_level is not None:
        psi0 = basis_state(h0.shape[0], config.initial_level)
    else:
        psi0 = load_vector(config.initial_vector_path)
    prep = PreparedProblem(
        config=config,
        h0=h0,
        v=v,
        unperturbed=eigendecompose_hermitian(h0, config.tolerances.exp_tol),
        psi0=psi0,
        scheme=scheme,
        fock=fock,
    )
    if fock is not None:
        oscillator.support_guard(prep.oscillator_at(0.0), psi0)
    return prep


def exact_solution(prep: PreparedProblem, lam: float) -> UnperturbedSolution:
    """Eigendecomposition of H0 + lambda V; the oscillator reuses its cached route."""
    if prep.fock is not None:
        return oscillator.exact_solution(prep.oscillator_at(lam))
    return eigendecompose_hermitian(prep.h0 + lam * prep.v, prep.config.tolerances.exp_tol)


def exact_level_energy(prep: PreparedProblem, lam: float, n: int, sol: UnperturbedSolution) -> float:
    if prep.fock is not None:
        return prep.oscillator_at(lam).exact_energy(n)
    return float(sol.energies[n])


def _build_system(prep: PreparedProblem, order: Optional[int] = None) -> BlockSystem:
    config = prep.config
    order = config.order if order is None else order
    return assemble(prep.h0, prep.v, order, tol=config.tolerances.exp_tol, max_order=max(order, config.max_order))


def _time_slice(prep: PreparedProblem, system: Optional[BlockSystem], t: float) -> TimeSlice:
    methods = prep.config.methods
    series = evolve(system, prep.psi0, t, prep.config.block_path) if system is not None else None
    terms = None
    if Method.DYSON in methods:
        terms = dyson.dyson_terms(prep.unperturbed, prep.v, prep.psi0, t, prep.dyson_order, prep.scheme)
    rs_first = None
    if Method.RSPT in methods and Method.BLOCK in methods:
        rs_first = rspt.first_order_assembly(
            prep.unperturbed, prep.v, prep.config.initial_level, t, prep.config.tolerances.degeneracy_tol
        )
    return TimeSlice(t=float(t), series=series, dyson_terms=terms, rs_first_order=rs_first)


def _norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(x))


def _cell_rows(
    prep: PreparedProblem,
    lam: float,
    sl: TimeSlice,
    exact_sol: Optional[UnperturbedSolution],
    energy_row: Optional[ResultRow],
) -> list[ResultRow]:
    config = prep.config
    rows: list[ResultRow] = []
    exact = propagate(exact_sol, prep.psi0, sl.t) if exact_sol is not None else None

    def row(a: Method, b: Union[Method, str], order: int, metric: str, value: float) -> ResultRow:
        b_name = b.value if isinstance(b, Method) else b
        return ResultRow(lam=lam, t=sl.t, order=order, method_a=a.value, method_b=b_name, metric=metric, value=value)

    for a, b in active_pairs(config.methods):
        if (a, b) == (Method.BLOCK, Method.EXACT):
            approx = approximate_state(sl.series, lam)
            rows.append(row(a, b, config.order, METRIC_STATE_ERROR, _norm(approx - exact)))
            rows.append(row(a, NO_METHOD, config.order, METRIC_NORM_DEVIATION, abs(_norm(approx) - 1.0)))
        elif (a, b) == (Method.DYSON, Method.EXACT):
            state = propagate(prep.unperturbed, prep.psi0, sl.t)
            for k, term in enumerate(sl.dyson_terms, start=1):
                state = state + lam ** k * term
            rows.append(row(a, b, prep.dyson_order, METRIC_STATE_ERROR, _norm(state - exact)))
        elif (a, b) == (Method.BLOCK, Method.DYSON):
            residual = max(
                _norm(sl.series.correction(k) - term) for k, term in enumerate(sl.dyson_terms, start=1)
            )
            rows.append(row(a, b, prep.dyson_order, METRIC_IDENTITY_RESIDUAL, residual))
        elif (a, b) == (Method.RSPT, Method.BLOCK):
            rows.append(row(a, b, 1, METRIC_STATE_ERROR, _norm(sl.rs_first_order - sl.series.correction(1))))
        elif (a, b) == (Method.RSPT, Method.EXACT) and energy_row is not None:
            rows.append(energy_row)
    return rows


def run(config: ProblemConfig) -> list[ResultRow]:
    """Comparison rows for every (lambda, t) cell and requested method pair."""
    prep = prepare(config)
    methods = config.methods
    system = _build_system(prep) if Method.BLOCK in methods else None
    slices = _ordered_map(lambda t: _time_slice(prep, system, t), config.times, config.workers)

    exact_sols: list[Optional[UnperturbedSolution]] = [None] * len(config.lambda_values)
    if Method.EXACT in methods:
        exact_sols = _ordered_map(lambda lam: exact_solution(prep, lam), config.lambda_values, config.workers)

    energy_rows: list[Optional[ResultRow]] = [None] * len(config.lambda_values)
    if Method.RSPT in methods and Method.EXACT in methods:
        n = config.initial_level
        rs = rspt.corrections(prep.unperturbed, prep.v, n, config.tolerances.degeneracy_tol)
        for i, lam in enumerate(config.lambda_values):
            estimate = rspt.perturbed_energy(rs, float(prep.unperturbed.energies[n]), lam)
            error = abs(estimate - exact_level_energy(prep, lam, n, exact_sols[i]))
            energy_rows[i] = ResultRow(
                lam=lam, t=config.times[0], order=2, method_a=Method.RSPT.value, method_b=Method.EXACT.value,
                metric=METRIC_ENERGY_ERROR, value=error,
            )

    cells = [(i, j) for i in range(len(config.lambda_values)) for j in range(len(config.times))]

    def evaluate(cell: tuple[int, int]) -> list[ResultRow]:
        i, j = cell
        # energy error is t-free: emitted once per lambda, in its first time cell and labelled with that time
        return _cell_rows(prep, config.lambda_values[i], slices[j], exact_sols[i], energy_rows[i] if j == 0 else None)

    rows = [r for cell_rows in _ordered_map(evaluate, cells, config.workers) for r in cell_rows]
    logger.info("run: %d rows over %d cells", len(rows), len(cells))
    return rows


# ---------------- Convergence scan ----------------

def fit_slope(lambdas: Iterable[float], errors: Iterable[float]) -> Union[float, str]:
    """Least-squares slope of log(error) against log|lambda|, or FLOOR when fewer than two usable points."""
    points = [(abs(lam), err) for lam, err in zip(lambdas, errors) if lam != 0 and err > FLOOR_ERROR]
    if len({lam for lam, _ in points}) < 2:
        return FLOOR
    x = np.log([lam for lam, _ in points])
    y = np.log([err for _, err in points])
    return float(np.polyfit(x, y, 1)[0])


def scan_convergence(config: ProblemConfig) -> list[ResultRow]:
    """run rows for each order 1..order, then one slope row per order and state-error pair."""
    magnitudes = {abs(lam) for lam in config.lambda_values if lam != 0}
    if len(magnitudes) < 2:
        raise ConfigError("lambda_values", "a convergence scan needs at least two distinct nonzero |lambda|")
    rows: list[ResultRow] = []
    slope_rows: list[ResultRow] = []
    for m in range(1, config.order + 1):
        order_rows = run(dataclasses.replace(config, order=m))
        rows.extend(order_rows)
        for a in (Method.BLOCK, Method.DYSON):
            if a not in config.methods or Method.EXACT not in config.methods:
                continue
            if a is Method.DYSON and m > dyson.DEFAULT_DYSON_CAP:
                continue
            worst = []
            for lam in config.lambda_values:
                errors = [
                    r.value for r in order_rows
                    if r.lam == lam and r.method_a == a.value and r.method_b == Method.EXACT.value
                    and r.metric == METRIC_STATE_ERROR
                ]
                worst.append(max(errors))
            slope = fit_slope(config.lambda_values, worst)
            if slope == FLOOR:
                logger.info("order %d %s/exact errors at the numerical floor; no slope fitted", m, a.value)
            slope_rows.append(ResultRow(
                lam=None, t=None, order=m, method_a=a.value, method_b=Method.EXACT.value,
                metric=METRIC_SLOPE, value=slope,
            ))
    return rows + slope_rows


# ---------------- Cross-oracle suite ----------------

def _relative_gap(a: ComplexMatrix, b: ComplexMatrix) -> float:
    return float(np.max(np.abs(a - b))) / max(1.0, float(np.max(np.abs(b))))


def _verify_row(check: str, value: float, *, lam=None, t=None, order=0, a="block", b="none") -> ResultRow:
    return ResultRow(lam=lam, t=t, order=order, method_a=a, method_b=b, metric=f"verify_{check}", value=value)


def verify(config: ProblemConfig) -> list[ResultRow]:
    """Cross-oracle agreement rows; compare them against VERIFY_THRESHOLDS with verify_breaches."""
    prep = prepare(config)
    rows: list[ResultRow] = []
    system2 = _build_system(prep, max(config.order, 2))

    worst = 0.0
    for n in range(POWER_IDENTITY_MAX_N + 1):
        worst = max(
            worst,
            _relative_gap(block_power_entry(system2, n, 2), power_first_order_sum(prep.h0, prep.v, n)),
            _relative_gap(block_power_entry(system2, n, 3), power_second_order_sum(prep.h0, prep.v, n)),
        )
    rows.append(_verify_row("power_identity", worst, order=2, b="power_sum"))

    system = _build_system(prep)
    for t in config.times:
        dense = first_block_row(system, t, "dense")
        structured = first_block_row(system, t, "structured")
        gap = max(_relative_gap(s, d) for s, d in zip(structured, dense))
        rows.append(_verify_row("dense_vs_structured", gap, t=t, order=config.order, a="dense", b="structured"))

    for t in config.times:
        residual = dyson.dyson_identity_residual(
            prep.unperturbed, prep.v, t, prep.dyson_order, prep.scheme, block_path=config.block_path
        )
        rows.append(_verify_row("block_vs_dyson", residual, t=t, order=prep.dyson_order, b="dyson"))

    n = config.initial_level
    if n is not None:
        try:
            rspt.corrections(prep.unperturbed, prep.v, n, config.tolerances.degeneracy_tol)
        except DegeneracyError as e:
            logger.warning("skipping RS checks: %s", e)
            n = None
    if n is not None:
        for t in config.times:
            series = evolve(system2, basis_state(prep.h0.shape[0], n), t, config.block_path)
            first = rspt.first_order_assembly(prep.unperturbed, prep.v, n, t, config.tolerances.degeneracy_tol)
            second = rspt.second_order_assembly(prep.unperturbed, prep.v, n, t, config.tolerances.degeneracy_tol)
            rows.append(_verify_row("rs_first_order", _norm(first - series.correction(1)), t=t, order=1, a="rspt", b="block"))
            rows.append(_verify_row("rs_second_order", _norm(second - series.correction(2)), t=t, order=2, a="rspt", b="block"))

    if prep.fock is not None:
        for lam in config.lambda_values:
            problem = prep.oscillator_at(lam)
            for t in config.times:
                deficit = max(0.0, 1.0 - oscillator.route_overlap(problem, prep.psi0, t))
                rows.append(_verify_row("squeeze_route", deficit, lam=lam, t=t, a="exact", b="squeeze"))
    return rows


def verify_breaches(rows: Iterable[ResultRow]) -> list[ResultRow]:
    return [r for r in rows if r.metric in VERIFY_THRESHOLDS and not r.value <= VERIFY_THRESHOLDS[r.metric]]


def required_breaches(config: ProblemConfig, rows: Iterable[ResultRow]) -> list[ResultRow]:
    """Rows of a pair listed under `required` whose value exceeds its threshold."""
    breaches = []
    for r in rows:
        key = f"{r.method_a}-{r.method_b}"
        if key in config.required and r.metric != METRIC_SLOPE:
            if not (isinstance(r.value, float) and math.isfinite(r.value) and r.value <= config.required[key]):
                breaches.append(r)
    return breaches


def enforce(config: ProblemConfig, rows: list[ResultRow]) -> None:
    """Raise NumericalFailure carrying every breached row."""
    breaches = required_breaches(config, rows) + verify_breaches(rows)
    if breaches:
        names = sorted({f"{r.method_a}-{r.method_b}:{r.metric}" for r in breaches})
        raise NumericalFailure(f"{len(breaches)} oracle agreement(s) breached: {', '.join(names)}", rows=breaches)
