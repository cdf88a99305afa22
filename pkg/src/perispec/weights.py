"""Time-periodic weight fields and the favorability functionals built on them.

A weight ``m(t, x)`` is either a closed-form expression in ``t`` and the
spatial coordinates, or a sampled time-by-node array.  Both kinds are periodic
in ``t`` by construction: closed forms are evaluated at ``t mod T`` and sampled
arrays index modulo their time lattice.

The two scalar functionals that drive the existence theory are

* ``time_average`` -- the per-node time mean, written ``m_hat`` throughout, and
* ``p_functional`` -- the time integral of the spatial maximum, i.e. the best
  instantaneous growth rate accumulated over one period.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .geometry import Boundary, Grid

DEFAULT_N_TIME = 256

_FUNCS = {"sin": np.sin, "cos": np.cos}
_NAMES = {"t", "x", "y", "pi", "T"}


class WeightExprError(ValueError):
    pass


def _validate_node(node: ast.AST) -> None:
    if isinstance(node, ast.Expression):
        _validate_node(node.body)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise WeightExprError(f"non-numeric constant {node.value!r}")
    elif isinstance(node, ast.Name):
        if node.id not in _NAMES:
            raise WeightExprError(f"unknown name {node.id!r}; allowed: {sorted(_NAMES)}")
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)):
            raise WeightExprError(f"operator {type(node.op).__name__} not allowed")
        _validate_node(node.left)
        _validate_node(node.right)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise WeightExprError(f"unary {type(node.op).__name__} not allowed")
        _validate_node(node.operand)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise WeightExprError("only sin(...) and cos(...) calls are allowed")
        if len(node.args) != 1 or node.keywords:
            raise WeightExprError(f"{node.func.id} takes exactly one positional argument")
        _validate_node(node.args[0])
    else:
        raise WeightExprError(f"syntax element {type(node).__name__} not allowed in weight expressions")


@lru_cache(maxsize=512)
def _compile_expr(expr: str):
    """Compile a whitelisted arithmetic expression; returns (callable, used names)."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise WeightExprError(f"cannot parse weight expression {expr!r}: {exc}") from exc
    _validate_node(tree)
    used = {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
    code = compile(tree, "<weight-expr>", "eval")

    def fn(t, x, y, period):
        env = {"t": t, "x": x, "y": y, "pi": math.pi, "T": period}
        env.update(_FUNCS)
        return eval(code, {"__builtins__": {}}, env)

    return fn, frozenset(used)


@dataclass(frozen=True)
class S1Data:
    """Analytic facts about ``m_hat`` supplied with a closed-form weight.

    ``smoothness`` is the differentiability order of the time-averaged field,
    ``maximizer`` its (claimed) interior argmax, and ``flat_order`` the highest
    derivative order that vanishes there.  Used only to decide the smooth
    interior-maximum sufficiency test; absent data means "unknown", never a
    guess.
    """

    smoothness: float
    maximizer: tuple[float, ...]
    flat_order: int = 1


@dataclass(frozen=True)
class Weight:
    """Time-periodic weight; exactly one of ``expr`` / ``samples`` is set."""

    period: float
    expr: str | None = None
    samples: np.ndarray | None = None  # (n_time_lattice, n_nodes)
    s1_data: S1Data | None = None

    @property
    def is_closed_form(self) -> bool:
        return self.expr is not None

    def evaluate(self, t: float, grid: Grid) -> np.ndarray:
        """Field values at all grid nodes at time ``t`` (wrapped into [0, T))."""
        tau = float(t) % self.period
        if self.expr is not None:
            fn, used = _compile_expr(self.expr)
            pts = grid.nodes
            if grid.boundary is Boundary.PERIODIC:
                pts = np.mod(pts, np.asarray(grid.box))
            if "y" in used and grid.dim < 2:
                raise WeightExprError("weight expression references y on a 1-D grid")
            x = pts[:, 0]
            y = pts[:, 1] if grid.dim > 1 else None
            vals = fn(tau, x, y, self.period)
            vals = np.broadcast_to(np.asarray(vals, dtype=float), (grid.n,)).copy()
            if not np.all(np.isfinite(vals)):
                raise WeightExprError(f"weight expression {self.expr!r} is not finite on the grid")
            return vals
        samples = self.samples
        if samples.shape[1] != grid.n:
            raise ValueError(f"sampled weight has {samples.shape[1]} nodes, grid has {grid.n}")
        n_time = samples.shape[0]
        s = tau / self.period * n_time
        i0 = int(math.floor(s)) % n_time
        frac = s - math.floor(s)
        return (1.0 - frac) * samples[i0] + frac * samples[(i0 + 1) % n_time]

    def shifted(self, c: float) -> "Weight":
        """The weight ``m + c``; analytic maximizer data survives a shift."""
        if self.expr is not None:
            return replace(self, expr=f"({self.expr}) + ({c!r})")
        return replace(self, samples=_frozen(self.samples + float(c)))

    def scaled(self, c: float) -> "Weight":
        """The weight ``c * m``; maximizer data survives only positive scaling."""
        data = self.s1_data if c > 0 else None
        if self.expr is not None:
            return replace(self, expr=f"({c!r}) * ({self.expr})", s1_data=data)
        return replace(self, samples=_frozen(float(c) * self.samples), s1_data=data)

    def __add__(self, other: "Weight") -> "Weight":
        if not isinstance(other, Weight):
            return NotImplemented
        if other.period != self.period:
            raise ValueError("cannot add weights with different periods")
        if self.expr is not None and other.expr is not None:
            return Weight(self.period, expr=f"({self.expr}) + ({other.expr})")
        if self.samples is not None and other.samples is not None:
            if self.samples.shape != other.samples.shape:
                raise ValueError("cannot add sampled weights with different lattices")
            return Weight(self.period, samples=_frozen(self.samples + other.samples))
        raise ValueError("cannot add a closed-form weight to a sampled weight")

    def __mul__(self, c):
        return self.scaled(float(c))

    __rmul__ = __mul__


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def closed_form(expr: str, period: float, s1_data: S1Data | None = None) -> Weight:
    """Build a closed-form weight; the expression is validated eagerly."""
    if not period > 0.0:
        raise ValueError("period must be positive")
    _compile_expr(expr)
    return Weight(float(period), expr=expr, s1_data=s1_data)


def from_samples(samples, period: float) -> Weight:
    """Build a sampled weight from a (time lattice, node) array."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError("samples must be a (n_time >= 2, n_nodes) array")
    if not period > 0.0:
        raise ValueError("period must be positive")
    if not np.all(np.isfinite(samples)):
        raise ValueError("samples must be finite")
    return Weight(float(period), samples=_frozen(samples))


def sample_closed_form(weight: Weight, grid: Grid, n_time: int) -> Weight:
    """Discretize a closed-form weight onto a uniform time lattice."""
    times = np.arange(n_time) * (weight.period / n_time)
    rows = np.stack([weight.evaluate(t, grid) for t in times])
    return from_samples(rows, weight.period)


def _time_lattice(weight: Weight, grid: Grid, n_time: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample times 0..T inclusive and the (n_time+1, n) value table."""
    if n_time < 4:
        raise ValueError("n_time must be at least 4 samples per period")
    times = np.arange(n_time + 1) * (weight.period / n_time)
    table = np.stack([weight.evaluate(t, grid) for t in times])
    return times, table


def time_average(weight: Weight, grid: Grid, n_time: int = DEFAULT_N_TIME) -> np.ndarray:
    """Per-node time mean over one period (composite trapezoid rule)."""
    _, table = _time_lattice(weight, grid, n_time)
    coeff = np.ones(n_time + 1)
    coeff[0] = coeff[-1] = 0.5
    return (coeff[:, None] * table).sum(axis=0) / n_time


def p_functional(weight: Weight, grid: Grid, n_time: int = DEFAULT_N_TIME) -> float:
    """Time integral of the spatial maximum: trapezoid of ``max_x m(t, x)``.

    For a time-independent weight this is exactly ``T * max m``.
    """
    _, table = _time_lattice(weight, grid, n_time)
    best = table.max(axis=1)
    coeff = np.ones(n_time + 1)
    coeff[0] = coeff[-1] = 0.5
    return float((coeff * best).sum() / n_time * weight.period)


@dataclass(frozen=True)
class WeightSummary:
    m_hat: np.ndarray         # per-node time average
    m_tilde: np.ndarray       # per-sample spatial maximum
    times: np.ndarray
    p_value: float
    time_space_integral: float  # integral of m over one period and the domain
    m_hat_max: float
    m_hat_min: float
    sup_abs: float


def summarize(weight: Weight, grid: Grid, n_time: int = DEFAULT_N_TIME) -> WeightSummary:
    times, table = _time_lattice(weight, grid, n_time)
    coeff = np.ones(n_time + 1)
    coeff[0] = coeff[-1] = 0.5
    m_hat = (coeff[:, None] * table).sum(axis=0) / n_time
    m_tilde = table.max(axis=1)
    p_value = float((coeff * m_tilde).sum() / n_time * weight.period)
    integral = float(weight.period * np.dot(grid.quad_weights, m_hat))
    return WeightSummary(
        m_hat=_frozen(m_hat),
        m_tilde=_frozen(m_tilde),
        times=_frozen(times),
        p_value=p_value,
        time_space_integral=integral,
        m_hat_max=float(m_hat.max()),
        m_hat_min=float(m_hat.min()),
        sup_abs=float(np.abs(table).max()),
    )


def sup_abs(weight: Weight, grid: Grid, n_time: int = DEFAULT_N_TIME) -> float:
    """Sup of |m| over the sample lattice; used for step-size heuristics."""
    _, table = _time_lattice(weight, grid, n_time)
    return float(np.abs(table).max())


def space_independent(weight: Weight, grid: Grid, n_time: int = DEFAULT_N_TIME) -> bool:
    """True when every time slice is spatially constant up to rounding.

    Decided on the sample lattice: the largest spatial range across slices must
    stay below 1e-12 relative to the field scale.  Weights that depend on space
    only on a measure-zero time set will (correctly, for this discretization)
    be classified by their sampled values.
    """
    _, table = _time_lattice(weight, grid, n_time)
    spread = float((table.max(axis=1) - table.min(axis=1)).max())
    return spread <= 1e-12 * (1.0 + float(np.abs(table).max()))


@dataclass(frozen=True)
class ConditionReport:
    """Evaluation of the existence conditions for a positive threshold.

    The hostile-exterior condition needs only ``p_value > 0``; the
    mass-conserving boundaries additionally need the time-space integral of the
    weight to be negative.  ``marginal`` flags mark clauses within tolerance of
    zero, where the discrete sign is not trustworthy.
    """

    p_value: float
    time_space_integral: float
    d_holds: bool
    n_holds: bool
    p_holds: bool
    p_marginal: bool
    integral_marginal: bool
    tol_p: float
    tol_integral: float

    def holds_for(self, boundary: Boundary) -> bool:
        return self.d_holds if boundary is Boundary.DIRICHLET else self.n_holds

    def marginal_for(self, boundary: Boundary) -> bool:
        if boundary is Boundary.DIRICHLET:
            return self.p_marginal
        return self.p_marginal or self.integral_marginal


def check_conditions(weight: Weight, grid: Grid, n_time: int = DEFAULT_N_TIME) -> ConditionReport:
    summary = summarize(weight, grid, n_time)
    p_value = summary.p_value
    integral = summary.time_space_integral
    tol_p = 1e-9 * (1.0 + abs(p_value))
    tol_i = 1e-9 * (1.0 + abs(integral))
    p_positive = p_value > tol_p
    integral_negative = integral < -tol_i
    mass_conserving = p_positive and integral_negative
    return ConditionReport(
        p_value=p_value,
        time_space_integral=integral,
        d_holds=p_positive,
        n_holds=mass_conserving,
        p_holds=mass_conserving,
        p_marginal=abs(p_value) <= tol_p,
        integral_marginal=abs(integral) <= tol_i,
        tol_p=tol_p,
        tol_integral=tol_i,
    )


def save_sampled_csv(weight: Weight, path) -> None:
    """Write a sampled weight as (t_index, node_index, value) rows."""
    if weight.samples is None:
        raise ValueError("only sampled weights serialize to CSV; closed forms go in the config")
    from ._io import write_csv

    rows = (
        (ti, ni, float(weight.samples[ti, ni]))
        for ti in range(weight.samples.shape[0])
        for ni in range(weight.samples.shape[1])
    )
    write_csv(path, ["t_index", "node_index", "value"], rows)


def load_sampled_csv(path, period: float) -> Weight:
    """Read a sampled weight written by ``save_sampled_csv``."""
    from ._io import read_csv

    columns, rows = read_csv(path)
    if columns != ["t_index", "node_index", "value"]:
        raise ValueError(f"{path}: expected columns t_index,node_index,value, got {columns}")
    if not rows:
        raise ValueError(f"{path}: no samples")
    t_idx = np.array([int(r[0]) for r in rows])
    n_idx = np.array([int(r[1]) for r in rows])
    vals = np.array([float(r[2]) for r in rows])
    n_time, n_nodes = t_idx.max() + 1, n_idx.max() + 1
    if len(rows) != n_time * n_nodes:
        raise ValueError(f"{path}: expected a full {n_time} x {n_nodes} lattice, got {len(rows)} rows")
    samples = np.full((n_time, n_nodes), np.nan)
    samples[t_idx, n_idx] = vals
    if not np.all(np.isfinite(samples)):
        raise ValueError(f"{path}: lattice has missing entries")
    return from_samples(samples, period)
