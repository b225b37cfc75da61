"""Wasserstein-2 barycenters of a conditional family.

Four routes to (an approximation of) the measure minimizing the
p-weighted sum of squared Wasserstein distances to the family's atoms:

- ``barycenter_fixed_support``: the restricted problem on a fixed grid
  is one joint linear program (per-atom transport variables sharing the
  grid weights as their common column marginal); solved exactly.
- ``barycenter_entropic``: iterative Bregman projections on a fixed
  grid, log-domain.  The reported objective is evaluated with exact
  transport afterwards, so it is honest even when the weights are only
  approximately optimal.
- ``barycenter_free_support``: fixed-point iteration alternating exact
  couplings with barycentric projection of the support points.
- ``barycenter_1d`` / ``barycenter_1d_exact``: the one-dimensional
  closed form; the quantile function of the barycenter is the p-weighted
  average of the atoms' quantile functions.  The ``_exact`` variant
  evaluates that average on the union of all cumulative breakpoints and
  is exact for every weight pattern; the resolution variant samples a
  uniform midpoint grid and is exact when all atom weights are
  multiples of 1/R.

Minimizers need not be unique; results are deterministic, and callers
should compare objectives rather than supports across methods.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .densesimplex import solve_standard_form
from .errors import (
    DimensionMismatchError,
    DimensionNotOneError,
    LpInfeasibleError,
    SolverFailureError,
    SupportDimensionMismatchError,
)
from .measure import ConditionalFamily, DiscreteMeasure, coalesce, mixture
from .ot import cost_matrix, solve_comonotone_1d, solve_exact, wasserstein_sq

__all__ = [
    "BarycenterResult",
    "objective",
    "default_support",
    "barycenter_fixed_support",
    "barycenter_entropic",
    "barycenter_free_support",
    "barycenter_1d",
    "barycenter_1d_exact",
    "fixed_support_weights",
    "entropic_weights",
    "free_support_points",
    "quantile_grid_measure",
    "quantile_exact_measure",
]


@dataclass(frozen=True, eq=False)
class BarycenterResult:
    """A candidate barycenter with its exactly-evaluated objective.

    ``objective`` always equals the p-weighted sum of ``per_atom_w2``,
    and each per-atom value is the exact squared Wasserstein distance
    from that atom to ``nu0``.  ``lp_objective`` carries the raw linear
    program value for the fixed-support method (a cross-check; None for
    the other methods).
    """

    nu0: DiscreteMeasure
    objective: float
    per_atom_w2: dict
    method: str
    iterations: int
    converged: bool
    lp_objective: float | None = None
    history: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not np.isfinite(self.objective) or self.objective < 0.0:
            raise SolverFailureError(
                f"barycenter objective {self.objective!r} is not a valid cost"
            )


def _exact_pair_cost(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact W2^2; the 1-D closed form where available, simplex otherwise."""
    if mu.dim == 1:
        return solve_comonotone_1d(mu, nu).cost
    return solve_exact(mu, nu).cost


# An atom this light contributes nothing to the objective but can still
# destabilize the solvers; it is dropped with a warning.
NEGLIGIBLE_ATOM = 1e-12


def _solvable_family(family: ConditionalFamily) -> ConditionalFamily:
    kept = [a for a in family.atoms if a.p >= NEGLIGIBLE_ATOM]
    if len(kept) == len(family.atoms):
        return family
    dropped = [a.label for a in family.atoms if a.p < NEGLIGIBLE_ATOM]
    warnings.warn(
        f"dropping {len(dropped)} negligible atom(s) {dropped} "
        f"(probability below {NEGLIGIBLE_ATOM})",
        stacklevel=3,
    )
    total = sum(a.p for a in kept)
    from .measure import ConditionalAtom

    return ConditionalFamily(
        tuple(ConditionalAtom(a.label, a.p / total, a.law) for a in kept)
    )


def _result(
    family: ConditionalFamily,
    nu0: DiscreteMeasure,
    method: str,
    iterations: int,
    converged: bool,
    lp_objective: float | None = None,
    history: tuple = (),
) -> BarycenterResult:
    per_atom = {a.label: _exact_pair_cost(a.law, nu0) for a in family.atoms}
    obj = float(sum(a.p * per_atom[a.label] for a in family.atoms))
    return BarycenterResult(
        nu0=nu0,
        objective=obj,
        per_atom_w2=per_atom,
        method=method,
        iterations=iterations,
        converged=converged,
        lp_objective=lp_objective,
        history=history,
    )


def objective(family: ConditionalFamily, nu: DiscreteMeasure) -> float:
    """The p-weighted sum of exact squared Wasserstein distances to nu."""
    if nu.dim != family.dim:
        raise DimensionMismatchError(
            f"candidate has dimension {nu.dim}, family has {family.dim}"
        )
    return float(
        sum(a.p * wasserstein_sq(a.law, nu, method="exact") for a in family.atoms)
    )


def default_support(family: ConditionalFamily) -> np.ndarray:
    """Coalesced union of all atom supports (the default restriction grid)."""
    return coalesce(mixture(family)).support


# ---------------------------------------------------------------------------
# fixed support: exact joint LP
# ---------------------------------------------------------------------------

def _check_support(family: ConditionalFamily, support) -> np.ndarray:
    S = np.asarray(support, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.ndim != 2 or S.shape[0] == 0:
        raise SupportDimensionMismatchError("support must be a nonempty point list")
    if S.shape[1] != family.dim:
        raise SupportDimensionMismatchError(
            f"support has dimension {S.shape[1]}, family has {family.dim}"
        )
    return S


def _assemble_joint_lp(family: ConditionalFamily, S: np.ndarray):
    """Joint LP: transport variables per atom plus shared grid weights.

    Variable layout: [gamma^1 row-major, ..., gamma^A row-major, w].
    Constraints: per-atom row sums fixed to the atom's weights, per-atom
    column sums tied to w, and sum(w) = 1.
    """
    K = S.shape[0]
    sizes = [a.law.n for a in family.atoms]
    offsets = np.concatenate([[0], np.cumsum([n * K for n in sizes])])
    n_gamma = int(offsets[-1])
    w_off = n_gamma
    n_vars = n_gamma + K

    c = np.zeros(n_vars)
    rows, cols, vals = [], [], []
    b = []
    r = 0
    for a_idx, atom in enumerate(family.atoms):
        n = atom.law.n
        off = int(offsets[a_idx])
        Ca = cost_matrix(atom.law.support, S)
        c[off : off + n * K] = (atom.p * Ca).ravel()
        for i in range(n):
            cols.extend(range(off + i * K, off + (i + 1) * K))
            rows.extend([r] * K)
            vals.extend([1.0] * K)
            b.append(float(atom.law.weights[i]))
            r += 1
    for a_idx, atom in enumerate(family.atoms):
        n = atom.law.n
        off = int(offsets[a_idx])
        for j in range(K):
            cols.extend(range(off + j, off + n * K, K))
            rows.extend([r] * n)
            vals.extend([1.0] * n)
            cols.append(w_off + j)
            rows.append(r)
            vals.append(-1.0)
            b.append(0.0)
            r += 1
    cols.extend(range(w_off, w_off + K))
    rows.extend([r] * K)
    vals.extend([1.0] * K)
    b.append(1.0)
    r += 1

    A = sparse.coo_matrix((vals, (rows, cols)), shape=(r, n_vars))
    return c, A, np.asarray(b)


def fixed_support_weights(
    family: ConditionalFamily,
    support,
    solver: str = "highs",
) -> tuple[DiscreteMeasure, int, float]:
    """Solve the joint LP; returns (measure, pivots, raw LP value)."""
    family = _solvable_family(family)
    S = _check_support(family, support)
    c, A, b = _assemble_joint_lp(family, S)
    if solver == "highs":
        res = linprog(c, A_eq=A.tocsr(), b_eq=b, bounds=(0, None), method="highs-ds")
        if res.status != 0:
            raise LpInfeasibleError(f"joint LP failed with status {res.status}: {res.message}")
        x, fun, nit = res.x, float(res.fun), int(res.nit)
    elif solver == "bland":
        out = solve_standard_form(c, A.toarray(), b)
        x, fun, nit = out.x, out.fun, out.iterations
    else:
        raise ValueError(f"unknown LP engine {solver!r}")

    K = S.shape[0]
    w = np.maximum(x[-K:], 0.0)
    w = w / w.sum()
    return DiscreteMeasure(S, w), nit, fun


def barycenter_fixed_support(
    family: ConditionalFamily,
    support,
    solver: str = "highs",
) -> BarycenterResult:
    """Globally optimal weights on a fixed grid via one joint LP.

    ``solver`` selects the LP engine: ``"highs"`` (SciPy's dual simplex,
    the default) or ``"bland"`` (the in-repo dense revised simplex; only
    sensible for small grids).  Both are deterministic.
    """
    nu0, nit, fun = fixed_support_weights(family, support, solver)
    return _result(family, nu0, "fixed_support_exact", nit, True, lp_objective=fun)


# ---------------------------------------------------------------------------
# fixed support: iterative Bregman projections
# ---------------------------------------------------------------------------

def _lse(m: np.ndarray, axis: int) -> np.ndarray:
    mx = np.max(m, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.sum(np.exp(m - mx), axis=axis)) + np.squeeze(mx, axis=axis)


def entropic_weights(
    family: ConditionalFamily,
    support,
    epsilon: float,
    max_iter: int = 1000,
    tol: float = 1e-9,
) -> tuple[DiscreteMeasure, int, bool]:
    """Bregman-projection weights; returns (measure, sweeps, converged)."""
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    family = _solvable_family(family)
    S = _check_support(family, support)
    K = S.shape[0]
    probs = family.probabilities

    logKs = [-cost_matrix(a.law.support, S) / epsilon for a in family.atoms]
    with np.errstate(divide="ignore"):
        log_mus = [np.log(a.law.weights) for a in family.atoms]
    gs = [np.zeros(K) for _ in family.atoms]

    w = np.full(K, 1.0 / K)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        logw = np.zeros(K)
        Ss = []
        for a_idx in range(len(family)):
            f = log_mus[a_idx] - _lse(logKs[a_idx] + gs[a_idx][None, :], axis=1)
            Sa = _lse(logKs[a_idx] + f[:, None], axis=0)
            Ss.append(Sa)
            logw = logw + probs[a_idx] * Sa
        for a_idx in range(len(family)):
            gs[a_idx] = logw - Ss[a_idx]
        w_new = np.exp(logw - logw.max())
        w_new = w_new / w_new.sum()
        delta = float(np.abs(w_new - w).sum())
        w = w_new
        if delta < tol:
            converged = True
            break

    return DiscreteMeasure(S, w), it, converged


def barycenter_entropic(
    family: ConditionalFamily,
    support,
    epsilon: float,
    max_iter: int = 1000,
    tol: float = 1e-9,
) -> BarycenterResult:
    """Entropic barycenter on a fixed grid (log-domain Bregman projections).

    Converged means the L1 change of the grid weights fell below ``tol``
    before ``max_iter`` sweeps; the result is returned either way, with
    the flag recording which happened.  The objective is evaluated with
    exact transport on the returned weights.
    """
    nu0, it, converged = entropic_weights(family, support, epsilon, max_iter, tol)
    return _result(family, nu0, "fixed_support_entropic", it, converged)


# ---------------------------------------------------------------------------
# free support fixed point
# ---------------------------------------------------------------------------

def free_support_points(
    family: ConditionalFamily,
    k: int,
    init_seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-9,
) -> tuple[DiscreteMeasure, int, bool, tuple]:
    """Fixed-point support refinement; returns (measure, iters, converged, history)."""
    family = _solvable_family(family)
    mix = mixture(family)
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > mix.n:
        raise ValueError(f"k={k} exceeds the {mix.n} available mixture points")
    rng = np.random.default_rng(init_seed)
    idx = rng.choice(mix.n, size=k, replace=False, p=mix.weights)
    Y = mix.support[np.sort(idx)].copy()
    w = np.full(k, 1.0 / k)
    heaviest = mix.support[int(np.argmax(mix.weights))]

    history = []
    prev_obj = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        nu = DiscreteMeasure(Y, w)
        sols = [solve_exact(a.law, nu) for a in family.atoms]
        obj = float(sum(a.p * s.cost for a, s in zip(family.atoms, sols)))
        if obj > prev_obj + 1e-12 * max(1.0, abs(prev_obj)):
            raise SolverFailureError(
                "free-support objective increased between iterations"
            )
        history.append(obj)
        prev_obj = obj

        weighted_targets = np.zeros_like(Y)
        col_mass = np.zeros(k)
        for a, s in zip(family.atoms, sols):
            g = s.coupling.weights
            weighted_targets += a.p * (g.T @ a.law.support)
            col_mass += a.p * g.sum(axis=0)
        empty = col_mass <= 1e-15
        col_mass[empty] = 1.0
        Y_new = weighted_targets / col_mass[:, None]
        if np.any(empty):
            Y_new[empty] = heaviest
        shift = float(np.max(np.abs(Y_new - Y)))
        Y = Y_new
        if shift < tol:
            converged = True
            break

    return DiscreteMeasure(Y, w), it, converged, tuple(history)


def barycenter_free_support(
    family: ConditionalFamily,
    k: int,
    init_seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-9,
) -> BarycenterResult:
    """Local refinement with k movable support points of weight 1/k.

    Initial points are drawn without replacement from the family mixture
    proportionally to weight (seeded, hence reproducible).  Each round
    solves the exact couplings to the current candidate and moves every
    support point to the weighted average of its matched sources; the
    objective is nonincreasing and the loop stops when support movement
    falls below ``tol``.  A support point left without mass (possible
    only through degenerate inputs) is respawned at the heaviest mixture
    point rather than failing.
    """
    nu0, it, converged, history = free_support_points(
        family, k, init_seed, max_iter, tol
    )
    return _result(family, nu0, "free_support", it, converged, history=history)


# ---------------------------------------------------------------------------
# one-dimensional closed form
# ---------------------------------------------------------------------------

def _sorted_quantile_data(law: DiscreteMeasure):
    order = np.argsort(law.support[:, 0], kind="stable")
    vals = law.support[order, 0]
    cum = np.cumsum(law.weights[order])
    cum[-1] = max(cum[-1], 1.0)
    return vals, cum


def _quantile_at(vals: np.ndarray, cum: np.ndarray, t: np.ndarray) -> np.ndarray:
    idx = np.minimum(np.searchsorted(cum, t, side="left"), len(vals) - 1)
    return vals[idx]


def _quantile_average(family: ConditionalFamily, t: np.ndarray) -> np.ndarray:
    total = np.zeros_like(t)
    for atom in family.atoms:
        vals, cum = _sorted_quantile_data(atom.law)
        total += atom.p * _quantile_at(vals, cum, t)
    return total


def quantile_grid_measure(family: ConditionalFamily, resolution: int) -> DiscreteMeasure:
    """The quantile-average law sampled on the R-point midpoint grid."""
    family = _solvable_family(family)
    if family.dim != 1:
        raise DimensionNotOneError("quantile averaging requires 1-D atoms")
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    t = (np.arange(resolution) + 0.5) / resolution
    values = _quantile_average(family, t)
    return coalesce(
        DiscreteMeasure(values[:, None], np.full(resolution, 1.0 / resolution))
    )


def quantile_exact_measure(family: ConditionalFamily) -> DiscreteMeasure:
    """The exact quantile-average law via merged cumulative breakpoints."""
    family = _solvable_family(family)
    if family.dim != 1:
        raise DimensionNotOneError("quantile averaging requires 1-D atoms")
    cums = [_sorted_quantile_data(a.law)[1] for a in family.atoms]
    breaks = np.unique(np.concatenate(cums + [np.array([1.0])]))
    breaks = breaks[(breaks > 0.0) & (breaks <= 1.0)]
    lo = np.concatenate([[0.0], breaks[:-1]])
    masses = breaks - lo
    keep = masses > 0.0
    mids = (lo[keep] + breaks[keep]) / 2.0
    values = _quantile_average(family, mids)
    return coalesce(DiscreteMeasure(values[:, None], masses[keep]))


def barycenter_1d(family: ConditionalFamily, resolution: int) -> BarycenterResult:
    """Quantile-average barycenter on the R-point midpoint grid.

    The candidate is the law of t -> sum_a p_a F_a^{-1}(t) sampled at
    t = (i - 1/2)/R with uniform weights 1/R.  Exact whenever every atom
    weight is a multiple of 1/R; a discretization otherwise.
    """
    nu0 = quantile_grid_measure(family, resolution)
    return _result(family, nu0, "quantile_grid", 0, True)


def barycenter_1d_exact(family: ConditionalFamily) -> BarycenterResult:
    """Exact 1-D barycenter via the union of cumulative breakpoints.

    The quantile average is a step function whose jumps can only sit at
    some atom's cumulative weight; evaluating it once per interval of
    the merged breakpoint grid represents its law exactly, for arbitrary
    weight patterns.
    """
    nu0 = quantile_exact_measure(family)
    return _result(family, nu0, "quantile_exact", 0, True)
