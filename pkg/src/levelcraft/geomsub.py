"""Structured subproblem solvers: nearest-point QP and epigraph LP.

Every outer algorithm in this package reduces its per-iteration work to one
of two small dense problems over a polyhedron made of cutting planes and a
box:

* ``solve_nearest_point`` — project a prox center onto {x : cuts, box}
  (identity-Hessian QP) with a dual active-set method; infeasibility falls
  out as an unbounded dual ray and is returned with a Farkas certificate.
* ``solve_epigraph_lp`` — minimize a max of affine pieces over {cuts, box}
  via the epigraph reformulation, solved by a dense simplex with bounded
  variables and Bland's anti-cycling rule.

Both come with brute-force reference implementations (active-set subset
enumeration, lifted vertex enumeration) used as independent test oracles.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

PRIMAL_TOL = 1e-8


class SubproblemFailure(RuntimeError):
    """A subproblem solver exceeded its iteration guard or met a contract violation."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with entries in R u {-inf, +inf}."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d vectors of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("box bounds may not be NaN")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper elementwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @staticmethod
    def cube(dimension: int, radius: float) -> "Box":
        return Box(np.full(dimension, -radius), np.full(dimension, radius))

    @staticmethod
    def unbounded(dimension: int) -> "Box":
        return Box(np.full(dimension, -np.inf), np.full(dimension, np.inf))

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def center(self) -> np.ndarray:
        if not self.is_finite():
            raise ValueError("center of an unbounded box is undefined")
        return 0.5 * (self.lower + self.upper)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)


@dataclass(frozen=True)
class QpProblem:
    """min ||x - center||^2 / 2 over {x : slope_i @ x <= rhs_i} intersect box.

    ``cuts`` is a list of (slope, rhs) pairs meaning slope @ x <= rhs.
    """

    center: np.ndarray
    cuts: list
    box: Box


@dataclass(frozen=True)
class QpSolution:
    status: str  # "optimal" | "infeasible"
    point: Optional[np.ndarray]
    multipliers: np.ndarray        # one per cut, nonnegative
    box_lower_mult: np.ndarray
    box_upper_mult: np.ndarray
    residual: float                # max KKT violation at the returned point
    farkas_rows: Optional[np.ndarray] = None     # indices into stacked_rows(...)
    farkas_weights: Optional[np.ndarray] = None  # nonnegative, same length


@dataclass(frozen=True)
class LpProblem:
    """min over {cuts} intersect box of max_j pieces_j(x); box must be finite."""

    pieces: list
    cuts: list
    box: Box


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible"
    value: float  # +inf when infeasible
    argmin: Optional[np.ndarray]


def stacked_rows(q: QpProblem) -> "tuple[np.ndarray, np.ndarray]":
    """All constraint rows of a QP as one (A, b) system meaning A x <= b.

    Order: user cuts first, then finite lower box rows (-e_j, -lb_j), then
    finite upper box rows (e_j, ub_j). Farkas certificates index into this.
    """
    d = q.center.shape[0]
    rows = []
    rhs = []
    for slope, b in q.cuts:
        rows.append(np.asarray(slope, dtype=float))
        rhs.append(float(b))
    for j in range(d):
        if np.isfinite(q.box.lower[j]):
            e = np.zeros(d)
            e[j] = -1.0
            rows.append(e)
            rhs.append(-float(q.box.lower[j]))
    for j in range(d):
        if np.isfinite(q.box.upper[j]):
            e = np.zeros(d)
            e[j] = 1.0
            rows.append(e)
            rhs.append(float(q.box.upper[j]))
    if rows:
        return np.vstack(rows), np.asarray(rhs)
    return np.zeros((0, d)), np.zeros(0)


def _split_multipliers(q: QpProblem, lam_by_row: dict) -> "tuple[np.ndarray, np.ndarray, np.ndarray]":
    d = q.center.shape[0]
    n_cuts = len(q.cuts)
    mult = np.zeros(n_cuts)
    lower = np.zeros(d)
    upper = np.zeros(d)
    lower_rows = [j for j in range(d) if np.isfinite(q.box.lower[j])]
    upper_rows = [j for j in range(d) if np.isfinite(q.box.upper[j])]
    for row, lam in lam_by_row.items():
        if row < n_cuts:
            mult[row] = lam
        elif row < n_cuts + len(lower_rows):
            lower[lower_rows[row - n_cuts]] = lam
        else:
            upper[upper_rows[row - n_cuts - len(lower_rows)]] = lam
    return mult, lower, upper


def solve_nearest_point(q: QpProblem, *, feas_tol: float = PRIMAL_TOL,
                        max_iter: Optional[int] = None) -> QpSolution:
    """Exact projection of the prox center onto the cut/box polyhedron.

    Dual active-set method specialized to the identity Hessian: start at the
    unconstrained minimizer (the center) and repeatedly pull in the most
    violated row, taking full or partial dual steps. Box bounds are treated
    as ordinary unit-slope cuts. The active set stays linearly independent
    by construction, so each step is a small exact least-squares solve.
    Deterministic: most-violated selection, first index on ties.
    """
    center = np.asarray(q.center, dtype=float)
    if not np.all(np.isfinite(center)):
        raise ValueError("QP center must be finite")
    A, b = stacked_rows(q)
    n_rows, d = A.shape
    x = center.copy()
    if n_rows == 0:
        return QpSolution("optimal", x, np.zeros(0), np.zeros(d), np.zeros(d), 0.0)
    if max_iter is None:
        max_iter = 50 * (n_rows + d + 10)

    active: list = []     # row indices, kept linearly independent
    lam: list = []        # multipliers matching `active`
    steps = 0
    while True:
        viol = A @ x - b
        p = int(np.argmax(viol))
        if viol[p] <= feas_tol:
            break
        a_p = A[p]
        lam_p = 0.0
        # pull row p into the active set, dropping blockers as needed
        while True:
            steps += 1
            if steps > max_iter:
                raise SubproblemFailure("nearest-point QP exceeded its iteration guard")
            if active:
                N = A[active]
                r, *_ = np.linalg.lstsq(N.T, a_p, rcond=None)
                z = a_p - N.T @ r
            else:
                r = np.zeros(0)
                z = a_p
            zz = float(z @ z)
            if zz > 1e-14 * max(1.0, float(a_p @ a_p)):
                viol_p = float(a_p @ x - b[p])
                if viol_p <= feas_tol:
                    # resolved by earlier partial steps
                    if lam_p > 0.0:
                        active.append(p)
                        lam.append(lam_p)
                    break
                t_full = viol_p / zz
                t_dual, j_block = np.inf, -1
                for idx, (lam_j, r_j) in enumerate(zip(lam, r)):
                    if r_j > 1e-12 and lam_j / r_j < t_dual - 1e-15:
                        t_dual, j_block = lam_j / r_j, idx
                t = min(t_full, t_dual)
                x = x - t * z
                lam = [lj - t * rj for lj, rj in zip(lam, r)]
                lam_p += t
                if t_full <= t_dual:
                    active.append(p)
                    lam.append(lam_p)
                    break
                del active[j_block]
                del lam[j_block]
            else:
                # a_p lies in the span of the active normals
                if not active or np.all(r <= 1e-12):
                    rows = [p, *active]
                    weights = np.concatenate([[1.0], -np.minimum(np.asarray(r), 0.0)])
                    return QpSolution(
                        "infeasible", None, np.zeros(len(q.cuts)),
                        np.zeros(d), np.zeros(d), float(viol[p]),
                        farkas_rows=np.asarray(rows, dtype=int),
                        farkas_weights=weights,
                    )
                t_dual, j_block = np.inf, -1
                for idx, (lam_j, r_j) in enumerate(zip(lam, r)):
                    if r_j > 1e-12 and lam_j / r_j < t_dual - 1e-15:
                        t_dual, j_block = lam_j / r_j, idx
                lam = [lj - t_dual * rj for lj, rj in zip(lam, r)]
                lam_p += t_dual
                del active[j_block]
                del lam[j_block]

    lam_by_row = {row: lj for row, lj in zip(active, lam) if lj > 0.0}
    mult, low_m, up_m = _split_multipliers(q, lam_by_row)
    # KKT residual: primal feasibility, stationarity, complementary slackness
    viol = A @ x - b
    grad = x - center
    for row, lj in lam_by_row.items():
        grad = grad + lj * A[row]
    comp = max((abs(lj * (b[row] - float(A[row] @ x))) for row, lj in lam_by_row.items()), default=0.0)
    residual = max(float(np.max(viol, initial=0.0)), float(np.linalg.norm(grad)), comp)
    return QpSolution("optimal", x, mult, low_m, up_m, residual)


# ---------------------------------------------------------------------------
# Epigraph LP via dense simplex with bounded variables
# ---------------------------------------------------------------------------


def _bounded_simplex(A: np.ndarray, b: np.ndarray, cost: np.ndarray,
                     lo: np.ndarray, hi: np.ndarray,
                     *, tol: float = 1e-9, max_pivots: Optional[int] = None):
    """min cost @ z[:len(cost)]  s.t.  A z = b, lo <= z <= hi.

    Two-phase revised simplex for bounded variables; Bland's rule (lowest
    eligible index entering, lowest variable index among blocking ties
    leaving) prevents cycling. The last ``n_rows`` columns of A must form an
    identity block, used as the initial basis. Returns (status, z) with
    status in {"optimal", "infeasible", "unbounded"}.
    """
    n_rows, n_vars = A.shape
    if max_pivots is None:
        max_pivots = 400 + 40 * (n_rows + n_vars)

    state = np.zeros(n_vars, dtype=int)  # nonbasic rest position: 0 at lower, 1 at upper
    vals = np.array(lo, dtype=float)
    for j in range(n_vars):
        if not np.isfinite(lo[j]):
            if not np.isfinite(hi[j]):
                raise SubproblemFailure("simplex requires each column to have a finite bound")
            vals[j] = hi[j]
            state[j] = 1
    basis = list(range(n_vars - n_rows, n_vars))
    in_basis = np.zeros(n_vars, dtype=bool)
    in_basis[basis] = True

    # rows whose initial basic slack would go negative get an artificial column
    resid = b - A @ np.where(in_basis, 0.0, vals)
    art_rows = [i for i in range(n_rows) if resid[i] < -tol]
    art_cols: list = []
    if art_rows:
        n_art = len(art_rows)
        A = np.hstack([A, np.zeros((n_rows, n_art))])
        lo = np.concatenate([lo, np.zeros(n_art)])
        hi = np.concatenate([hi, np.full(n_art, np.inf)])
        vals = np.concatenate([vals, np.zeros(n_art)])
        state = np.concatenate([state, np.zeros(n_art, dtype=int)])
        in_basis = np.concatenate([in_basis, np.zeros(n_art, dtype=bool)])
        for k, i in enumerate(art_rows):
            col = n_vars + k
            A[i, col] = -1.0
            old = basis[i]
            in_basis[old] = False
            vals[old] = lo[old]
            state[old] = 0
            basis[i] = col
            in_basis[col] = True
            art_cols.append(col)

    total_vars = A.shape[1]
    pivots = 0

    def run_phase(c_phase: np.ndarray) -> str:
        nonlocal pivots
        while True:
            pivots += 1
            if pivots > max_pivots:
                raise SubproblemFailure("simplex exceeded its pivot guard")
            B = A[:, basis]
            nb_vals = np.where(in_basis, 0.0, vals)
            try:
                xB = np.linalg.solve(B, b - A @ nb_vals)
                y = np.linalg.solve(B.T, c_phase[basis])
            except np.linalg.LinAlgError as exc:  # pragma: no cover - basis stays invertible
                raise SubproblemFailure("singular simplex basis") from exc
            red = c_phase - y @ A
            entering, direction = -1, 0.0
            for j in range(total_vars):
                if in_basis[j] or hi[j] - lo[j] <= 1e-15:
                    continue  # fixed columns never enter
                if state[j] == 0 and red[j] < -tol:
                    entering, direction = j, 1.0
                    break  # Bland: lowest eligible index
                if state[j] == 1 and red[j] > tol:
                    entering, direction = j, -1.0
                    break
            if entering < 0:
                for i, jb in enumerate(basis):
                    vals[jb] = xB[i]
                return "optimal"
            w = np.linalg.solve(B, A[:, entering])
            # ratio test: basic variable i moves at rate -direction * w[i]
            min_room = hi[entering] - lo[entering]  # bound flip of the entering column
            leave = -1
            for i, jb in enumerate(basis):
                rate = -direction * w[i]
                if rate < -1e-11:
                    room = (xB[i] - lo[jb]) / (-rate)
                elif rate > 1e-11 and np.isfinite(hi[jb]):
                    room = (hi[jb] - xB[i]) / rate
                else:
                    continue
                room = max(room, 0.0)
                if room < min_room - 1e-12:
                    min_room, leave = room, i
                elif room <= min_room + 1e-12 and leave >= 0 and jb < basis[leave]:
                    leave = i
            if not np.isfinite(min_room):
                return "unbounded"
            step = max(float(min_room), 0.0)
            if leave == -1:
                vals[entering] = hi[entering] if direction > 0 else lo[entering]
                state[entering] = 1 - state[entering]
            else:
                jl = basis[leave]
                leave_val = xB[leave] - direction * w[leave] * step
                to_upper = np.isfinite(hi[jl]) and abs(leave_val - hi[jl]) <= abs(leave_val - lo[jl])
                vals[jl] = hi[jl] if to_upper else lo[jl]
                state[jl] = 1 if to_upper else 0
                in_basis[jl] = False
                start = lo[entering] if direction > 0 else hi[entering]
                vals[entering] = start + direction * step
                basis[leave] = entering
                in_basis[entering] = True

    if art_cols:
        c1 = np.zeros(total_vars)
        c1[art_cols] = 1.0
        if run_phase(c1) != "optimal":  # pragma: no cover - phase 1 is bounded below
            raise SubproblemFailure("phase-1 simplex did not terminate optimally")
        art_sum = float(sum(vals[c] for c in art_cols))
        if art_sum > 1e-7:
            return "infeasible", None
        for c in art_cols:  # freeze at zero; the ratio test forces basic ones out on any move
            hi[c] = 0.0
    c2 = np.zeros(total_vars)
    c2[: cost.shape[0]] = cost
    status = run_phase(c2)
    if status != "optimal":
        return status, None
    return "optimal", vals[: cost.shape[0]].copy()


def solve_epigraph_lp(lp: LpProblem, *, tol: float = 1e-9) -> LpSolution:
    """Optimal value and argmin of min_x max_j pieces_j(x) over cuts and box.

    Reformulated as min t subject to pieces_j(x) <= t plus the cuts, over the
    finite box; a conservative finite range for t comes from interval
    arithmetic over the box. An empty feasible region returns value +inf with
    the infeasible flag (callers treat that as "the localizer is empty").
    """
    if not lp.pieces:
        raise ValueError("epigraph LP needs at least one piece")
    if not lp.box.is_finite():
        raise SubproblemFailure("epigraph LP requires a finite box")
    d = lp.box.dimension
    lo_x, hi_x = lp.box.lower, lp.box.upper
    t_lo, t_hi = np.inf, -np.inf
    for piece in lp.pieces:
        s = np.asarray(piece.slope, dtype=float)
        t_lo = min(t_lo, piece.intercept + float(np.sum(np.minimum(s * lo_x, s * hi_x))))
        t_hi = max(t_hi, piece.intercept + float(np.sum(np.maximum(s * lo_x, s * hi_x))))
    t_lo -= 1.0
    t_hi += 1.0

    n_rows = len(lp.pieces) + len(lp.cuts)
    n_vars = d + 1 + n_rows
    A = np.zeros((n_rows, n_vars))
    b = np.zeros(n_rows)
    for j, piece in enumerate(lp.pieces):
        A[j, :d] = piece.slope
        A[j, d] = -1.0
        A[j, d + 1 + j] = 1.0
        b[j] = -piece.intercept
    for k, (slope, rhs) in enumerate(lp.cuts):
        row = len(lp.pieces) + k
        A[row, :d] = np.asarray(slope, dtype=float)
        A[row, d + 1 + row] = 1.0
        b[row] = float(rhs)
    lo = np.concatenate([lo_x, [t_lo], np.zeros(n_rows)])
    hi = np.concatenate([hi_x, [t_hi], np.full(n_rows, np.inf)])
    cost = np.zeros(d + 1)
    cost[d] = 1.0

    status, z = _bounded_simplex(A, b, cost, lo, hi, tol=tol)
    if status == "infeasible":
        return LpSolution("infeasible", np.inf, None)
    if status != "optimal":  # pragma: no cover - bounded by construction
        raise SubproblemFailure("epigraph LP reported unbounded over a finite box")
    x = z[:d]
    value = max(piece.value_at(x) for piece in lp.pieces)
    return LpSolution("optimal", value, x)


# ---------------------------------------------------------------------------
# Brute-force reference oracles (slow, exhaustive; used by the test suite)
# ---------------------------------------------------------------------------


def _consistent_solve(M: np.ndarray, rhs: np.ndarray, scale_tol: float = 1e-8):
    """Solve M u = rhs, returning None when M is singular or the system inconsistent."""
    try:
        u = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(u)):
        return None
    if float(np.linalg.norm(M @ u - rhs)) > scale_tol * (1.0 + float(np.linalg.norm(rhs))):
        return None
    return u


def brute_force_nearest_point(q: QpProblem, *, feas_tol: float = 1e-9) -> QpSolution:
    """Projection by enumerating every candidate active set of size <= d.

    For each subset S of rows, the equality-constrained projection is solved
    in closed form; feasible candidates are ranked by objective. The optimum
    of a feasible QP always appears among candidates from linearly
    independent subsets (Caratheodory on the KKT cone), and an empty
    candidate list certifies infeasibility.
    """
    center = np.asarray(q.center, dtype=float)
    A, b = stacked_rows(q)
    n_rows, d = A.shape
    if n_rows == 0 or np.all(A @ center - b <= feas_tol):
        return QpSolution("optimal", center.copy(), np.zeros(len(q.cuts)),
                          np.zeros(d), np.zeros(d), 0.0)
    best, best_val = None, np.inf
    for k in range(1, min(d, n_rows) + 1):
        for subset in itertools.combinations(range(n_rows), k):
            N = A[list(subset)]
            mu = _consistent_solve(N @ N.T, N @ center - b[list(subset)])
            if mu is None:
                continue
            x = center - N.T @ mu
            if np.all(A @ x - b <= feas_tol):
                val = 0.5 * float((x - center) @ (x - center))
                if val < best_val:
                    best_val, best = val, x
    if best is None:
        return QpSolution("infeasible", None, np.zeros(len(q.cuts)),
                          np.zeros(d), np.zeros(d), np.inf)
    return QpSolution("optimal", best, np.zeros(len(q.cuts)), np.zeros(d), np.zeros(d), 0.0)


def brute_force_epigraph_lp(lp: LpProblem, *, feas_tol: float = 1e-9) -> LpSolution:
    """Epigraph LP by vertex enumeration of the lifted (x, t) polyhedron.

    All (d+1)-subsets of the stacked rows (pieces as halfspaces in the lifted
    space, cuts, box rows) are intersected; feasible intersection points are
    the vertices, and the LP optimum is their minimal t. The lifted
    polyhedron is pointed (the box bounds x, the pieces bound t from below),
    so a feasible LP always attains its optimum at such a vertex.
    """
    d = lp.box.dimension
    rows, rhs = [], []
    for piece in lp.pieces:
        rows.append(np.concatenate([piece.slope, [-1.0]]))
        rhs.append(-piece.intercept)
    for slope, r in lp.cuts:
        rows.append(np.concatenate([np.asarray(slope, dtype=float), [0.0]]))
        rhs.append(float(r))
    for j in range(d):
        e = np.zeros(d + 1)
        e[j] = -1.0
        rows.append(e.copy())
        rhs.append(-float(lp.box.lower[j]))
        e[j] = 1.0
        rows.append(e)
        rhs.append(float(lp.box.upper[j]))
    A = np.vstack(rows)
    b = np.asarray(rhs)
    best_val, best_x = np.inf, None
    for subset in itertools.combinations(range(A.shape[0]), d + 1):
        v = _consistent_solve(A[list(subset)], b[list(subset)])
        if v is None:
            continue
        if np.all(A @ v - b <= feas_tol) and v[d] < best_val:
            best_val, best_x = float(v[d]), v[:d]
    if best_x is None:
        return LpSolution("infeasible", np.inf, None)
    return LpSolution("optimal", best_val, best_x)
