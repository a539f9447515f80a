"""Benchmark problem generators, desk fixtures, and dataset ingestion.

Four experiment families, each exposed as a ``ConstrainedProblem``:

* ``gen_socp_kkt`` — penalty form of an SOCP optimality system with a planted
  solution, so the optimal value is exactly 0 (nonsmooth distance objective,
  linear equality rows split into inequality-oracle pairs).
* ``gen_lmi`` — eigenvalue penalty for a feasibility system of matrix
  inequalities, again with a planted solution and optimal value 0.
* ``gen_qcqp`` — random convex QCQP over a box with a built-in strictly
  feasible anchor point (smooth oracles with analytic gradients).
* ``load_npc`` / ``make_npc_blob_problem`` — binary and multiclass
  Neyman-Pearson classification from a CSV file or a synthetic blob sample.

Plus small closed-form desk fixtures used throughout the test suite.
Generators are pure functions of their seed: the same seed reproduces the
instance bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geomsub import Box
from .oracle import ConstrainedProblem, ConvexOracle


class IngestError(RuntimeError):
    """A dataset file or label layout violates the documented CSV contract."""


# ---------------------------------------------------------------------------
# Desk fixtures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeskQcqpMeta:
    x_star: np.ndarray
    scale: float


def make_desk_qcqp(scale: float = 1.0) -> ConstrainedProblem:
    """2-d fixture min scale*(x1^2+x2^2) s.t. 1 - x1 - x2 <= 0 on [-10,10]^2.

    Optimum (0.5, 0.5) with value scale/2 and multiplier `scale` by symmetry
    and stationarity, so every certificate is checkable in closed form.
    """
    def f(x):
        return scale * float(x @ x), 2.0 * scale * x

    def g(x):
        return 1.0 - float(x[0]) - float(x[1]), np.array([-1.0, -1.0])

    return ConstrainedProblem(
        objective=ConvexOracle(2, f, "desk-f"),
        constraints=[ConvexOracle(2, g, "desk-g1")],
        domain=Box.cube(2, 10.0),
        known_fstar=0.5 * scale,
        known_multipliers=np.array([scale]),
        name="desk",
        meta=DeskQcqpMeta(np.array([0.5, 0.5]), scale),
    )


def make_desk_1d() -> ConstrainedProblem:
    """min x^2 s.t. x - 1 <= 0 on [-10, 10]; the unconstrained minimum is feasible."""
    def f(x):
        return float(x[0]) ** 2, np.array([2.0 * x[0]])

    def g(x):
        return float(x[0]) - 1.0, np.array([1.0])

    return ConstrainedProblem(
        objective=ConvexOracle(1, f, "desk1d-f"),
        constraints=[ConvexOracle(1, g, "desk1d-g")],
        domain=Box.cube(1, 10.0),
        known_fstar=0.0,
        known_multipliers=np.array([0.0]),
        name="desk-1d",
    )


def make_smooth_quadratic(weights: Sequence[float] = (2.0, 50.0)) -> ConstrainedProblem:
    """Unconstrained separable quadratic f(x) = sum w_j x_j^2 / 2, optimum 0 at the origin.

    Smooth with gradient Lipschitz constant max(weights); used for rate
    certificates where the curvature is known analytically.
    """
    w = np.asarray(weights, dtype=float)

    def f(x):
        return 0.5 * float(w @ (x * x)), w * x

    return ConstrainedProblem(
        objective=ConvexOracle(w.shape[0], f, "quadratic"),
        constraints=[],
        domain=Box.unbounded(w.shape[0]),
        known_fstar=0.0,
        name="quadratic",
        meta={"L": float(np.max(w))},
    )


def make_sharp_fixture() -> ConstrainedProblem:
    """Anisotropic sharp fixture f(x) = ||A x||, optimum 0 at the origin.

    Nonsmooth only at the optimum and grows linearly away from it
    (f >= sigma_min(A) ||x||), the regime where restarts pay off. Unlike a
    plain norm, a single minorant projection does not land on the optimum.
    """
    mat = np.array([[3.0, 1.0], [0.0, 1.0]])
    gram = mat.T @ mat

    def f(x):
        val = float(np.linalg.norm(mat @ x))
        if val <= 1e-300:
            return 0.0, np.zeros(2)
        return val, gram @ x / val

    svals = np.linalg.svd(mat, compute_uv=False)
    return ConstrainedProblem(
        objective=ConvexOracle(2, f, "sharp"),
        constraints=[],
        domain=Box.unbounded(2),
        known_fstar=0.0,
        name="sharp",
        meta={"sigma_min": float(svals[-1]), "sigma_max": float(svals[0])},
    )


# ---------------------------------------------------------------------------
# SOCP optimality-system penalty
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SocpKktInstance:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    cone_sizes: tuple
    planted: np.ndarray  # [u, v, 1], objective value 0


def _soc_project_block(y: np.ndarray) -> np.ndarray:
    t, rest = y[0], y[1:]
    nrm = float(np.linalg.norm(rest))
    if nrm <= t:
        return y.copy()
    if nrm <= -t:
        return np.zeros_like(y)
    coef = 0.5 * (t + nrm)
    out = np.empty_like(y)
    out[0] = coef
    out[1:] = coef * rest / nrm
    return out


def soc_project(y: np.ndarray, cone_sizes: Sequence[int]) -> np.ndarray:
    """Projection onto a product of second-order cones (first entry is the apex)."""
    out = np.empty_like(y)
    off = 0
    for size in cone_sizes:
        out[off:off + size] = _soc_project_block(y[off:off + size])
        off += size
    return out


def _distance_and_subgrad(y: np.ndarray, cone_sizes) -> "tuple[float, np.ndarray]":
    proj = soc_project(y, cone_sizes)
    diff = y - proj
    dist = float(np.linalg.norm(diff))
    if dist <= 1e-14:
        return 0.0, np.zeros_like(y)
    return dist, diff / dist


def gen_socp_kkt(seed: int, cone_sizes: Sequence[int] = (23, 23),
                 n_eq: int = 3) -> ConstrainedProblem:
    """Penalty problem whose optimum is a planted SOCP optimality certificate.

    Variables are [u, v, 1] with the final homogenizing coordinate pinned to
    1 through the box. The objective is the cone distance of u plus the dual
    cone distance of the affine slack s = c - A^T v (the second-order cone is
    self-dual); each equality row of the optimality system contributes two
    opposing linear inequality oracles. The generator plants a solution, so
    the optimal value is exactly 0; the planted certificate and the rows of A
    are unit-normalized so desk-scale instances stay well conditioned.
    """
    cone_sizes = tuple(int(s) for s in cone_sizes)
    q = sum(cone_sizes)
    p = int(n_eq)
    rng = np.random.default_rng(seed)
    z = rng.normal(size=q)
    z = z / np.linalg.norm(z)
    u_star = soc_project(z, cone_sizes)
    s_star = u_star - z  # Moreau: lies in the dual cone, orthogonal to u_star
    v_star = rng.normal(size=p)
    A = rng.normal(size=(p, q))
    A = A / np.linalg.norm(A, axis=1, keepdims=True)
    b = A @ u_star
    c = s_star + A.T @ v_star
    d = q + p + 1

    def objective(x):
        u = x[:q]
        v = x[q:q + p]
        s = c * x[-1] - A.T @ v
        du, gu = _distance_and_subgrad(u, cone_sizes)
        ds, gs = _distance_and_subgrad(s, cone_sizes)
        grad = np.concatenate([gu, -(A @ gs), [float(c @ gs)]])
        return du + ds, grad

    penalty = ConvexOracle(d, objective, "socp-penalty")

    def linear_oracle(row: np.ndarray, sign: float, name: str) -> ConvexOracle:
        vec = sign * row

        def g(x, vec=vec):
            return float(vec @ x), vec.copy()

        return ConvexOracle(d, g, name)

    # rows [A, 0, -b] x = 0 and [-c, b, 0] x = 0, each split into <=/>= pairs;
    # rows are normalized (same zero set, unit-sharp geometry)
    eq_rows = [np.concatenate([A[i], np.zeros(p), [-b[i]]]) for i in range(p)]
    eq_rows.append(np.concatenate([-c, b, [0.0]]))
    constraints = []
    for i, row in enumerate(eq_rows):
        row = row / np.linalg.norm(row)
        constraints.append(linear_oracle(row, 1.0, f"socp-eq{i}+"))
        constraints.append(linear_oracle(row, -1.0, f"socp-eq{i}-"))

    lower = np.full(d, -np.inf)
    upper = np.full(d, np.inf)
    lower[-1] = upper[-1] = 1.0  # pin the homogenizing coordinate
    planted = np.concatenate([u_star, v_star, [1.0]])
    return ConstrainedProblem(
        objective=penalty,
        constraints=constraints,
        domain=Box(lower, upper),
        known_fstar=0.0,
        name="socp-kkt",
        meta=SocpKktInstance(A, b, c, cone_sizes, planted),
    )


# ---------------------------------------------------------------------------
# LMI feasibility penalty
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LmiInstance:
    a_mats: list
    planted: np.ndarray  # svec of a strictly feasible X, objective value 0


def svec(M: np.ndarray) -> np.ndarray:
    """Upper triangle with sqrt(2)-scaled off-diagonals; preserves Frobenius products."""
    q = M.shape[0]
    iu = np.triu_indices(q)
    scale = np.where(iu[0] == iu[1], 1.0, math.sqrt(2.0))
    return M[iu] * scale


def smat(v: np.ndarray, q: int) -> np.ndarray:
    iu = np.triu_indices(q)
    scale = np.where(iu[0] == iu[1], 1.0, 1.0 / math.sqrt(2.0))
    M = np.zeros((q, q))
    M[iu] = v * scale
    return M + M.T - np.diag(np.diag(M))


def gen_lmi(seed: int, q: int, k: int) -> ConstrainedProblem:
    """Eigenvalue penalty for the system X >= I, A_i^T X + X A_i <= 0.

    The matrix variable is its scaled upper triangle (svec), so the prox
    subproblems stay in plain vector form. Each A_i is conjugated from a
    negative-definite core, which makes a scaled F^T F strictly feasible;
    the planted point has penalty exactly 0.
    """
    if q > 60:
        raise ValueError("desk-scale generator: q must be at most 60")
    rng = np.random.default_rng(seed)
    # F with singular values in [1, 2]: the conjugation stays well conditioned,
    # so desk-scale runs converge inside the benchmark oracle budgets
    ql, _ = np.linalg.qr(rng.normal(size=(q, q)))
    qr, _ = np.linalg.qr(rng.normal(size=(q, q)))
    F = ql @ np.diag(rng.uniform(1.0, 2.0, size=q)) @ qr.T
    F_inv = np.linalg.inv(F)
    a_mats = []
    for _ in range(k):
        B = rng.normal(size=(q, q))
        C = rng.normal(size=(q, q))
        A_i = F_inv @ (-B @ B.T + C - C.T) @ F
        a_mats.append(A_i / np.linalg.norm(A_i, 2))  # unit spectral norm, feasibility preserved
    gram = F.T @ F
    planted_mat = 1.5 * gram / float(np.linalg.eigvalsh(gram)[0])
    dim = q * (q + 1) // 2
    eye = np.eye(q)

    def objective(x):
        X = smat(x, q)
        total = 0.0
        grad = np.zeros((q, q))
        evals, evecs = np.linalg.eigh(eye - X)
        top = float(evals[-1])
        if top > 0.0:
            v = evecs[:, -1]
            total += top
            grad -= np.outer(v, v)
        for A_i in a_mats:
            M = A_i.T @ X + X @ A_i
            M = 0.5 * (M + M.T)  # symmetric up to rounding
            evals, evecs = np.linalg.eigh(M)
            top = float(evals[-1])
            if top > 0.0:
                v = evecs[:, -1]
                total += top
                grad += A_i @ np.outer(v, v) + np.outer(v, v) @ A_i.T
        return total, svec(grad)

    return ConstrainedProblem(
        objective=ConvexOracle(dim, objective, "lmi-penalty"),
        constraints=[],
        domain=Box.unbounded(dim),
        known_fstar=0.0,
        name="lmi",
        meta=LmiInstance(a_mats, svec(planted_mat)),
    )


# ---------------------------------------------------------------------------
# Convex QCQP
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QcqpInstance:
    Qs: list          # Q_0 .. Q_m, positive semidefinite
    cs: list
    ds: list
    anchor: np.ndarray  # strictly feasible point with margin 1


def gen_qcqp(seed: int, n: int, m: int, *, box_radius: float = 10.0,
             constraint_offset: float = 10.0) -> ConstrainedProblem:
    """Random convex QCQP over a box; smooth oracles with analytic gradients.

    Each Q_i = G^T G / n for Gaussian G, linear terms Gaussian, constraint
    offsets held at the constant default 10. Constraint linear terms are
    shifted along a random anchor point so the anchor is strictly feasible
    with margin 1, which keeps every generated instance solvable.
    """
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    rng = np.random.default_rng(seed)
    anchor = rng.uniform(-0.5 * box_radius, 0.5 * box_radius, size=n)

    def quad(i, Q, cvec, dconst):
        def f(x, Q=Q, cvec=cvec, dconst=dconst):
            Qx = Q @ x
            return 0.5 * float(x @ Qx) + float(cvec @ x) + dconst, Qx + cvec
        return f

    Qs, cs, ds = [], [], []
    G = rng.normal(size=(n, n))
    Qs.append(G.T @ G / n)
    cs.append(rng.normal(size=n))
    ds.append(0.0)
    for _ in range(m):
        G = rng.normal(size=(n, n))
        Q = G.T @ G / n
        c_raw = rng.normal(size=n)
        slack = 0.5 * float(anchor @ (Q @ anchor)) + float(c_raw @ anchor) + constraint_offset
        c_i = c_raw - (slack + 1.0) * anchor / float(anchor @ anchor)
        Qs.append(Q)
        cs.append(c_i)
        ds.append(constraint_offset)

    objective = ConvexOracle(n, quad(0, Qs[0], cs[0], ds[0]), "qcqp-f")
    constraints = [ConvexOracle(n, quad(i + 1, Qs[i + 1], cs[i + 1], ds[i + 1]), f"qcqp-g{i + 1}")
                   for i in range(m)]
    return ConstrainedProblem(
        objective=objective,
        constraints=constraints,
        domain=Box.cube(n, box_radius),
        name="qcqp",
        meta=QcqpInstance(Qs, cs, ds, anchor),
    )


# ---------------------------------------------------------------------------
# Neyman-Pearson classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NpcHyper:
    kappa: object = 0.5   # float, or per-class sequence in multiclass mode
    r: float = 7.0
    ridge: float = 0.01


@dataclass(frozen=True)
class NpcDataset:
    features: np.ndarray
    labels: np.ndarray
    mode: str
    hyper: NpcHyper


def _softplus(t: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, t)


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _build_binary(data: NpcDataset) -> ConstrainedProblem:
    X, y = data.features, data.labels
    hyper = data.hyper
    pos = X[y == 1]
    neg = X[y == -1]
    if len(pos) == 0 or len(neg) == 0:
        raise IngestError("binary mode needs samples of both labels +1 and -1")
    d = X.shape[1]
    kappa = float(hyper.kappa)

    def objective(w):
        t = pos @ w
        val = float(np.mean(_softplus(t))) + 0.5 * hyper.ridge * float(w @ w)
        grad = pos.T @ _sigmoid(t) / len(pos) + hyper.ridge * w
        return val, grad

    def class_loss(w):
        t = -(neg @ w)
        val = float(np.mean(_softplus(t))) - kappa
        grad = -(neg.T @ _sigmoid(t)) / len(neg)
        return val, grad

    def ball(w):
        return float(w @ w) - hyper.r ** 2, 2.0 * w

    return ConstrainedProblem(
        objective=ConvexOracle(d, objective, "npc-obj"),
        constraints=[ConvexOracle(d, ball, "npc-ball"),
                     ConvexOracle(d, class_loss, "npc-neg")],
        domain=Box.cube(d, hyper.r),
        name="npc-binary",
        meta=data,
    )


def _build_multiclass(data: NpcDataset) -> ConstrainedProblem:
    X, y = data.features, data.labels
    hyper = data.hyper
    n, d = X.shape
    J = int(np.max(y))
    counts = np.array([int(np.sum(y == j)) for j in range(1, J + 1)])
    if np.any(counts == 0):
        empty = 1 + int(np.argmin(counts))
        raise IngestError(f"multiclass mode: class {empty} has no samples")
    kappas = hyper.kappa
    if np.isscalar(kappas):
        kappas = [float(kappas)] * J
    kappas = np.asarray(kappas, dtype=float)
    if kappas.shape != (J,):
        raise IngestError(f"need one kappa per class ({J}), got {kappas.shape}")
    dim = J * d
    onehot = np.zeros((n, J))
    onehot[np.arange(n), y - 1] = 1.0

    def log_probs(w):
        W = w.reshape(J, d)
        scores = X @ W.T
        scores -= scores.max(axis=1, keepdims=True)
        logz = np.log(np.sum(np.exp(scores), axis=1, keepdims=True))
        return scores - logz

    def objective(w):
        lp = log_probs(w)
        probs = np.exp(lp)
        val = -float(np.sum(lp[np.arange(n), y - 1])) / n
        grad = (probs - onehot).T @ X / n
        return val, grad.reshape(-1)

    def class_loss(j):
        mask = y == (j + 1)
        nj = counts[j]

        def g(w, mask=mask, nj=nj, j=j):
            lp = log_probs(w)
            probs = np.exp(lp)
            val = -float(np.sum(lp[mask, j])) / nj - kappas[j]
            grad = (probs[mask] - onehot[mask]).T @ X[mask] / nj
            return val, grad.reshape(-1)

        return g

    def ball(w):
        return float(w @ w) - hyper.r ** 2, 2.0 * w

    constraints = [ConvexOracle(dim, ball, "npc-ball")]
    constraints += [ConvexOracle(dim, class_loss(j), f"npc-class{j + 1}") for j in range(J)]
    return ConstrainedProblem(
        objective=ConvexOracle(dim, objective, "npc-xent"),
        constraints=constraints,
        domain=Box.cube(dim, hyper.r),
        name="npc-multiclass",
        meta=data,
    )


def build_npc(features: np.ndarray, labels: np.ndarray, mode: str,
              hyper: Optional[NpcHyper] = None) -> ConstrainedProblem:
    """Assemble the constrained classification problem from an in-memory sample."""
    hyper = hyper or NpcHyper()
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise IngestError("features must be (n, d) with one label per row")
    data = NpcDataset(features, labels, mode, hyper)
    if mode == "binary":
        if not set(np.unique(labels)) <= {-1, 1}:
            raise IngestError("binary labels must be -1 or +1")
        return _build_binary(data)
    if mode == "multiclass":
        if np.any(labels < 1):
            raise IngestError("multiclass labels must be 1..J")
        return _build_multiclass(data)
    raise IngestError(f"unknown mode {mode!r}")


def load_npc(csv_path: str, mode: str, hyper: Optional[NpcHyper] = None,
             *, header: bool = False) -> ConstrainedProblem:
    """CSV ingestion: comma-separated floats, last column an integer label.

    ``header=True`` skips the first line. Labels are {-1, +1} in binary mode
    and {1..J} in multiclass mode; malformed rows and empty classes raise
    :class:`IngestError` with the offending row number.
    """
    rows = []
    labels = []
    with open(csv_path) as fh:
        lines = fh.readlines()
    start = 1 if header else 0
    width = None
    for idx, line in enumerate(lines[start:], start=start + 1):
        line = line.strip()
        if not line:
            continue
        cells = line.split(",")
        if width is None:
            width = len(cells)
            if width < 2:
                raise IngestError(f"row {idx}: need at least one feature and a label")
        elif len(cells) != width:
            raise IngestError(f"row {idx}: expected {width} columns, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells[:-1]])
            label = float(cells[-1])
        except ValueError as exc:
            raise IngestError(f"row {idx}: {exc}") from None
        if label != int(label):
            raise IngestError(f"row {idx}: label must be an integer, got {cells[-1]!r}")
        labels.append(int(label))
    if not rows:
        raise IngestError("no data rows found")
    return build_npc(np.asarray(rows), np.asarray(labels, dtype=int), mode, hyper)


def make_npc_blobs(seed: int, mode: str, n_per_class: int = 20,
                   d: int = 2) -> "tuple[np.ndarray, np.ndarray]":
    """Synthetic Gaussian blob sample standing in for the dataset benchmarks."""
    rng = np.random.default_rng(seed)
    if mode == "binary":
        centers = [np.full(d, 1.5), np.full(d, -1.5)]
        labels_per = [1, -1]
    else:
        centers = []
        for j in range(3):
            ang = 2.0 * math.pi * j / 3.0
            ctr = np.zeros(d)
            ctr[0] = 2.0 * math.cos(ang)
            ctr[min(1, d - 1)] = 2.0 * math.sin(ang)
            centers.append(ctr)
        labels_per = [1, 2, 3]
    feats, labels = [], []
    for ctr, lab in zip(centers, labels_per):
        feats.append(ctr + rng.normal(size=(n_per_class, d)))
        labels.extend([lab] * n_per_class)
    return np.vstack(feats), np.asarray(labels, dtype=int)


def make_npc_blob_problem(seed: int, mode: str, hyper: Optional[NpcHyper] = None,
                          n_per_class: int = 20, d: int = 2) -> ConstrainedProblem:
    if hyper is None:
        hyper = NpcHyper() if mode == "binary" else NpcHyper(kappa=0.8)
    features, labels = make_npc_blobs(seed, mode, n_per_class, d)
    return build_npc(features, labels, mode, hyper)


def write_npc_csv(path: str, features: np.ndarray, labels: np.ndarray,
                  *, header: bool = False) -> None:
    lines = []
    if header:
        lines.append(",".join([f"x{j}" for j in range(features.shape[1])] + ["label"]))
    for row, lab in zip(features, labels):
        lines.append(",".join(repr(float(v)) for v in row) + f",{int(lab)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
