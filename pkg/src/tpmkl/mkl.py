"""Multiple kernel learning by alternating an SVM step and an LP step.

With the kernel weights ``beta`` fixed, one-vs-rest SVMs are trained on the
combined Gram matrix (QP step). With the SVMs fixed, the per-node normals
``w_c^p = sum_i alpha_i^c y_ic Psi^p(V_i)`` give

    F(beta) = 1/2 sum_p beta_p S_p + lam * sum_j xi_j(beta),   S_p = sum_c ||w_c^p||^2

where each slack is a hinge over a group of margin rows that are linear
in ``beta``. ``F`` is minimised exactly over the simplex by an LP.

Two slack definitions are available:

``"ovr"`` (default)
    one slack per (class, video): ``max(0, 1 - y_ic g_c(V_i))``. This is
    the loss the one-vs-rest QP step minimises, so each step decreases the
    same objective.
``"joint"``
    one slack per video: ``max_{c' != c_j} max(0, 1 - (g_{c_j} - g_{c'})(V_j))``.

``lam`` is the SVM box constant.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError
from .features_io import read_container, write_container
from .kernels import KernelBank, check_simplex, combine, node_matrix, uniform_weights
from .pyramid import NodeId
from .simplex_lp import linprog
from .svm import SvmModel, decision_matrix, train_one_vs_rest

log = logging.getLogger(__name__)

MODEL_MAGIC = b"TPMM"
LOSSES = ("ovr", "joint")
SIMPLEX_CLAMP = 1e-12


@dataclass(frozen=True, eq=False)
class LpProblem:
    """Data of the LP step for a fixed set of SVMs.

    Slack ``j`` is ``max(0, max_k 1 - margins[j, k] @ beta - offsets[j, k])``.
    For the joint loss, row ``j`` is a training video, ``k`` runs over its
    rival classes ``rivals[j, k]`` and ``offsets`` holds ``b_{c_j} - b_{c'}``.
    For the one-vs-rest loss, row ``j`` is a (class, video) pair with a
    single margin ``y_ic * <w_c^p, Psi^p(V_i)>`` and offset ``y_ic * b_c``.
    """

    S: np.ndarray
    margins: np.ndarray
    offsets: np.ndarray
    rivals: np.ndarray | None = None
    loss_weight: float = 1.0
    loss: str = "joint"

    @property
    def n_nodes(self) -> int:
        return self.S.shape[0]

    def slacks(self, beta) -> np.ndarray:
        """``xi_j(beta)`` for every slack row."""
        beta = np.asarray(beta, dtype=np.float64)
        z = 1.0 - self.margins @ beta - self.offsets
        return np.maximum(0.0, z.max(axis=1)) if z.shape[1] else np.zeros(z.shape[0])

    def objective(self, beta) -> float:
        beta = np.asarray(beta, dtype=np.float64)
        return float(0.5 * self.S @ beta + self.loss_weight * self.slacks(beta).sum())


@dataclass(eq=False)
class MklModel:
    beta: np.ndarray
    node_ids: list
    svms: list
    scales: np.ndarray
    video_ids: list
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    meta: dict = field(default_factory=dict)
    #: optional ``(C, p, q)`` primal weights ``sum_i alpha_i y_i Psi^p(V_i)``
    node_weights: np.ndarray | None = None

    @property
    def class_ids(self) -> list:
        return [m.class_id for m in self.svms]

    def beta_by_level(self) -> np.ndarray:
        L = max(v[0] for v in self.node_ids)
        out = np.zeros(L)
        for b, v in zip(self.beta, self.node_ids):
            out[v[0] - 1] += b
        return out


def qp_step(bank: KernelBank, beta, labels, C_reg=1.0, tol=1e-6, classes=None):
    """One-vs-rest SVMs on ``combine(bank, beta)``."""
    beta = check_simplex(beta)
    return train_one_vs_rest(combine(bank, beta), labels, C_reg, tol, classes)


def build_lp(bank: KernelBank, svms, labels, loss="ovr", loss_weight=None) -> LpProblem:
    labels = np.asarray(labels)
    n = bank.n
    if labels.shape != (n,):
        raise ShapeError(f"{labels.size} labels for {n} videos")
    if loss not in LOSSES:
        raise ValueError(f"loss must be one of {LOSSES}, got {loss!r}")
    class_ids = np.array([m.class_id for m in svms])
    if any(m.alpha.shape != (n,) for m in svms):
        raise ShapeError("SVMs were not trained on this bank's videos")
    pos = {int(c): k for k, c in enumerate(class_ids)}
    try:
        own = np.array([pos[int(c)] for c in labels], dtype=np.int64)
    except KeyError as exc:
        raise ShapeError(f"no SVM for class {exc.args[0]}") from None
    C = len(svms)
    U = np.column_stack([m.coef for m in svms])  # (n, C)
    bias = np.array([m.bias for m in svms])
    # KU[p, j, c] = <w_c^p, Psi^p(V_j)>
    KU = np.einsum("pij,jc->pic", bank.grams, U)
    S = np.einsum("ic,pic->p", U, KU)
    if loss_weight is None:
        loss_weight = svms[0].C_reg if svms else 1.0

    if loss == "ovr":
        Y = np.where(own[:, None] == np.arange(C)[None, :], 1.0, -1.0)  # (n, C)
        # rows ordered class-major: (c, i)
        margins = np.moveaxis(Y.T[None] * np.swapaxes(KU, 1, 2), 0, -1).reshape(C * n, 1, -1)
        offsets = (Y.T * bias[:, None]).reshape(C * n, 1)
        rivals = np.repeat(class_ids, n).reshape(C * n, 1)
        return LpProblem(S, margins, offsets, rivals, float(loss_weight), loss)

    rival_pos = np.array([[c for c in range(C) if c != own[j]] for j in range(n)],
                         dtype=np.int64).reshape(n, C - 1)
    own_scores = KU[:, np.arange(n), own]  # (p, n)
    rival_scores = KU[:, np.arange(n)[:, None], rival_pos]  # (p, n, C-1)
    margins = np.moveaxis(own_scores[:, :, None] - rival_scores, 0, -1)
    offsets = bias[own][:, None] - bias[rival_pos]
    return LpProblem(S, margins, offsets, class_ids[rival_pos], float(loss_weight), loss)


def lp_step(problem: LpProblem, method="dual") -> np.ndarray:
    """Minimise ``problem.objective`` over the simplex.

    ``method="dual"`` solves the LP dual, whose constraint rows are one per
    node (plus one per video when ``K > 1``), and reads the weights off its
    multipliers. ``method="primal"`` solves the slack formulation directly;
    both give the same optimum and the second serves as a cross-check.
    """
    p = problem.n_nodes
    if p < 1:
        raise ShapeError("at least one node is required")
    if p == 1:
        return np.ones(1)
    m = problem.margins
    n, K, _ = m.shape
    lam = problem.loss_weight
    if n == 0 or K == 0 or lam == 0:
        beta = np.zeros(p)
        beta[int(np.argmin(problem.S))] = 1.0
        return beta
    r = 1.0 - problem.offsets
    if method == "dual":
        beta = _solve_dual(problem.S, m, r, lam)
    elif method == "primal":
        beta = _solve_primal(problem.S, m, r, lam)
    else:
        raise ParameterError(f"unknown LP method {method!r}")
    return project_simplex_clamp(beta)


def _solve_primal(S, m, r, lam):
    # xi_j = U_j - w_j with 0 <= w_j <= U_j keeps every row feasible at w = 0
    n, K, p = m.shape
    U = np.maximum(0.0, (r - np.minimum(0.0, m.min(axis=2))).max(axis=1))
    c = np.concatenate([0.5 * S, -lam * np.ones(n)])
    A = np.zeros((n * K, p + n))
    A[:, :p] = -m.reshape(n * K, p)
    A[np.arange(n * K), p + np.repeat(np.arange(n), K)] = 1.0
    b = (U[:, None] - r).reshape(-1)
    A_eq = np.zeros((1, p + n))
    A_eq[0, :p] = 1.0
    upper = np.concatenate([np.full(p, np.inf), U])
    return linprog(c, A, b, A_eq, [1.0], upper=upper).x[:p]


def _solve_dual(S, m, r, lam):
    # max sum(r*pi) + mu  s.t.  m_p.pi + mu <= S_p/2,  sum_k pi_jk <= lam,  pi >= 0
    n, K, p = m.shape
    half = 0.5 * np.asarray(S, dtype=np.float64)
    shift = max(0.0, -float(half.min()))  # mu = mu+ - mu- - shift keeps rhs >= 0
    nv = n * K + 2
    c = np.concatenate([-r.reshape(-1), [-1.0, 1.0]])
    rows = [np.hstack([m.reshape(n * K, p).T, np.ones((p, 1)), -np.ones((p, 1))])]
    rhs = [half + shift]
    upper = np.full(nv, np.inf)
    if K == 1:
        upper[:n] = lam
    else:
        G = np.zeros((n, nv))
        G[np.repeat(np.arange(n), K), np.arange(n * K)] = 1.0
        rows.append(G)
        rhs.append(np.full(n, lam))
    res = linprog(c, np.vstack(rows), np.concatenate(rhs), upper=upper)
    return -res.y_ub[:p]


def project_simplex_clamp(beta) -> np.ndarray:
    """Zero out tiny negatives left by the LP and renormalise."""
    beta = np.where(beta < SIMPLEX_CLAMP, 0.0, beta)
    return beta / beta.sum()


def train_mkl(bank: KernelBank, labels, C_reg=1.0, tol=1e-6, max_outer=50, tol_outer=1e-4,
              loss="ovr", beta0=None, classes=None, callback=None) -> MklModel:
    """Alternate QP and LP steps from uniform weights until ``beta`` settles.

    Stops when ``max|beta_new - beta_old| <= tol_outer`` or after
    ``max_outer`` LP steps. The LP step keeps the current weights whenever
    they are already optimal for the fixed SVMs, so ties never move
    ``beta``. A QP step that raises the objective above the last recorded
    value also ends the loop, which keeps ``objective_trace``
    non-increasing; with ``loss="ovr"`` this only happens at the level of
    the SVM solver tolerance. The returned SVMs are always trained on the
    returned ``beta``.

    ``callback(iteration, beta, svms, problem)`` runs after each LP step.
    """
    if max_outer < 1:
        raise ValueError("max_outer must be >= 1")
    labels = np.asarray(labels)
    p = len(bank.node_ids)
    beta = uniform_weights(p) if beta0 is None else check_simplex(beta0).copy()
    trace = []
    stop = "max-outer"
    it = 0
    while it < max_outer:
        svms = qp_step(bank, beta, labels, C_reg, tol, classes)
        trained_at = beta
        problem = build_lp(bank, svms, labels, loss)
        current = problem.objective(beta)
        if trace and current > trace[-1]:
            slack = sum(m.gap for m in svms)
            stop = "qp-stalled" if current - trace[-1] <= slack else "qp-ascent"
            log.info("outer %d: SVM step raised the objective (%.10g > %.10g); stopping",
                     it, current, trace[-1])
            break
        it += 1
        new_beta = lp_step(problem)
        new_obj = problem.objective(new_beta)
        if new_obj >= current - 1e-12 * (1.0 + abs(current)):
            new_beta, new_obj = beta, current
        trace.append(new_obj)
        delta = float(np.max(np.abs(new_beta - beta)))
        beta = new_beta
        if callback is not None:
            callback(it, beta.copy(), svms, problem)
        log.debug("outer %d: objective %.10g, |dbeta| %.3g", it, new_obj, delta)
        if delta <= tol_outer:
            stop = "beta-stable"
            break
    if not np.array_equal(trained_at, beta):
        svms = qp_step(bank, beta, labels, C_reg, tol, classes)
    converged = stop in ("beta-stable", "qp-stalled")
    return MklModel(beta, list(bank.node_ids), svms, bank.scales.copy(), list(bank.video_ids),
                    trace, it, converged, {"stop": stop, "loss": loss})


def fixed_beta_model(bank: KernelBank, beta, labels, C_reg=1.0, tol=1e-6,
                     classes=None, loss="ovr") -> MklModel:
    """SVMs on a pinned combination; no weight learning."""
    beta = check_simplex(beta).copy()
    svms = qp_step(bank, beta, labels, C_reg, tol, classes)
    value = build_lp(bank, svms, labels, loss).objective(beta)
    return MklModel(beta, list(bank.node_ids), svms, bank.scales.copy(), list(bank.video_ids),
                    [value], 1, True, {"stop": "fixed-beta", "loss": loss})


def model_decisions(model: MklModel, k_rows) -> np.ndarray:
    return decision_matrix(model.svms, k_rows)


def attach_node_weights(model: MklModel, train_reps) -> MklModel:
    """Store per-class, per-node primal weights so prediction needs no training data."""
    if [r.video_id for r in train_reps] != list(model.video_ids):
        raise ShapeError("training representations do not match the model's videos")
    coef = np.column_stack([m.coef for m in model.svms])  # (n, C)
    W = np.stack([coef.T @ node_matrix(train_reps, v) for v in model.node_ids], axis=1)
    model.node_weights = W
    return model


def predict_reps(model: MklModel, reps) -> np.ndarray:
    """Decision values ``(m, C)`` from stored node weights."""
    if model.node_weights is None:
        raise ShapeError("model carries no node weights")
    out = np.tile(np.array([m.bias for m in model.svms]), (len(reps), 1))
    for p, v in enumerate(model.node_ids):
        if model.beta[p] == 0:
            continue
        out += model.beta[p] * model.scales[p] * (node_matrix(reps, v) @ model.node_weights[:, p].T)
    return out


def save_model(path, model: MklModel) -> None:
    meta = dict(model.meta)
    meta.update({
        "node_ids": [str(v) for v in model.node_ids],
        "video_ids": list(model.video_ids),
        "class_ids": [int(m.class_id) for m in model.svms],
        "biases": [float(m.bias).hex() for m in model.svms],
        "C_reg": [float(m.C_reg).hex() for m in model.svms],
        "iterations": int(model.iterations),
        "converged": bool(model.converged),
        "objective_trace": [float(v).hex() for v in model.objective_trace],
    })
    arrays = {
        "beta": model.beta,
        "scales": model.scales,
        "alpha": np.vstack([m.alpha for m in model.svms]),
        "labels": np.vstack([m.labels for m in model.svms]),
    }
    if model.node_weights is not None:
        arrays["node_weights"] = model.node_weights
    write_container(path, MODEL_MAGIC, meta, arrays)


def load_model(path) -> MklModel:
    meta, arrays = read_container(path, MODEL_MAGIC)
    svms = [
        SvmModel(arrays["alpha"][k], float.fromhex(meta["biases"][k]), arrays["labels"][k],
                 float.fromhex(meta["C_reg"][k]), int(c))
        for k, c in enumerate(meta["class_ids"])
    ]
    trace = [float.fromhex(v) for v in meta["objective_trace"]]
    extra = {k: v for k, v in meta.items()
             if k not in {"node_ids", "video_ids", "class_ids", "biases", "C_reg",
                          "iterations", "converged", "objective_trace"}}
    return MklModel(arrays["beta"], [NodeId.parse(s) for s in meta["node_ids"]], svms,
                    arrays["scales"], list(meta["video_ids"]), trace,
                    int(meta["iterations"]), bool(meta["converged"]), extra,
                    arrays.get("node_weights"))
