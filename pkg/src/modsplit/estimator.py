"""Joint sparse precision estimation and significance-tested adjacency.

The joint estimator fits one precision matrix per group by minimising

    sum_k w_k * (tr(S_k T_k) - logdet T_k)
        + lam_sparse * sum_k sum_{i != j} |T_k[i, j]|
        + lam_joint  * sum_{i != j} sqrt(sum_k T_k[i, j]**2)

with ``w_k = n_k / mean(n)``. The group term pulls an edge in or out of all
groups together, so structure shared by the groups is estimated from the
pooled data. The problem is solved by ADMM on the standardised data (so the
penalty is scale free) and the result is mapped back to the data scale.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ConvergenceError, DegenerateCovarianceError, EstimationError, InputError
from .graph import LabeledGraph
from .synth import SampleSet

logger = logging.getLogger(__name__)

CORRECTIONS = ("bh", "bonferroni", "none")
DEFAULT_CORRECTION = "bonferroni"


@dataclass
class PrecisionSet:
    precisions: list[np.ndarray]
    n: list[int]
    lambda_sparse: float
    lambda_joint: float
    groups: list[str] = field(default_factory=list)
    iterations: int = 0
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    refit: bool = False
    standardized: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def p(self) -> int:
        return self.precisions[0].shape[0]

    def diagnostics(self) -> dict:
        return {
            "lambda_sparse": self.lambda_sparse,
            "lambda_joint": self.lambda_joint,
            "refit": self.refit,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
        }


def _covariances(groups: Sequence[SampleSet]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if len(groups) < 2:
        raise InputError("joint estimation needs at least two groups")
    p = groups[0].p
    if p < 2:
        raise InputError("need at least two variables (p >= 2)")
    if any(g.p != p for g in groups):
        raise InputError("all groups must have the same number of variables")
    if any(g.n <= 3 for g in groups):
        raise InputError("every group needs more than 3 samples")
    covs, scales = [], []
    for g in groups:
        x = g.data - g.data.mean(axis=0)
        s = x.T @ x / g.n
        d = np.sqrt(np.diag(s))
        if np.any(d <= 0):
            raise DegenerateCovarianceError(f"group {g.group!r} has a constant column")
        covs.append(s / np.outer(d, d))
        scales.append(d)
    n = np.array([g.n for g in groups], dtype=float)
    return np.array(covs), np.array(scales), n / n.mean()


def _prox_penalty(a: np.ndarray, t_sparse: float, t_joint: float, support=None) -> np.ndarray:
    """Proximal map of the penalty on a (K, p, p) stack; diagonals untouched.

    With ``support`` (boolean, same shape) entries outside it are forced to
    zero, which turns the penalised fit into a support-constrained MLE.
    """
    z = np.sign(a) * np.maximum(np.abs(a) - t_sparse, 0.0)
    if support is not None:
        z = np.where(support, z, 0.0)
    if t_joint > 0:
        norm = np.sqrt(np.sum(z * z, axis=0))
        with np.errstate(divide="ignore", invalid="ignore"):
            shrink = np.where(norm > 0, np.maximum(1.0 - t_joint / norm, 0.0), 0.0)
        z = z * shrink
    idx = np.arange(a.shape[1])
    z[:, idx, idx] = a[:, idx, idx]
    return z


def _admm(s, w, lam_sparse, lam_joint, rho=1.0, tol=1e-5, max_iter=5000, init=None, support=None):
    k, p, _ = s.shape
    z = np.array([np.eye(p)] * k) if init is None else init[0].copy()
    u = np.zeros_like(z) if init is None else init[1].copy()
    wk = w[:, None, None]
    r_norm = s_norm = np.inf
    for it in range(1, max_iter + 1):
        evals, evecs = np.linalg.eigh(rho * (z - u) - wk * s)
        theta_ev = (evals + np.sqrt(evals**2 + 4 * rho * w[:, None])) / (2 * rho)
        theta = np.einsum("kij,kj,klj->kil", evecs, theta_ev, evecs)
        z_old = z
        z = _prox_penalty(theta + u, lam_sparse / rho, lam_joint / rho, support)
        u = u + theta - z
        r_norm = float(np.linalg.norm(theta - z))
        s_norm = float(rho * np.linalg.norm(z - z_old))
        if r_norm < tol and s_norm < tol:
            return z, u, theta, it, r_norm, s_norm, rho
        # residual balancing; the scaled dual must be rescaled with rho
        if r_norm > 10 * s_norm:
            rho *= 2.0
            u /= 2.0
        elif s_norm > 10 * r_norm:
            rho /= 2.0
            u *= 2.0
    raise ConvergenceError(
        f"ADMM did not converge in {max_iter} iterations "
        f"(primal {r_norm:.2e}, dual {s_norm:.2e})",
        iterations=max_iter,
        primal_residual=r_norm,
        dual_residual=s_norm,
    )


def constrained_mle(s: np.ndarray, support: np.ndarray, tol: float = 1e-5, max_iter: int = 5000) -> np.ndarray:
    """Gaussian MLE of the precision matrix with a prescribed zero pattern.

    Cycles over nodes, regressing each on its allowed neighbours through the
    current covariance estimate, until the covariance stops changing (the
    classic known-structure algorithm for covariance selection).
    """
    p = s.shape[0]
    support = np.asarray(support, dtype=bool)
    w = s.copy()
    beta_all = np.zeros((p, p))
    for _ in range(max_iter):
        w_old = w.copy()
        for j in range(p):
            rest = np.r_[0:j, j + 1:p]
            nb = rest[support[j, rest]]
            beta = np.zeros(p - 1)
            if nb.size:
                coef = np.linalg.solve(w[np.ix_(nb, nb)], s[nb, j])
                beta[np.searchsorted(rest, nb)] = coef
            w12 = w[np.ix_(rest, rest)] @ beta
            w[rest, j] = w12
            w[j, rest] = w12
            beta_all[j, rest] = beta
        if np.max(np.abs(w - w_old)) < tol:
            break
    else:
        raise ConvergenceError(f"support-constrained refit did not converge in {max_iter} sweeps")
    theta = np.zeros((p, p))
    for j in range(p):
        rest = np.r_[0:j, j + 1:p]
        t_jj = 1.0 / (w[j, j] - w[rest, j] @ beta_all[j, rest])
        theta[j, j] = t_jj
        theta[rest, j] = -beta_all[j, rest] * t_jj
    return (theta + theta.T) / 2


def joint_estimate(
    groups: Sequence[SampleSet],
    lambda_sparse: float,
    lambda_joint: float,
    tol: float = 1e-5,
    max_iter: int = 5000,
    warm_start: PrecisionSet | None = None,
    refit: bool = False,
) -> PrecisionSet:
    """Jointly estimate one sparse precision matrix per group.

    Parameters
    ----------
    groups : sequence of SampleSet
        At least two groups over the same variables, each with ``n > 3``.
    lambda_sparse, lambda_joint : float
        Element-wise L1 and cross-group L2 penalty weights, on the scale of
        the standardised (correlation) problem.
    tol, max_iter : float, int
        ADMM stops once both primal and dual residuals (Frobenius norm) are
        below ``tol``; hitting ``max_iter`` raises ``ConvergenceError``.
    warm_start : PrecisionSet, optional
        A previous fit on the same data, used to initialise the iterates.
    refit : bool
        Re-estimate each group by unpenalised maximum likelihood restricted
        to the support the joint fit selected. This removes the L1 shrinkage
        from the surviving entries, which matters when they are tested.

    Returns
    -------
    PrecisionSet
        Precision matrices on the data scale with exact zeros off the
        selected support.
    """
    if lambda_sparse < 0 or lambda_joint < 0:
        raise InputError("penalties must be non-negative")
    s, scales, w = _covariances(groups)
    min_eig = np.linalg.eigvalsh(s)[:, 0]
    if lambda_sparse == 0 and lambda_joint == 0 and np.any(min_eig < 1e-10):
        raise DegenerateCovarianceError(
            "empirical covariance is rank deficient; use a larger lambda_sparse"
        )

    init = None
    if warm_start is not None and warm_start.standardized:
        z0 = np.array(warm_start.standardized)
        init = (z0, np.zeros_like(z0))
    z, _, _, it, r_norm, s_norm, _ = _admm(s, w, lambda_sparse, lambda_joint, tol=tol,
                                            max_iter=max_iter, init=init)
    z = (z + np.transpose(z, (0, 2, 1))) / 2
    if refit:
        z = np.array([constrained_mle(sk, zk != 0, tol=tol, max_iter=max_iter) for sk, zk in zip(s, z)])
    for zk in z:
        try:
            np.linalg.cholesky(zk)
        except np.linalg.LinAlgError as exc:
            raise EstimationError("estimated precision is not positive definite") from exc
    precisions = [zk / np.outer(d, d) for zk, d in zip(z, scales)]
    return PrecisionSet(
        precisions=precisions,
        n=[g.n for g in groups],
        lambda_sparse=float(lambda_sparse),
        lambda_joint=float(lambda_joint),
        groups=[g.group for g in groups],
        iterations=it,
        primal_residual=r_norm,
        dual_residual=s_norm,
        refit=refit,
        standardized=list(z),
    )


def extended_bic(groups: Sequence[SampleSet], est: PrecisionSet, gamma: float = 0.5) -> float:
    """Extended BIC summed over groups, on the standardised scale."""
    s, _, _ = _covariances(groups)
    p = s.shape[1]
    total = 0.0
    for sk, tk, g in zip(s, est.standardized, groups):
        _, logdet = np.linalg.slogdet(tk)
        n_edges = int(np.count_nonzero(np.triu(tk, k=1)))
        total += g.n * (np.sum(sk * tk) - logdet) + n_edges * (math.log(g.n) + 4 * gamma * math.log(p))
    return float(total)


DEFAULT_SPARSE_GRID = tuple(float(x) for x in np.geomspace(0.3, 0.005, 10))
DEFAULT_JOINT_RATIOS = (0.0, 0.5, 1.0)


def select_and_estimate(
    groups: Sequence[SampleSet],
    sparse_grid: Sequence[float] = DEFAULT_SPARSE_GRID,
    joint_ratios: Sequence[float] = DEFAULT_JOINT_RATIOS,
    joint_fixed: float | None = None,
    gamma: float = 0.5,
    **kw,
) -> tuple[PrecisionSet, list[dict]]:
    """Grid search over ``(lambda_sparse, lambda_joint)`` minimising eBIC.

    ``lambda_joint`` is searched as ``ratio * lambda_sparse`` unless
    ``joint_fixed`` pins it. Extra keywords go to :func:`joint_estimate`.
    Fits that fail are skipped; if every fit fails the last error is raised.
    Returns the best fit and the full search table.
    """
    table: list[dict] = []
    best, best_score, last_err = None, math.inf, None
    ratios = (None,) if joint_fixed is not None else joint_ratios
    for ratio in ratios:
        warm = None
        for lam in sorted(sparse_grid, reverse=True):
            lam_joint = joint_fixed if ratio is None else ratio * lam
            try:
                est = joint_estimate(groups, lam, lam_joint, warm_start=warm, **kw)
            except EstimationError as exc:
                last_err = exc
                table.append({"lambda_sparse": lam, "lambda_joint": lam_joint, "ebic": None})
                continue
            warm = est
            score = extended_bic(groups, est, gamma)
            table.append({"lambda_sparse": lam, "lambda_joint": lam_joint, "ebic": score})
            if score < best_score:
                best, best_score = est, score
    if best is None:
        raise last_err if last_err is not None else EstimationError("empty lambda grid")
    logger.info("selected lambda_sparse=%.4g lambda_joint=%.4g", best.lambda_sparse, best.lambda_joint)
    return best, table


def precision_to_pcorr(omega: np.ndarray) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    d = np.diag(omega)
    if np.any(d <= 0):
        raise InputError("precision matrix needs a strictly positive diagonal")
    root = np.sqrt(d)
    pc = -omega / np.outer(root, root)
    pc = (pc + pc.T) / 2
    np.fill_diagonal(pc, 1.0)
    return pc


@dataclass
class Adjacency:
    adjacency: np.ndarray
    pvalues: np.ndarray
    corrected: np.ndarray
    alpha: float
    correction: str
    n: int

    def graph(self, modalities: Sequence[str] | None = None) -> LabeledGraph:
        return LabeledGraph.from_adjacency(self.adjacency, modalities)


def fisher_pvalues(pc: np.ndarray, n: int) -> np.ndarray:
    """Two-sided p-values of the Fisher z test for each off-diagonal entry.

    The statistic is ``atanh(rho) * sqrt(n - (p - 2) - 3)``, the usual degrees
    of freedom for a correlation conditioned on the other ``p - 2`` variables.
    """
    pc = np.asarray(pc, dtype=float)
    p = pc.shape[0]
    if n <= p + 3:
        raise InputError(f"n={n} too small for p={p}; need n > p + 3")
    off = ~np.eye(p, dtype=bool)
    rho = np.clip(pc, -1.0, 1.0)
    if np.any(np.abs(rho[off]) >= 1.0):
        logger.warning("partial correlation of magnitude 1; treating its p-value as 0")
    with np.errstate(divide="ignore"):
        z = np.arctanh(rho) * math.sqrt(n - (p - 2) - 3)
    pv = 2.0 * stats.norm.sf(np.abs(z))
    pv[~np.isfinite(z)] = 0.0
    np.fill_diagonal(pv, 1.0)
    return pv


def correct_pvalues(pv: np.ndarray, correction: str) -> np.ndarray:
    """Adjust a flat vector of p-values for multiple comparisons."""
    if correction == "bh":
        return stats.false_discovery_control(pv, method="bh")
    if correction == "bonferroni":
        return np.minimum(pv * pv.size, 1.0)
    if correction == "none":
        return pv.copy()
    raise InputError(f"unknown correction {correction!r}; choose from {CORRECTIONS}")


def significance_adjacency(
    pc: np.ndarray, n: int, alpha: float = 0.05, correction: str = DEFAULT_CORRECTION
) -> Adjacency:
    """Edge wherever the corrected p-value of a partial correlation is < alpha.

    The correction runs over the ``p(p-1)/2`` distinct pairs.
    """
    if not 0 < alpha <= 1:
        raise InputError("alpha must be in (0, 1]")
    pv = fisher_pvalues(pc, n)
    p = pv.shape[0]
    iu = np.triu_indices(p, k=1)
    adj_p = np.ones_like(pv)
    if iu[0].size:
        flat = correct_pvalues(pv[iu], correction)
        adj_p[iu] = flat
        adj_p.T[iu] = flat
    a = (adj_p < alpha).astype(np.int8)
    np.fill_diagonal(a, 0)
    return Adjacency(a, pv, adj_p, alpha, correction, n)


@dataclass
class AdjacencySet:
    entries: list[Adjacency]
    groups: list[str]

    @property
    def alpha(self) -> float:
        return self.entries[0].alpha

    @property
    def correction(self) -> str:
        return self.entries[0].correction


def estimate_graphs(
    groups: Sequence[SampleSet],
    alpha: float = 0.05,
    correction: str = DEFAULT_CORRECTION,
    lambda_sparse: float | None = None,
    lambda_joint: float | None = None,
    modalities: Sequence[str] | None = None,
    refit: bool = True,
    ebic_gamma: float = 0.5,
) -> tuple[PrecisionSet, AdjacencySet, list[LabeledGraph]]:
    """Samples in, one significance graph per group out.

    With both lambdas given they are used directly; otherwise they are chosen
    by eBIC (a single given lambda pins that axis of the search). Partial
    correlations are tested on the support-refitted estimates unless
    ``refit`` is false.
    """
    if lambda_sparse is not None and lambda_joint is not None:
        est = joint_estimate(groups, lambda_sparse, lambda_joint, refit=refit)
    else:
        grid = DEFAULT_SPARSE_GRID if lambda_sparse is None else (lambda_sparse,)
        est, _ = select_and_estimate(groups, sparse_grid=grid, joint_fixed=lambda_joint,
                                     gamma=ebic_gamma, refit=refit)
    entries = [
        significance_adjacency(precision_to_pcorr(om), g.n, alpha, correction)
        for om, g in zip(est.precisions, groups)
    ]
    adj = AdjacencySet(entries, [g.group for g in groups])
    graphs = [e.graph(modalities) for e in entries]
    return est, adj, graphs


def write_matrix(m: np.ndarray, path: str | os.PathLike, sidecar: dict | None = None) -> None:
    path = Path(path)
    np.savetxt(path, m, delimiter=",", fmt="%.17g")
    if sidecar is not None:
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")


def read_matrix(path: str | os.PathLike) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
