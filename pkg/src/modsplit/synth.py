"""Synthetic ground truth: block-model graphs, planted damage, Gaussian data.

The generative chain is

    graph -> partial correlations -> precision/covariance -> samples -> noise

and every step takes an explicit seed so a whole experiment is a pure
function of its configuration.
"""

from __future__ import annotations

import json
import math
import os
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg

from .disconnector import disconnector_oracle
from .errors import GenerationError, InputError
from .graph import Edge, LabeledGraph, canonical_edge
from .rng import RNG_ALGORITHM, SeedLike, as_rng

NEAR_ZERO = 1e-4
DEFAULT_MIN_EIG = 0.1


def block_label(i: int) -> str:
    return string.ascii_uppercase[i] if i < 26 else f"M{i + 1}"


def default_within_prob(n: int) -> float:
    """``ln(n)/n``; a single-node block has no pairs, so 0."""
    return math.log(n) / n if n > 1 else 0.0


@dataclass(frozen=True)
class SbmConfig:
    block_sizes: tuple[int, ...] = (3, 3, 11)
    p_within: tuple[float, ...] | float | None = None
    p_between: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.block_sizes or any(int(b) < 1 for b in self.block_sizes):
            raise InputError("block_sizes must be a non-empty list of positive integers")
        object.__setattr__(self, "block_sizes", tuple(int(b) for b in self.block_sizes))
        for q in self.within_probs() + [self.p_between]:
            if not 0.0 <= q <= 1.0:
                raise InputError(f"edge probability {q} outside [0, 1]")

    def within_probs(self) -> list[float]:
        if self.p_within is None:
            return [default_within_prob(b) for b in self.block_sizes]
        if isinstance(self.p_within, (int, float)):
            return [float(self.p_within)] * len(self.block_sizes)
        if len(self.p_within) != len(self.block_sizes):
            raise InputError("p_within needs one probability per block")
        return [float(q) for q in self.p_within]


def generate_sbm(cfg: SbmConfig, rng: SeedLike = None) -> LabeledGraph:
    """Draw a stochastic block model graph; block ``i`` becomes modality ``i``.

    Uses ``cfg.seed`` unless an explicit generator is supplied.
    """
    rng = as_rng(cfg.seed if rng is None else rng)
    sizes = cfg.block_sizes
    block = np.repeat(np.arange(len(sizes)), sizes)
    p = block.size
    within = np.asarray(cfg.within_probs())
    prob = np.where(block[:, None] == block[None, :], within[block][:, None], cfg.p_between)
    draws = rng.random((p, p))
    iu, ju = np.nonzero(np.triu(draws < prob, k=1))
    return LabeledGraph.from_edges(p, zip(iu.tolist(), ju.tolist()), [block_label(b) for b in block])


@dataclass(frozen=True)
class PlantConfig:
    remove_edges: tuple[Edge, ...] = ()
    add_edges: tuple[Edge, ...] = ()

    def __post_init__(self):
        rem = tuple(sorted({canonical_edge(*e) for e in self.remove_edges}))
        add = tuple(sorted({canonical_edge(*e) for e in self.add_edges}))
        if set(rem) & set(add):
            raise InputError("an edge cannot be both removed and added")
        object.__setattr__(self, "remove_edges", rem)
        object.__setattr__(self, "add_edges", add)

    def to_dict(self) -> dict:
        return {
            "remove_edges": [[u + 1, v + 1] for u, v in self.remove_edges],
            "add_edges": [[u + 1, v + 1] for u, v in self.add_edges],
        }


def plant_disconnectivity(healthy: LabeledGraph, cfg: PlantConfig) -> LabeledGraph:
    """Patient graph = healthy graph minus ``remove_edges`` plus ``add_edges``."""
    missing = [e for e in cfg.remove_edges if e not in healthy.edges]
    if missing:
        raise InputError(f"cannot remove edges absent from the healthy graph: {missing}")
    present = [e for e in cfg.add_edges if e in healthy.edges]
    if present:
        raise InputError(f"cannot add edges already in the healthy graph: {present}")
    for u, v in cfg.add_edges:
        if v >= healthy.p:
            raise InputError(f"added edge ({u}, {v}) out of range")
    return healthy.with_edges((healthy.edges - set(cfg.remove_edges)) | set(cfg.add_edges))


def random_plant(
    healthy: LabeledGraph,
    rng: SeedLike,
    n_remove: int = 3,
    n_add: int = 1,
    max_tries: int = 200,
) -> PlantConfig:
    """Randomised damage with at least one true disconnector.

    Removes ``n_remove`` distinct healthy edges chosen uniformly and adds
    ``n_add`` random new edges. Not every removal has to split a module, and
    an addition may reconnect pieces, so the number of true disconnectors
    varies between draws. Draws without any disconnector are rejected.
    """
    rng = as_rng(rng)
    edges = healthy.sorted_edges()
    if not edges:
        raise GenerationError("healthy graph has no edges to remove")
    p = healthy.p
    non_edges = [(u, v) for u in range(p) for v in range(u + 1, p) if (u, v) not in healthy.edges]
    k = min(n_remove, len(edges))
    n = min(n_add, len(non_edges))
    for _ in range(max_tries):
        removed = [edges[int(i)] for i in rng.choice(len(edges), size=k, replace=False)]
        added = [non_edges[int(i)] for i in rng.choice(len(non_edges), size=n, replace=False)] if n else []
        cfg = PlantConfig(tuple(removed), tuple(added))
        if disconnector_oracle(healthy, plant_disconnectivity(healthy, cfg)):
            return cfg
    raise GenerationError("could not plant a disconnectivity in the healthy graph")


def random_partial_corr(g: LabeledGraph, seed: SeedLike) -> np.ndarray:
    """Partial-correlation matrix with the support of ``g``.

    Values are drawn for *every* pair and then selected by adjacency, so two
    graphs built with the same seed share the value of every common edge.
    """
    rng = as_rng(seed)
    p = g.p
    mag = rng.uniform(NEAR_ZERO, 1.0, size=(p, p))
    sign = rng.choice(np.array([-1.0, 1.0]), size=(p, p))
    tiny = rng.uniform(-NEAR_ZERO, NEAR_ZERO, size=(p, p))
    adj = g.adjacency().astype(bool)
    r = np.where(adj, sign * mag, tiny)
    r = np.triu(r, k=1)
    r = r + r.T
    np.fill_diagonal(r, 1.0)
    return r


def shrink_factor(r: np.ndarray, min_eig: float = DEFAULT_MIN_EIG) -> float:
    """Largest common scale of the off-diagonals keeping ``min eig >= min_eig``.

    The candidate precision is ``I - s * R_off``, whose smallest eigenvalue
    is exactly ``1 - s * max eig(R_off)``, so the bound is closed form.
    """
    off = np.asarray(r, dtype=float).copy()
    np.fill_diagonal(off, 0.0)
    top = float(np.linalg.eigvalsh(off)[-1])
    if top <= 0:
        return 1.0
    return min(1.0, (1.0 - min_eig) / top)


@dataclass(frozen=True)
class CovModel:
    precision: np.ndarray
    covariance: np.ndarray
    mean: np.ndarray
    scale: float = 1.0

    @property
    def p(self) -> int:
        return self.precision.shape[0]

    def partial_corr(self) -> np.ndarray:
        d = np.sqrt(np.diag(self.precision))
        pc = -self.precision / np.outer(d, d)
        np.fill_diagonal(pc, 1.0)
        return pc


def _validate_pcorr(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise InputError("partial correlation matrix must be square")
    if not np.array_equal(r, r.T):
        raise InputError("partial correlation matrix must be symmetric")
    if not np.all(np.diag(r) == 1.0):
        raise InputError("partial correlation matrix needs a unit diagonal")
    if np.any(np.abs(r) > 1.0):
        raise InputError("partial correlations must lie in [-1, 1]")
    return r


def pcorr_to_cov_model(
    r: np.ndarray,
    min_eig: float = DEFAULT_MIN_EIG,
    scale: float | None = None,
) -> CovModel:
    """Precision ``I - s*R_off`` and its inverse, repaired to be SPD.

    ``s`` is :func:`shrink_factor` unless given (it must then still satisfy
    the eigenvalue bound). Raises :class:`GenerationError` if shrinking pushed
    an edge value into the near-zero band, which would erase it.
    """
    r = _validate_pcorr(r)
    p = r.shape[0]
    s = shrink_factor(r, min_eig) if scale is None else float(scale)
    edge_mask = np.abs(r) > NEAR_ZERO
    np.fill_diagonal(edge_mask, False)
    if np.any(np.abs(s * r[edge_mask]) <= NEAR_ZERO):
        raise GenerationError("SPD repair shrank an edge into the near-zero band")

    omega = -s * r
    np.fill_diagonal(omega, 1.0)
    omega = (omega + omega.T) / 2
    try:
        chol = linalg.cho_factor(omega, lower=True)
    except linalg.LinAlgError as exc:
        raise GenerationError("repaired precision matrix is not positive definite") from exc
    if np.linalg.eigvalsh(omega)[0] < min_eig * (1 - 1e-9):
        raise GenerationError(f"scale {s} violates the minimum eigenvalue {min_eig}")
    sigma = linalg.cho_solve(chol, np.eye(p))
    sigma = (sigma + sigma.T) / 2
    resid = np.max(np.abs(sigma @ omega - np.eye(p)))
    if resid >= 1e-8:
        raise GenerationError(f"covariance inverse too inaccurate (max residual {resid:.2e})")
    return CovModel(omega, sigma, np.zeros(p), s)


def paired_cov_models(
    r_healthy: np.ndarray, r_patient: np.ndarray, min_eig: float = DEFAULT_MIN_EIG
) -> tuple[CovModel, CovModel]:
    """Both groups shrunk by the same factor so shared edges stay identical."""
    s = min(shrink_factor(r_healthy, min_eig), shrink_factor(r_patient, min_eig))
    return pcorr_to_cov_model(r_healthy, min_eig, s), pcorr_to_cov_model(r_patient, min_eig, s)


@dataclass
class SampleSet:
    data: np.ndarray
    group: str = "group"
    seed: object = None
    snr_db: float = math.inf
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise InputError("sample data must be an (n_subjects, p) matrix with n >= 1")
        if not np.all(np.isfinite(self.data)):
            raise InputError("sample data contains non-finite values")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def sidecar(self) -> dict:
        return {
            "group": self.group,
            "n": self.n,
            "p": self.p,
            "seed": self.seed,
            "snr_db": None if math.isinf(self.snr_db) else self.snr_db,
            "rng": RNG_ALGORITHM,
            **self.meta,
        }


def sample_gaussian(m: CovModel, n: int, seed: SeedLike, group: str = "group") -> SampleSet:
    """``n`` i.i.d. rows from N(mean, covariance) via a Cholesky factor."""
    if n < 1:
        raise InputError("need at least one sample")
    try:
        chol = np.linalg.cholesky(m.covariance)
    except np.linalg.LinAlgError as exc:
        raise InputError("covariance is not positive definite") from exc
    rng = as_rng(seed)
    z = rng.standard_normal((n, m.p))
    seed_tag = seed if isinstance(seed, (int, type(None))) else None
    return SampleSet(m.mean + z @ chol.T, group=group, seed=seed_tag)


def noise_variance(signal_var: np.ndarray, snr_db: float) -> np.ndarray:
    return np.asarray(signal_var, dtype=float) / 10.0 ** (snr_db / 10.0)


def add_noise_for_snr(
    s: SampleSet,
    snr_db: float | None,
    seed: SeedLike,
    signal_var: Sequence[float] | None = None,
) -> SampleSet:
    """Add white Gaussian noise so each node sits at ``snr_db``.

    ``signal_var`` is the per-node model variance (the covariance diagonal);
    without it the sample variance of each column is used. ``None`` or
    ``+inf`` means clean data and returns an unchanged copy.
    """
    if snr_db is None or (math.isinf(snr_db) and snr_db > 0):
        return SampleSet(s.data.copy(), s.group, s.seed, math.inf, dict(s.meta))
    if not math.isfinite(snr_db):
        raise InputError("snr_db must be finite or +inf")
    var = np.var(s.data, axis=0) if signal_var is None else np.asarray(signal_var, dtype=float)
    if var.shape != (s.p,):
        raise InputError("signal_var needs one entry per node")
    rng = as_rng(seed)
    sd = np.sqrt(noise_variance(var, snr_db))
    noisy = s.data + rng.standard_normal(s.data.shape) * sd
    return SampleSet(noisy, s.group, s.seed, float(snr_db), dict(s.meta))


def write_sample_set(s: SampleSet, path: str | os.PathLike) -> None:
    """CSV (rows = subjects, header = 1-based node ids) + ``.json`` sidecar."""
    path = Path(path)
    header = ",".join(str(j + 1) for j in range(s.p))
    np.savetxt(path, s.data, delimiter=",", header=header, comments="", fmt="%.17g")
    path.with_suffix(".json").write_text(json.dumps(s.sidecar(), indent=1, sort_keys=True) + "\n")


def read_sample_set(path: str | os.PathLike) -> SampleSet:
    path = Path(path)
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"{path}: cannot read sample CSV ({exc})") from exc
    meta = {}
    side = path.with_suffix(".json")
    if side.exists():
        meta = json.loads(side.read_text())
    snr = meta.pop("snr_db", None)
    group = meta.pop("group", path.stem)
    seed = meta.pop("seed", None)
    for k in ("n", "p", "rng"):
        meta.pop(k, None)
    return SampleSet(data, group, seed, math.inf if snr is None else float(snr), meta)
