"""Scoring and the simulated SNR sweep.

A sweep builds an ensemble of healthy/patient graph pairs, records the true
disconnectors of each pair with the brute-force oracle, and then for every
(graph, SNR) cell samples data, adds noise, estimates both group graphs,
runs the disconnector search on the estimates and scores it against the
truth. Cells are independent and individually seeded.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .disconnector import disconnector_oracle, find_disconnectors
from .errors import GenerationError, InputError, ModsplitError
from .estimator import DEFAULT_CORRECTION, estimate_graphs
from .examples import resolve_graph_path
from .graph import Edge, LabeledGraph, graph_from_dict, read_graph
from .rng import RNG_ALGORITHM, stream
from .runio import atomic_write_text, digest_of, sha256_file
from .synth import (
    DEFAULT_MIN_EIG,
    CovModel,
    PlantConfig,
    SbmConfig,
    add_noise_for_snr,
    generate_sbm,
    paired_cov_models,
    plant_disconnectivity,
    random_partial_corr,
    random_plant,
    sample_gaussian,
)

logger = logging.getLogger(__name__)

CLEAN = math.inf


# --------------------------------------------------------------------------
# scores
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Score:
    precision: float
    recall: float
    f_measure: float
    true_count: int
    estimated_count: int
    hit_count: int


def score_disconnectors(estimated: Iterable[Edge], truth: Iterable[Edge]) -> Score:
    """Precision/recall/F of an estimated edge set against the true one.

    Edges are unordered pairs. An empty estimate scores 0 against a non-empty
    truth; two empty sets score 1 on everything.
    """
    est = {tuple(sorted(e)) for e in estimated}
    tru = {tuple(sorted(e)) for e in truth}
    hits = len(est & tru)
    if not est and not tru:
        return Score(1.0, 1.0, 1.0, 0, 0, 0)
    precision = hits / len(est) if est else 0.0
    recall = hits / len(tru) if tru else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return Score(precision, recall, f, len(tru), len(est), hits)


def precision_mse(est: np.ndarray, truth: np.ndarray) -> float:
    """Mean over all p*p entries of the squared difference."""
    est, truth = np.asarray(est, dtype=float), np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise InputError(f"shape mismatch {est.shape} vs {truth.shape}")
    return float(np.mean((est - truth) ** 2))


def edge_recovery(estimated: LabeledGraph, truth: LabeledGraph) -> tuple[int, int, int]:
    """``(true positives, false positives, false negatives)`` over edges."""
    tp = len(estimated.edges & truth.edges)
    return tp, len(estimated.edges - truth.edges), len(truth.edges - estimated.edges)


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def _snr_key(snr: float) -> str:
    return "clean" if math.isinf(snr) else f"{snr:g}"


def parse_snr(value) -> float:
    if value is None or (isinstance(value, str) and value.lower() in ("clean", "inf", "+inf")):
        return CLEAN
    snr = float(value)
    if math.isnan(snr) or snr == -math.inf:
        raise InputError(f"invalid SNR value {value!r}")
    return snr


@dataclass
class SimulationConfig:
    """Everything that determines a simulated experiment.

    ``plant_mode`` is ``"random"`` (see :func:`modsplit.synth.random_plant`)
    or ``"fixed"`` (apply ``remove_edges``/``add_edges``, 1-based). With a
    ``healthy_graph`` path the same fixed healthy graph is used for every
    replicate instead of drawing block-model graphs. ``lambda_*`` set to
    ``None`` means eBIC selection.
    """

    block_sizes: list[int] = field(default_factory=lambda: [3, 3, 11])
    p_within: list[float] | float | None = None
    p_between: float = 0.01
    healthy_graph: str | None = None
    plant_mode: str = "random"
    n_remove: int = 3
    n_add: int = 1
    remove_edges: list[list[int]] = field(default_factory=list)
    add_edges: list[list[int]] = field(default_factory=list)
    n_per_group: int = 1000
    n_graphs: int = 50
    snr_grid: list = field(default_factory=lambda: [-20, -15, -10, -5, 0, 5, 10, 15, 20, "clean"])
    master_seed: int = 0
    alpha: float = 0.05
    correction: str = DEFAULT_CORRECTION
    lambda_sparse: float | None = None
    lambda_joint: float | None = None
    min_eig: float = DEFAULT_MIN_EIG
    ebic_gamma: float = 0.5
    refit: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def bad(name, msg):
            raise InputError(f"config field '{name}': {msg}")

        if not self.block_sizes or any(not isinstance(b, int) or b < 1 for b in self.block_sizes):
            bad("block_sizes", "must be a non-empty list of positive integers")
        if not 0 <= self.p_between <= 1:
            bad("p_between", "must be in [0, 1]")
        if self.plant_mode not in ("random", "fixed"):
            bad("plant_mode", "must be 'random' or 'fixed'")
        if self.n_remove < 1:
            bad("n_remove", "must be >= 1")
        if self.n_add < 0:
            bad("n_add", "must be >= 0")
        if not isinstance(self.n_per_group, int) or self.n_per_group < 4:
            bad("n_per_group", "must be an integer >= 4")
        if not isinstance(self.n_graphs, int) or self.n_graphs < 1:
            bad("n_graphs", "must be a positive integer")
        if not self.snr_grid:
            bad("snr_grid", "must not be empty")
        try:
            [parse_snr(s) for s in self.snr_grid]
        except (InputError, TypeError, ValueError):
            bad("snr_grid", "entries must be numbers (dB) or 'clean'")
        if not 0 < self.alpha <= 1:
            bad("alpha", "must be in (0, 1]")
        if self.correction not in ("bh", "bonferroni", "none"):
            bad("correction", "must be one of bh, bonferroni, none")
        if not 0 < self.min_eig < 1:
            bad("min_eig", "must be in (0, 1)")
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            bad("master_seed", "must be a non-negative integer")
        if self.healthy_graph is not None:
            try:
                path = resolve_graph_path(self.healthy_graph)
            except InputError as exc:
                bad("healthy_graph", str(exc))
            if not path.is_file():
                bad("healthy_graph", f"no such file {str(path)!r}")
        if self.ebic_gamma < 0:
            bad("ebic_gamma", "must be >= 0")

    @classmethod
    def from_dict(cls, doc: dict) -> "SimulationConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise InputError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise InputError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "SimulationConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON config ({exc})") from exc
        if not isinstance(doc, dict):
            raise InputError(f"{path}: config must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def snrs(self) -> list[float]:
        return sorted({parse_snr(s) for s in self.snr_grid})

    def digest_doc(self) -> dict:
        """The config as hashed: a healthy graph file enters by content."""
        doc = self.to_dict()
        if self.healthy_graph:
            doc["healthy_graph"] = "sha256:" + sha256_file(resolve_graph_path(self.healthy_graph))
        return doc

    def digest(self) -> str:
        return digest_of(self.digest_doc())


# --------------------------------------------------------------------------
# ensemble of fixed graph pairs
# --------------------------------------------------------------------------


@dataclass
class GraphPair:
    index: int
    healthy: LabeledGraph
    patient: LabeledGraph
    plant: PlantConfig
    truth: frozenset[Edge]
    attempt: int = 0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "attempt": self.attempt,
            "healthy": self.healthy.to_dict(),
            "patient": self.patient.to_dict(),
            "plant": self.plant.to_dict(),
            "truth": [[u + 1, v + 1] for u, v in sorted(self.truth)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GraphPair":
        plant = PlantConfig(
            tuple((u - 1, v - 1) for u, v in doc["plant"]["remove_edges"]),
            tuple((u - 1, v - 1) for u, v in doc["plant"]["add_edges"]),
        )
        return cls(
            doc["index"],
            graph_from_dict(doc["healthy"]),
            graph_from_dict(doc["patient"]),
            plant,
            frozenset((u - 1, v - 1) for u, v in doc["truth"]),
            doc.get("attempt", 0),
        )


def _models_for(pair: GraphPair, cfg: SimulationConfig) -> tuple[CovModel, CovModel]:
    rng_path = ("pcorr", pair.index, pair.attempt)
    r_h = random_partial_corr(pair.healthy, stream(cfg.master_seed, *rng_path))
    r_p = random_partial_corr(pair.patient, stream(cfg.master_seed, *rng_path))
    return paired_cov_models(r_h, r_p, cfg.min_eig)


def build_pair(cfg: SimulationConfig, index: int, max_attempts: int = 50) -> GraphPair:
    """Fixed healthy/patient graphs for replicate ``index``.

    A draw that cannot be planted or whose covariance model cannot be built
    is retried on the next sub-stream; the attempt number is recorded.
    """
    fixed = read_graph(resolve_graph_path(cfg.healthy_graph)) if cfg.healthy_graph else None
    last = None
    for attempt in range(max_attempts):
        try:
            if fixed is not None:
                healthy = fixed
            else:
                sbm = SbmConfig(tuple(cfg.block_sizes), cfg.p_within, cfg.p_between)
                healthy = generate_sbm(sbm, stream(cfg.master_seed, "graph", index, attempt))
            if cfg.plant_mode == "fixed":
                plant = PlantConfig(
                    tuple((u - 1, v - 1) for u, v in cfg.remove_edges),
                    tuple((u - 1, v - 1) for u, v in cfg.add_edges),
                )
            else:
                plant = random_plant(healthy, stream(cfg.master_seed, "plant", index, attempt),
                                     cfg.n_remove, cfg.n_add)
            patient = plant_disconnectivity(healthy, plant)
            pair = GraphPair(index, healthy, patient, plant, disconnector_oracle(healthy, patient), attempt)
            _models_for(pair, cfg)
            return pair
        except GenerationError as exc:
            last = exc
    raise GenerationError(f"replicate {index}: no usable draw in {max_attempts} attempts ({last})")


def build_ensemble(cfg: SimulationConfig, cache_dir: str | os.PathLike | None = None) -> list[GraphPair]:
    """All replicate pairs, loaded from ``cache_dir/ensemble.json`` if valid."""
    digest = cfg.digest()
    cache = Path(cache_dir) / "ensemble.json" if cache_dir is not None else None
    if cache is not None and cache.exists():
        doc = json.loads(cache.read_text())
        if doc.get("config_digest") == digest:
            return [GraphPair.from_dict(d) for d in doc["pairs"]]
    pairs = [build_pair(cfg, i) for i in range(cfg.n_graphs)]
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        doc = {"config_digest": digest, "pairs": [p.to_dict() for p in pairs]}
        atomic_write_text(cache, json.dumps(doc, indent=1) + "\n")
    return pairs


def truth_histogram(pairs: Sequence[GraphPair]) -> dict[int, int]:
    """Number of replicates per count of true disconnectors."""
    hist: dict[int, int] = {}
    for pair in pairs:
        hist[len(pair.truth)] = hist.get(len(pair.truth), 0) + 1
    return dict(sorted(hist.items()))


# --------------------------------------------------------------------------
# cells and sweep
# --------------------------------------------------------------------------


@dataclass
class CellResult:
    graph_id: int
    snr_db: float
    score: Score | None
    estimated: frozenset[Edge] = frozenset()
    error: str | None = None
    lambda_sparse: float | None = None
    lambda_joint: float | None = None


def clean_samples(pair: GraphPair, cfg: SimulationConfig, models=None):
    mh, mp = models or _models_for(pair, cfg)
    sh = sample_gaussian(mh, cfg.n_per_group, stream(cfg.master_seed, "sample", pair.index, "healthy"), "healthy")
    sp = sample_gaussian(mp, cfg.n_per_group, stream(cfg.master_seed, "sample", pair.index, "patient"), "patient")
    return (mh, mp), (sh, sp)


def run_cell(pair: GraphPair, cfg: SimulationConfig, snr: float) -> CellResult:
    (mh, mp), (sh, sp) = clean_samples(pair, cfg)
    key = _snr_key(snr)
    noisy = [
        add_noise_for_snr(s, snr, stream(cfg.master_seed, "noise", pair.index, key, s.group), np.diag(m.covariance))
        for s, m in ((sh, mh), (sp, mp))
    ]
    try:
        est, _, (g_h, g_p) = estimate_graphs(
            noisy, cfg.alpha, cfg.correction, cfg.lambda_sparse, cfg.lambda_joint, pair.healthy.modalities,
            refit=cfg.refit, ebic_gamma=cfg.ebic_gamma,
        )
    except ModsplitError as exc:
        logger.warning("graph %d at %s dB failed: %s", pair.index, key, exc)
        return CellResult(pair.index, snr, None, error=f"{type(exc).__name__}: {exc}")
    found = find_disconnectors(g_h, g_p).direct_edges()
    return CellResult(pair.index, snr, score_disconnectors(found, pair.truth), found,
                      lambda_sparse=est.lambda_sparse, lambda_joint=est.lambda_joint)


def _run_cell_args(args):
    return run_cell(*args)


@dataclass
class SweepRecord:
    snr_db: float
    cells: list[CellResult]
    config_digest: str
    master_seed: int

    @property
    def scores(self) -> list[Score]:
        return [c.score for c in self.cells if c.score is not None]

    @property
    def failures(self) -> int:
        return sum(c.score is None for c in self.cells)

    def quartiles(self, metric: str = "f_measure") -> dict | None:
        vals = np.array([getattr(s, metric) for s in self.scores])
        if vals.size == 0:
            return None
        q = np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0])
        return dict(zip(("min", "q1", "median", "q3", "max"), (float(x) for x in q)))

    def median_f(self) -> float:
        qs = self.quartiles()
        return math.nan if qs is None else qs["median"]


def run_snr_sweep(
    cfg: SimulationConfig,
    jobs: int = 1,
    cache_dir: str | os.PathLike | None = None,
    pairs: Sequence[GraphPair] | None = None,
) -> list[SweepRecord]:
    """Score disconnector recovery for every (graph, SNR) cell.

    Records come back sorted by SNR (clean data last); cells within a record
    are sorted by graph id, regardless of ``jobs``.
    """
    if pairs is None:
        pairs = build_ensemble(cfg, cache_dir)
    snrs = cfg.snrs()
    tasks = [(pair, cfg, snr) for snr in snrs for pair in pairs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_args, tasks, chunksize=1))
    else:
        results = [run_cell(*t) for t in tasks]
    digest = cfg.digest()
    records = []
    for snr in snrs:
        cells = sorted((r for r in results if r.snr_db == snr), key=lambda c: c.graph_id)
        records.append(SweepRecord(snr, cells, digest, cfg.master_seed))
    return records


def sweep_is_partial(records: Sequence[SweepRecord]) -> bool:
    return any(r.scores == [] for r in records)


# --------------------------------------------------------------------------
# clean-data recovery study on a fixed pair
# --------------------------------------------------------------------------


@dataclass
class RecoveryResult:
    true_positives: int
    false_positives: int
    false_negatives: int
    mse: list[float]
    disconnectors: list[frozenset[Edge]]

    @property
    def edge_precision(self) -> float:
        found = self.true_positives + self.false_positives
        return self.true_positives / found if found else 1.0

    @property
    def edge_recall(self) -> float:
        tot = self.true_positives + self.false_negatives
        return self.true_positives / tot if tot else 1.0

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse))


def run_recovery_study(
    healthy: LabeledGraph,
    plant: PlantConfig,
    iterations: int = 10,
    n_per_group: int = 1000,
    master_seed: int = 0,
    alpha: float = 0.05,
    correction: str = DEFAULT_CORRECTION,
    min_eig: float = DEFAULT_MIN_EIG,
    refit: bool = True,
    ebic_gamma: float = 0.5,
) -> RecoveryResult:
    """Fresh random models on one fixed pair, clean data, edge-level scoring.

    MSE is the per-entry mean squared error between the estimated and true
    precision matrices, one value per group per iteration.
    """
    patient = plant_disconnectivity(healthy, plant)
    cfg = SimulationConfig(n_per_group=n_per_group, master_seed=master_seed, alpha=alpha,
                           correction=correction, min_eig=min_eig, n_graphs=iterations)
    tp = fp = fn = 0
    mse, found = [], []
    for it in range(iterations):
        pair = GraphPair(it, healthy, patient, plant, disconnector_oracle(healthy, patient))
        for attempt in range(50):
            pair.attempt = attempt
            try:
                models = _models_for(pair, cfg)
                break
            except GenerationError:
                continue
        else:
            raise GenerationError("could not build a covariance model")
        _, samples = clean_samples(pair, cfg, models)
        est, _, graphs = estimate_graphs(list(samples), alpha, correction, modalities=healthy.modalities,
                                         refit=refit, ebic_gamma=ebic_gamma)
        for g, truth, m, om in zip(graphs, (healthy, patient), models, est.precisions):
            a, b, c = edge_recovery(g, truth)
            tp, fp, fn = tp + a, fp + b, fn + c
            mse.append(precision_mse(om, m.precision))
        found.append(find_disconnectors(*graphs).direct_edges())
    return RecoveryResult(tp, fp, fn, mse, found)


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

SCORE_COLUMNS = ("snr_db", "graph_id", "precision", "recall", "f_measure", "true_count", "est_count", "error")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return repr(x)
    return str(x)


def scores_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_COLUMNS)
    for rec in sorted(records, key=lambda r: r.snr_db):
        for c in rec.cells:
            s = c.score
            w.writerow([
                _fmt(rec.snr_db), c.graph_id + 1,
                _fmt(s and s.precision), _fmt(s and s.recall), _fmt(s and s.f_measure),
                _fmt(s and s.true_count), _fmt(s and s.estimated_count), c.error or "",
            ])
    return buf.getvalue()


def aggregates(records: Sequence[SweepRecord]) -> dict:
    out = {"rng": RNG_ALGORITHM, "partial": sweep_is_partial(records), "snr": []}
    for rec in sorted(records, key=lambda r: r.snr_db):
        out["snr"].append({
            "snr_db": "clean" if math.isinf(rec.snr_db) else rec.snr_db,
            "n_graphs": len(rec.cells),
            "failures": rec.failures,
            "f_measure": rec.quartiles("f_measure"),
            "precision": rec.quartiles("precision"),
            "recall": rec.quartiles("recall"),
        })
    if records:
        out["config_digest"] = records[0].config_digest
        out["master_seed"] = records[0].master_seed
    return out


def histogram_csv(pairs: Sequence[GraphPair]) -> str:
    lines = ["disconnector_count,graphs"]
    lines += [f"{k},{v}" for k, v in truth_histogram(pairs).items()]
    return "\n".join(lines) + "\n"


def report(
    records: Sequence[SweepRecord],
    out_dir: str | os.PathLike,
    pairs: Sequence[GraphPair] | None = None,
) -> dict[str, Path]:
    """Write ``scores.csv``, ``aggregates.json`` and (given pairs) ``histogram.csv``."""
    if not records:
        raise InputError("nothing to report: no sweep records")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "scores.csv": scores_csv(records),
        "aggregates.json": json.dumps(aggregates(records), indent=1, sort_keys=True) + "\n",
    }
    if pairs is not None:
        files["histogram.csv"] = histogram_csv(pairs)
    written = {}
    for name, text in files.items():
        path = out / name
        atomic_write_text(path, text)
        written[name] = path
    return written


def read_scores_csv(path: str | os.PathLike) -> list[SweepRecord]:
    """Rebuild sweep records from ``scores.csv`` (for re-reporting)."""
    by_snr: dict[float, list[CellResult]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            snr = parse_snr(row["snr_db"]) if row["snr_db"] != "inf" else CLEAN
            score = None
            if row["f_measure"]:
                prec, est_count = float(row["precision"]), int(row["est_count"])
                score = Score(prec, float(row["recall"]), float(row["f_measure"]),
                              int(row["true_count"]), est_count, round(prec * est_count))
            by_snr.setdefault(snr, []).append(CellResult(int(row["graph_id"]) - 1, snr, score,
                                                         error=row.get("error") or None))
    return [SweepRecord(s, cells, "", 0) for s, cells in sorted(by_snr.items())]
