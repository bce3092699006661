"""``modsplit`` command line.

Subcommands::

    modsplit simulate  [CONFIG]             graph pairs, truths and sample CSVs
    modsplit estimate  DATA_DIR             group graphs from sample CSVs
    modsplit disconnect HEALTHY PATIENT     disconnector report for two graphs
    modsplit sweep     [CONFIG] [--jobs N]  F-measure over an SNR grid
    modsplit report    RUN_DIR              re-aggregate a finished sweep

Every command writes into a run directory (``--out``, or a directory named
by the config digest under ``$MODSPLIT_OUT``, default ``./runs``) together
with a ``manifest-<command>.json`` listing versions, timings and hashes.

Exit codes: 0 success, 2 bad input or config, 3 numerical/solver failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .disconnector import find_disconnectors
from .errors import EstimationError, GenerationError, InputError, ModsplitError
from .estimator import CORRECTIONS, DEFAULT_CORRECTION, estimate_graphs, precision_to_pcorr, write_matrix
from .evaluate import (
    GraphPair,
    SimulationConfig,
    _snr_key,
    aggregates,
    build_ensemble,
    clean_samples,
    histogram_csv,
    parse_snr,
    read_scores_csv,
    report,
    run_snr_sweep,
    sweep_is_partial,
)
from .examples import resolve_graph_path
from .graph import check_same_space, read_graph, read_modality_map
from .rng import stream
from .runio import RunManifest, atomic_write_text, digest_of, out_root, sha256_file
from .synth import add_noise_for_snr, read_sample_set, write_sample_set

logger = logging.getLogger("modsplit")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(args) -> SimulationConfig:
    """Config file (or defaults) with command-line overrides applied."""
    doc = {}
    if getattr(args, "config", None):
        doc = SimulationConfig.from_file(args.config).to_dict()
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--set expects KEY=VALUE, got {item!r}")
        doc[key.strip()] = _parse_value(value)
    if getattr(args, "seed", None) is not None:
        doc["master_seed"] = args.seed
    if getattr(args, "graphs", None) is not None:
        doc["n_graphs"] = args.graphs
    if getattr(args, "snr", None):
        doc["snr_grid"] = [_parse_value(s) if s.lower() != "clean" else "clean" for s in args.snr]
    return SimulationConfig.from_dict(doc)


def _run_dir(args, digest: str, prefix: str = "") -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return out_root() / f"{prefix}{digest}"


def _write(path: Path, text: str, written: list) -> None:
    atomic_write_text(path, text)
    written.append(path)


def _tag(i: int) -> str:
    return f"graph_{i + 1:03d}"


def _config_inputs(args, cfg: SimulationConfig, manifest: RunManifest) -> None:
    if getattr(args, "config", None):
        manifest.add_input(args.config)
    if cfg.healthy_graph:
        manifest.inputs[cfg.healthy_graph] = sha256_file(resolve_graph_path(cfg.healthy_graph))


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = load_config(args)
    digest = cfg.digest()
    run_dir = _run_dir(args, digest)
    manifest = RunManifest("simulate", cfg.digest_doc(), digest, cfg.master_seed)
    _config_inputs(args, cfg, manifest)
    written: list[Path] = []

    with manifest.stage("graphs"):
        pairs = build_ensemble(cfg, run_dir)
        written.append(run_dir / "ensemble.json")
        for pair in pairs:
            base = run_dir / "graphs" / _tag(pair.index)
            _write(base.with_name(base.name + "_healthy.json"), pair.healthy.to_json(), written)
            _write(base.with_name(base.name + "_patient.json"), pair.patient.to_json(), written)
            truth = {
                "disconnectors": [[u + 1, v + 1] for u, v in sorted(pair.truth)],
                "plant": pair.plant.to_dict(),
            }
            _write(base.with_name(base.name + "_truth.json"), json.dumps(truth, indent=1) + "\n", written)
        _write(run_dir / "histogram.csv", histogram_csv(pairs), written)
        _write(run_dir / "config.json", json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n", written)

    if not args.no_samples:
        snrs = [parse_snr(s) for s in args.sample_snr] if args.sample_snr else [math.inf]
        with manifest.stage("samples"):
            for pair in pairs:
                _write_pair_samples(pair, cfg, snrs, run_dir / "samples", written)

    manifest.add_outputs(run_dir, written)
    manifest.write(run_dir)
    print(f"simulated {len(pairs)} graph pair(s) into {run_dir}")
    return EXIT_OK


def _write_pair_samples(pair: GraphPair, cfg: SimulationConfig, snrs, root: Path, written: list) -> None:
    (mh, mp), (sh, sp) = clean_samples(pair, cfg)
    meta = {"graph_id": pair.index + 1, "modalities": list(pair.healthy.modalities)}
    for snr in snrs:
        key = _snr_key(snr)
        folder = root / (_tag(pair.index) if math.isinf(snr) else f"{_tag(pair.index)}_snr{key}")
        folder.mkdir(parents=True, exist_ok=True)
        for s, m in ((sh, mh), (sp, mp)):
            out = s
            if not math.isinf(snr):
                out = add_noise_for_snr(s, snr, stream(cfg.master_seed, "noise", pair.index, key, s.group),
                                        m.covariance.diagonal())
            seed_path = f"{cfg.master_seed}/sample/{pair.index}/{s.group}"
            out = replace(out, seed=seed_path, meta={**out.meta, **meta})
            path = folder / f"{s.group}.csv"
            write_sample_set(out, path)
            written += [path, path.with_suffix(".json")]


# --------------------------------------------------------------------------
# estimate
# --------------------------------------------------------------------------


def _load_groups(data_dir: Path, wanted: list[str] | None):
    if not data_dir.is_dir():
        raise InputError(f"{data_dir}: not a directory")
    sets = {}
    for csv_path in sorted(data_dir.glob("*.csv")):
        if not csv_path.with_suffix(".json").is_file():
            continue
        s = read_sample_set(csv_path)
        if s.group in sets:
            raise InputError(f"group {s.group!r} appears twice in {data_dir}")
        sets[s.group] = (s, csv_path)
    if wanted:
        missing = [g for g in wanted if g not in sets]
        if missing:
            raise InputError(f"missing group(s) in {data_dir}: {', '.join(missing)}")
        order = wanted
    else:
        order = sorted(sets, key=lambda g: (g != "healthy", g != "patient", g))
    if len(order) < 2:
        raise InputError(f"{data_dir}: need sample sets for at least two groups, found {len(order)}")
    return [sets[g] for g in order]


def _modalities(args, groups) -> list[str] | None:
    p = groups[0][0].p
    if args.modalities:
        labels = read_modality_map(args.modalities)
        if labels and max(labels) > p:
            raise InputError(f"modality map names node {max(labels)} but the data has {p} columns")
        return [labels.get(i, "A") for i in range(1, p + 1)]
    found = {tuple(s.meta["modalities"]) for s, _ in groups if "modalities" in s.meta}
    if len(found) == 1:
        mods = list(found.pop())
        if len(mods) == p:
            return mods
    return None


def cmd_estimate(args) -> int:
    data_dir = Path(args.data_dir)
    groups = _load_groups(data_dir, args.groups.split(",") if args.groups else None)
    modalities = _modalities(args, groups)
    settings = {
        "alpha": args.alpha,
        "correction": args.correction,
        "lambda_sparse": args.lambda_sparse,
        "lambda_joint": args.lambda_joint,
        "refit": not args.no_refit,
        "ebic_gamma": args.ebic_gamma,
    }
    config = {**settings, "inputs": {p.name: sha256_file(p) for _, p in groups}}
    digest = digest_of(config)
    run_dir = _run_dir(args, digest, "estimate-")
    manifest = RunManifest("estimate", config, digest)
    for _, p in groups:
        manifest.add_input(p)

    sample_sets = [s for s, _ in groups]
    with manifest.stage("estimate"):
        est, adj, graphs = estimate_graphs(
            sample_sets, args.alpha, args.correction, args.lambda_sparse, args.lambda_joint, modalities,
            refit=not args.no_refit, ebic_gamma=args.ebic_gamma,
        )
    written: list[Path] = []
    with manifest.stage("write"):
        for s, om, a, g in zip(sample_sets, est.precisions, adj.entries, graphs):
            side = {
                "group": s.group, "n": s.n, "alpha": a.alpha, "correction": a.correction,
                **est.diagnostics(),
            }
            for name, mat in ((f"precision_{s.group}.csv", om), (f"pcorr_{s.group}.csv", precision_to_pcorr(om))):
                path = run_dir / name
                path.parent.mkdir(parents=True, exist_ok=True)
                write_matrix(mat, path, side)
                written += [path, path.with_suffix(".json")]
            _write(run_dir / f"graph_{s.group}.json", g.to_json(), written)
    manifest.add_outputs(run_dir, written)
    manifest.write(run_dir)
    lam = f"lambda_sparse={est.lambda_sparse:g} lambda_joint={est.lambda_joint:g}"
    for s, g in zip(sample_sets, graphs):
        print(f"{s.group}: {len(g.edges)} edge(s)")
    print(f"{lam}; outputs in {run_dir}")
    return EXIT_OK


# --------------------------------------------------------------------------
# disconnect
# --------------------------------------------------------------------------


def cmd_disconnect(args) -> int:
    healthy = read_graph(args.healthy, args.modalities)
    patient = read_graph(args.patient, args.modalities)
    check_same_space(healthy, patient)
    config = {"healthy": sha256_file(args.healthy), "patient": sha256_file(args.patient)}
    digest = digest_of(config)
    run_dir = _run_dir(args, digest, "disconnect-")
    manifest = RunManifest("disconnect", config, digest)
    manifest.add_input(args.healthy)
    manifest.add_input(args.patient)
    with manifest.stage("disconnect"):
        rep = find_disconnectors(healthy, patient)
    written: list[Path] = []
    _write(run_dir / "report.json", rep.to_json(), written)
    _write(run_dir / "report.txt", rep.to_text(), written)
    manifest.add_outputs(run_dir, written)
    manifest.write(run_dir)
    sys.stdout.write(rep.to_text())
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep / report
# --------------------------------------------------------------------------


def _summary(records) -> str:
    lines = ["snr_db   graphs  failed  median_F  q1_F    q3_F"]
    for r in records:
        q = r.quartiles() or {"median": math.nan, "q1": math.nan, "q3": math.nan}
        snr = "clean" if math.isinf(r.snr_db) else f"{r.snr_db:g}"
        lines.append(f"{snr:<8} {len(r.cells):<7} {r.failures:<7} {q['median']:<9.3f} {q['q1']:<7.3f} {q['q3']:.3f}")
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    digest = cfg.digest()
    run_dir = _run_dir(args, digest)
    manifest = RunManifest("sweep", cfg.digest_doc(), digest, cfg.master_seed)
    _config_inputs(args, cfg, manifest)
    with manifest.stage("graphs"):
        pairs = build_ensemble(cfg, run_dir)
    with manifest.stage("cells"):
        records = run_snr_sweep(cfg, jobs=args.jobs, pairs=pairs)
    with manifest.stage("report"):
        files = report(records, run_dir, pairs)
        atomic_write_text(run_dir / "config.json", json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    manifest.add_outputs(run_dir, [*files.values(), run_dir / "ensemble.json", run_dir / "config.json"])
    manifest.write(run_dir)
    sys.stdout.write(_summary(records))
    print(f"outputs in {run_dir}")
    if all(not r.scores for r in records):
        logger.error("every cell of the sweep failed")
        return EXIT_SOLVER
    if sweep_is_partial(records):
        logger.warning("sweep is partial: at least one SNR point has no successful cell")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    scores = run_dir / "scores.csv"
    if not scores.is_file():
        raise InputError(f"{run_dir}: no scores.csv (run 'modsplit sweep' first)")
    records = read_scores_csv(scores)
    pairs = None
    ens = run_dir / "ensemble.json"
    if ens.is_file():
        doc = json.loads(ens.read_text())
        pairs = [GraphPair.from_dict(d) for d in doc["pairs"]]
        digest, seed = doc.get("config_digest", ""), None
        cfg_path = run_dir / "config.json"
        if cfg_path.is_file():
            seed = json.loads(cfg_path.read_text()).get("master_seed")
        records = [replace(r, config_digest=digest, master_seed=seed) for r in records]
    config = {"scores.csv": sha256_file(scores)}
    manifest = RunManifest("report", config, digest_of(config))
    manifest.add_input(scores)
    with manifest.stage("report"):
        doc = aggregates(records)
        written: list[Path] = []
        _write(run_dir / "aggregates.json", json.dumps(doc, indent=1, sort_keys=True) + "\n", written)
        if pairs is not None:
            _write(run_dir / "histogram.csv", histogram_csv(pairs), written)
    manifest.add_outputs(run_dir, written)
    manifest.write(run_dir)
    sys.stdout.write(_summary(records))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser and entry point
# --------------------------------------------------------------------------


def _add_config_args(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("config", nargs="?", help="simulation config (JSON); defaults when omitted")
    sp.add_argument("--out", help="run directory (default: $MODSPLIT_OUT/<config digest>)")
    sp.add_argument("--seed", type=int, help="override master_seed")
    sp.add_argument("--graphs", type=int, help="override n_graphs")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override any config field; VALUE is parsed as JSON when possible")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modsplit", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="generate graph pairs, true disconnectors and samples")
    _add_config_args(sp)
    sp.add_argument("--sample-snr", action="append", metavar="DB",
                    help="also write noisy samples at this SNR (repeatable; 'clean' for none)")
    sp.add_argument("--no-samples", action="store_true", help="write graphs and truths only")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="estimate group graphs from sample CSVs")
    sp.add_argument("data_dir", help="directory with one <group>.csv (+ .json sidecar) per group")
    sp.add_argument("--out")
    sp.add_argument("--groups", help="comma-separated group names, in order (default: healthy, patient, ...)")
    sp.add_argument("--lambda-sparse", type=float, help="sparsity penalty (default: eBIC selection)")
    sp.add_argument("--lambda-joint", type=float, help="cross-group penalty (default: eBIC selection)")
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--correction", choices=CORRECTIONS, default=DEFAULT_CORRECTION)
    sp.add_argument("--ebic-gamma", type=float, default=0.5)
    sp.add_argument("--no-refit", action="store_true", help="test the penalized estimates directly")
    sp.add_argument("--modalities", help="modality map: JSON object/list or 'id modality' lines")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("disconnect", help="find edges whose loss splits healthy modules")
    sp.add_argument("healthy")
    sp.add_argument("patient")
    sp.add_argument("--out")
    sp.add_argument("--modalities", help="modality map for edge-list inputs")
    sp.set_defaults(func=cmd_disconnect)

    sp = sub.add_parser("sweep", help="disconnector F-measure over an SNR grid")
    _add_config_args(sp)
    sp.add_argument("--snr", action="append", metavar="DB", help="override snr_grid (repeatable)")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes for the (graph, SNR) cells")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="recompute aggregates of a finished sweep")
    sp.add_argument("run_dir")
    sp.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EstimationError, GenerationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        diag = {k: getattr(exc, k) for k in ("iterations", "primal_residual", "dual_residual")
                if getattr(exc, k, None) is not None}
        if diag:
            print("diagnostics: " + json.dumps(diag), file=sys.stderr)
        return EXIT_SOLVER
    except (ModsplitError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
