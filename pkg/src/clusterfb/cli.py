"""Command line interface: ``clusterfb {thresholds,simulate,bitalloc}``."""

import argparse
import csv
import datetime
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, ExperimentConfig
from .simulation import CSV_COLUMNS, ResultRow, simulate_many, sweep_users
from .thresholds import compute_thresholds, min_clusters, partition_users, rate_loss_bound


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return str(value)


def write_results_csv(rows, path):
    """One line per (K, scheme) with the fixed column order, 6 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])


def _package_version():
    try:
        return metadata.version("clusterfb")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(cfg, path, command, argv, outputs):
    manifest = {
        "command": command,
        "argv": list(argv),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "versions": {"clusterfb": _package_version(), "python": platform.python_version(),
                     "numpy": np.__version__},
        "outputs": sorted(outputs),
        "config": cfg.to_dict(),
    }
    with open(path, "w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=False)


def load_manifest_config(path):
    """Rebuild the resolved configuration stored in a run manifest."""
    with open(path) as fh:
        return ExperimentConfig.from_dict(yaml.safe_load(fh)["config"])


def _load_config(args):
    cfg = ExperimentConfig.from_yaml(args.config) if args.config else ExperimentConfig()
    data = cfg.to_dict()
    if args.seed is not None:
        data["run"]["seed"] = args.seed
        data["system"]["variance_seed"] = args.seed
    if getattr(args, "drops", None) is not None:
        data["run"]["n_drops"] = args.drops
    if getattr(args, "k_list", None) is not None:
        data["run"]["k_list"] = args.k_list
    if getattr(args, "users", None) is not None:
        data["system"]["K"] = args.users
    if getattr(args, "jobs", None) is not None:
        data["run"]["n_jobs"] = args.jobs
    if args.out is not None:
        data["run"]["out_dir"] = args.out
    return ExperimentConfig.from_dict(data)


def _check_cluster_count(cfg, k_values):
    n_clusters = cfg.schemes.n_clusters
    needs_clusters = any(n.startswith("cluster") for n in cfg.schemes.names)
    if n_clusters != "auto" and needs_clusters and n_clusters > min(k_values):
        raise ConfigError(f"schemes.n_clusters: {n_clusters} clusters need at least "
                          f"{n_clusters} users, but K={min(k_values)}")


def _out_dir(cfg):
    out = Path(cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_thresholds(cfg, argv):
    _check_cluster_count(cfg, [cfg.system.K])
    system = cfg.system_config()
    rates, M = system.rates, system.M
    c = cfg.schemes
    n_clusters = (min_clusters(rates, c.max_rate_loss, M, c.variant)
                  if c.n_clusters == "auto" else c.n_clusters)
    plans = {v: compute_thresholds(partition_users(rates, n_clusters), v)
             for v in ("type1", "type2")}
    print(f"K={system.K} M={M} clusters={n_clusters} region_bits={plans['type1'].region_bits}")
    print(f"{'cluster':>7} {'size':>4} {'mean_rate':>10} {'type1':>10} {'type2':>10}")
    p1, p2 = plans["type1"], plans["type2"]
    for i in range(n_clusters):
        print(f"{i + 1:>7} {p1.sizes[i]:>4} {_fmt(p1.aggregate_rates[i]):>10} "
              f"{_fmt(p1.thresholds[i]):>10} {_fmt(p2.thresholds[i]):>10}")
    for v, plan in plans.items():
        bound = rate_loss_bound(rates, plan.smallest_threshold, M)
        auto = min_clusters(rates, c.max_rate_loss, M, v)
        print(f"{v}: loss bound {_fmt(bound)} bits/s/Hz, fewest clusters within "
              f"{_fmt(c.max_rate_loss)}: {auto}")

    out = _out_dir(cfg)
    with open(out / "thresholds.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster", "user", "channel_var", "rate", "threshold_type1",
                         "threshold_type2"])
        for (i, u, rate, t1), (_, _, _, t2) in zip(p1.to_records(), p2.to_records()):
            writer.writerow([i, u, _fmt(system.channel_vars[u]), _fmt(rate), _fmt(t1),
                             _fmt(t2)])
    write_manifest(cfg, out / "manifest.yaml", "thresholds", argv, ["thresholds.csv"])
    return 0


def cmd_bitalloc(cfg, argv):
    _check_cluster_count(cfg, [cfg.system.K])
    system = cfg.system_config()
    scheme = cfg.cluster_scheme().fit(system.rates)
    alloc = scheme.allocation_
    print(f"{scheme.name}: K={system.K} clusters={scheme.n_clusters_} "
          f"region_bits={scheme.region_bits_}")
    print("thresholds: " + " ".join(_fmt(t) for t in scheme.thresholds_))
    print("bits per region: " + " ".join(str(b) for b in alloc.bits))
    print(f"objective {_fmt(alloc.objective)} bits/s/Hz, {alloc.n_feasible} of "
          f"{alloc.n_candidates} vectors feasible, smallest slack {_fmt(alloc.slack.min())}")
    out = _out_dir(cfg)
    with open(out / "allocation.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region", "lower", "upper", "bits", "region_mass", "cell", "level"])
        for i, q in enumerate(alloc.quantizer.regions):
            if q is None:
                continue
            for j in range(q.n_levels):
                writer.writerow([i, _fmt(q.edges[j]), _fmt(q.edges[j + 1]), q.bits,
                                 _fmt(alloc.region_mass[i]), j, _fmt(q.levels[j])])
    limits = scheme.budget_.for_users(system.K)
    with open(out / "slack.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "rate", "limit", "expected_bits", "slack"])
        for k in range(system.K):
            writer.writerow([k, _fmt(system.rates[k]), _fmt(limits[k]),
                             _fmt(limits[k] - alloc.slack[k]), _fmt(alloc.slack[k])])
    write_manifest(cfg, out / "manifest.yaml", "bitalloc", argv,
                   ["allocation.csv", "slack.csv"])
    return 0


def _explicit_rows(cfg):
    """Simulation rows for an explicit variance list (a single K)."""
    system = cfg.system_config()
    M, mode = system.M, cfg.schemes.feedback_mode
    schemes = [s.fit(system.rates) for s in cfg.build_schemes()]
    results = simulate_many(system, schemes, cfg.run.n_drops, cfg.run.seed,
                            n_jobs=cfg.run.n_jobs, block_size=cfg.run.block_size, mode=mode,
                            snr_model=cfg.schemes.snr_model,
                            accounting=cfg.schemes.rate_accounting)
    return [ResultRow(K=system.K, scheme=s.name, sum_rate=r.sum_rate,
                      sum_rate_se=r.sum_rate_se, fb_bits=r.fb_bits, fb_bits_se=r.fb_bits_se,
                      fb_bits_analytic=s.analytic_feedback_load(M, mode),
                      rate_loss_bound=s.rate_loss_bound(M), seed=cfg.run.seed)
            for s, r in zip(schemes, results)]


def cmd_simulate(cfg, argv):
    s, c, r = cfg.system, cfg.schemes, cfg.run
    explicit = s.channel_vars != "uniform"
    k_values = [s.K] if explicit else r.k_list
    _check_cluster_count(cfg, k_values)
    if explicit:
        rows = _explicit_rows(cfg)
    else:
        rows = sweep_users(s.M, s.N, float(s.P), float(s.noise_var), r.k_list,
                           cfg.build_schemes(), r.n_drops, r.seed, n_jobs=r.n_jobs,
                           mode=c.feedback_mode, snr_model=c.snr_model,
                           accounting=c.rate_accounting, block_size=r.block_size)
    print(f"{'K':>4} {'scheme':<17} {'sum_rate':>9} {'se':>8} {'fb_bits':>9} {'analytic':>9}")
    for row in rows:
        print(f"{row.K:>4} {row.scheme:<17} {_fmt(row.sum_rate):>9} {_fmt(row.sum_rate_se):>8} "
              f"{_fmt(row.fb_bits):>9} {_fmt(row.fb_bits_analytic):>9}")
    out = _out_dir(cfg)
    write_results_csv(rows, out / "results.csv")
    write_manifest(cfg, out / "manifest.yaml", "simulate", argv, ["results.csv"])
    return 0


def _k_list(text):
    try:
        values = [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid K list {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("K list is empty")
    return values


def build_parser():
    parser = argparse.ArgumentParser(prog="clusterfb",
                                     description="Cluster-based multi-threshold feedback "
                                                 "for multi-user MIMO broadcast.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with system/schemes/run blocks")
    common.add_argument("--out", help="output directory (overrides run.out_dir)")
    common.add_argument("--seed", type=int, help="master seed for drops and variance draws")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("thresholds", parents=[common], help="cluster thresholds and loss bound")
    p.add_argument("--users", type=int, help="number of users K")
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("bitalloc", parents=[common], help="per-region bit allocation")
    p.add_argument("--users", type=int, help="number of users K")
    p.set_defaults(func=cmd_bitalloc)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo sweep over K")
    p.add_argument("--drops", type=int, help="drops per K")
    p.add_argument("--k-list", type=_k_list, help="comma-separated user counts")
    p.add_argument("--jobs", type=int, help="parallel workers")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        return args.func(cfg, argv)
    except (ConfigError, ValueError) as exc:
        print(f"clusterfb: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"clusterfb: error: cannot write output: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
