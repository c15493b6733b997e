"""Command-line entry point.

Subcommands: threshold, simulate, empirical, oracle, chung, spectra,
figure3, figure456.  Global flags: --seed, --threads, --out, --config
(JSON file merged under explicit flags); TEMPEST_THREADS is the fallback
for --threads.  Exit codes: 0 ok, 1 config error, 2 numerical failure,
3 resource cap exceeded.

Every output file embeds the config hash and seed: CSV files start with a
'# {json}' header line, JSON files carry config/config_hash/seed fields.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .config import ExperimentConfig, build_graph, config_hash
from .errors import ConfigError, NUMERICAL_ERRORS, RESOURCE_ERRORS, TempestError
from .graphs import mean_matrix
from .markov import CT, DT
from .oracle import RandomMatrixSampler, chung_tail_check, expected_certificate, \
    exponential_condition
from .simulate import empirical_threshold, simulate_ct_exact, simulate_dt_exact
from .thresholds import EpidemicParams, certify_amai_ct, certify_amei_ct, certify_amei_dt, \
    certify_homogeneous, static_ct_condition, static_dt_condition, threshold_in_beta, \
    xi_h_factor

FIGURE3_PANELS = {"a": (100, 10.0), "b": (1000, 100.0), "c": (10000, 1000.0)}


def _header(cfg: ExperimentConfig) -> dict:
    return {"config": cfg.to_dict(), "config_hash": cfg.hash(), "seed": cfg.seed}


def _write_csv(path, cfg, columns, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(_header(cfg), sort_keys=True) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(v) for v in row) + "\n")
    print(f"wrote {path}")
    return path


def _csv_cell(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_json(path, cfg, result):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    doc = dict(_header(cfg), result=result)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    print(f"wrote {path}")
    return path


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON-serializable: {type(v)}")


def _out_path(cfg: ExperimentConfig, ext: str) -> str:
    return cfg.out or f"{cfg.task}_{cfg.seed}.{ext}"


def _epidemic(cfg: ExperimentConfig, n: int) -> EpidemicParams:
    beta = cfg.epidemic.get("beta")
    delta = cfg.epidemic.get("delta")
    if beta is None or delta is None:
        raise ConfigError("this task needs epidemic.beta and epidemic.delta")
    beta = np.full(n, beta) if np.isscalar(beta) else np.asarray(beta, dtype=float)
    delta = np.full(n, delta) if np.isscalar(delta) else np.asarray(delta, dtype=float)
    return EpidemicParams(beta, delta)


def _beta_grid(spec) -> np.ndarray:
    if isinstance(spec, (list, tuple)):
        return np.asarray(spec, dtype=float)
    lo, hi, count = str(spec).split(":")
    return np.linspace(float(lo), float(hi), int(count))


# ---------------------------------------------------------------------------
# Task handlers
# ---------------------------------------------------------------------------

def _run_threshold(cfg: ExperimentConfig):
    graph = build_graph(cfg)
    mean = mean_matrix(graph)
    cert = cfg.params.get("certificate", "t4" if graph.time == DT else "t2").lower()
    delta = cfg.epidemic.get("delta")
    if delta is None or not np.isscalar(delta):
        raise ConfigError("threshold search needs a scalar epidemic.delta")
    delta = float(delta)
    result = {"certificate": cert, "delta": delta, "n": graph.n,
              "eta_abar": mean.eta_abar(), "eta_support": mean.eta_support()}

    beta = cfg.epidemic.get("beta")
    if beta is not None and np.isscalar(beta):
        report = _certify(mean, graph, cert, float(beta), delta)
        result["report"] = report.to_dict()
    else:
        eta = mean.eta_abar()
        hi_default = 2.0 * delta / eta if eta > 0 else 1.0
        lo = float(cfg.params.get("search_lo", 1e-8))
        hi = float(cfg.params.get("search_hi", hi_default))
        beta_hat = threshold_in_beta(mean, delta, cert, (lo, hi))
        result["beta_threshold"] = beta_hat
        result["search_bounds"] = [lo, hi]
        result["report"] = _certify(mean, graph, cert, beta_hat, delta).to_dict()
    return [_write_json(_out_path(cfg, "json"), cfg, result)]


def _certify(mean, graph, cert, beta, delta):
    params = EpidemicParams.homogeneous(beta, delta, mean.n)
    if cert == "t1":
        return certify_amai_ct(mean, params)
    if cert == "t2":
        return certify_amei_ct(mean, params)
    if cert == "t3":
        return certify_homogeneous(mean, beta, delta)
    if cert == "t4":
        # run through the graph-level wrapper once for the aperiodicity check
        return certify_amei_dt(graph if graph is not None else mean, params)
    if cert == "static_ct":
        stable, margin = static_ct_condition(mean.a_bar, params)
        from .thresholds import ThresholdReport
        lhs = beta / delta
        return ThresholdReport("STATIC_CT", lhs, lhs + margin, float("nan"),
                               margin if stable else None, stable, {"margin": margin})
    if cert == "static_dt":
        stable, margin = static_dt_condition(mean.a_bar, params)
        from .thresholds import ThresholdReport
        lam = 1.0 - margin
        return ThresholdReport("STATIC_DT", lam, 1.0, float("nan"),
                               margin if stable else None, stable, {"margin": margin})
    raise ConfigError(f"unknown certificate {cert!r}")


def _run_simulate(cfg: ExperimentConfig):
    graph = build_graph(cfg)
    params = _epidemic(cfg, graph.n)
    paths = int(cfg.params.get("paths", 1))
    reinfect = bool(cfg.params.get("reinfect", False))
    init = cfg.params.get("init", "all")
    rows = []
    for pid in range(paths):
        if graph.time == CT:
            horizon = float(cfg.params.get("horizon", 100.0))
            trace = simulate_ct_exact(graph, params, horizon, init_infected=init,
                                      seed=cfg.seed * 100_003 + pid)
        else:
            steps = int(cfg.params.get("steps", 1000))
            trace = simulate_dt_exact(graph, params, steps, init_infected=init,
                                      reinfect=reinfect, seed=cfg.seed * 100_003 + pid)
        rows.extend((pid, t, c) for t, c in zip(trace.times, trace.infected_counts))
    return [_write_csv(_out_path(cfg, "csv"), cfg, ["path_id", "t_or_k", "infected_count"], rows)]


def _run_empirical(cfg: ExperimentConfig):
    graph = build_graph(cfg)
    delta = float(cfg.epidemic.get("delta", 0.05))
    grid = _beta_grid(cfg.params.get("beta_grid", "5e-4:10e-4:12"))
    paths = int(cfg.params.get("paths", 100))
    steps = int(cfg.params.get("steps", 1000))
    report = empirical_threshold(graph, delta, grid, paths, steps, seed=cfg.seed,
                                 threads=cfg.resolve_threads())
    rows = list(zip(report.beta_grid, report.y_star, report.z_star))
    path = _write_csv(_out_path(cfg, "csv"), cfg, ["beta", "y_star", "z_star"], rows)
    side = _write_json(os.path.splitext(path)[0] + ".json", cfg, {
        "beta_star": report.beta_star, "paths": report.paths, "steps": report.horizon})
    return [path, side]


def _run_oracle(cfg: ExperimentConfig):
    graph = build_graph(cfg)
    params = _epidemic(cfg, graph.n)
    stable, eta = exponential_condition(graph, params)
    rows = [[0, eta, "stable" if stable else "unstable"]]
    columns = ["instance_id", "eta", "verdict"]
    which = cfg.params.get("expect")
    result = {"eta": eta, "stable": stable}
    if which:
        sampler = RandomMatrixSampler.from_mean(which.upper(), mean_matrix(graph), params)
        est = expected_certificate(sampler, cfg.params.get("mode", "exhaustive"),
                                   draws=int(cfg.params.get("draws", 10000)), seed=cfg.seed)
        result["expectation"] = {"statistic": est.statistic, "value": est.value,
                                 "stderr": est.stderr, "mode": est.mode, "count": est.count}
        rows[0].extend([est.statistic, est.value, est.stderr])
        columns.extend(["statistic", "value", "stderr"])
    path = _write_csv(_out_path(cfg, "csv"), cfg, columns, rows)
    side = _write_json(os.path.splitext(path)[0] + ".json", cfg, result)
    return [path, side]


def _run_chung(cfg: ExperimentConfig):
    graph = build_graph(cfg)
    params = _epidemic(cfg, graph.n)
    family = cfg.params.get("family", "m2").upper()
    draws = int(cfg.params.get("draws", 10_000))
    sampler = RandomMatrixSampler.from_mean(family, mean_matrix(graph), params)
    if "s_grid" in cfg.params:
        s_grid = np.asarray(cfg.params["s_grid"], dtype=float)
    else:
        s_max = float(cfg.params.get("s_max", 4.0 * np.sqrt(sampler.variance_proxy())
                                     + 2.0 * sampler.bound_c()))
        s_grid = np.linspace(0.0, s_max, int(cfg.params.get("s_count", 20)))
    check = chung_tail_check(sampler, s_grid, draws=draws, seed=cfg.seed)
    rows = list(zip(check.s, check.empirical, check.bound))
    return [_write_csv(_out_path(cfg, "csv"), cfg, ["s", "empirical", "bound"], rows)]


def _run_spectra(cfg: ExperimentConfig):
    graph = build_graph(cfg)
    mean = mean_matrix(graph)
    result = {"n": graph.n, "kind": graph.kind, "time": graph.time,
              "eta_abar": mean.eta_abar(), "eta_support": mean.eta_support()}
    if cfg.epidemic:
        params = _epidemic(cfg, graph.n)
        from .spectral import matrix_measure, spectral_abscissa
        bad = params.beta[:, None] * mean.a_bar - np.diag(params.delta)
        result["eta_BAbar_minus_D"] = spectral_abscissa(bad)
        result["mu_BAbar_minus_D"] = matrix_measure(bad)
        if graph.time == DT:
            result["lambda4"] = spectral_abscissa(bad + np.eye(graph.n))
    return [_write_json(_out_path(cfg, "json"), cfg, result)]


def _run_figure3(cfg: ExperimentConfig):
    panel = cfg.params.get("panel", "a")
    if panel not in FIGURE3_PANELS:
        raise ConfigError("figure3 panel must be one of a, b, c")
    n, eta_sgn = FIGURE3_PANELS[panel]
    dob_count = int(cfg.params.get("ratio_count", 20))
    d3_count = int(cfg.params.get("delta3_count", 20))
    dobs = np.linspace(eta_sgn / dob_count, eta_sgn, dob_count)
    d3max = eta_sgn / 4.0
    d3s = np.linspace(0.0, d3max, d3_count)
    rows = []
    for dob in dobs:
        for d3 in d3s:
            xi, _ = xi_h_factor(n, eta_sgn, float(dob), float(d3))
            rows.append((dob, d3, d3 / d3max, xi))
    out = cfg.out or f"figure3_{panel}_{cfg.seed}.csv"
    return [_write_csv(out, cfg, ["delta_over_beta", "Delta3", "Delta3_rel", "xi_H"], rows)]


def _run_figure456(cfg: ExperimentConfig):
    graph = build_graph(cfg)
    mean = mean_matrix(graph)
    delta = float(cfg.epidemic.get("delta", 0.05))
    grid = _beta_grid(cfg.params.get("beta_grid", "5e-4:10e-4:12"))
    paths = int(cfg.params.get("paths", 100))
    steps = int(cfg.params.get("steps", 1000))
    outdir = cfg.out or f"figure456_{cfg.seed}"
    os.makedirs(outdir, exist_ok=True)

    eta = mean.eta_abar()
    static_thr = delta / eta if eta > 0 else math.inf
    t4_thr = threshold_in_beta(mean, delta, "t4", (1e-8, 2.0 * static_thr))

    written = [fig4_csv(os.path.join(outdir, "fig4.csv"), cfg, mean, graph, delta, grid, t4_thr),
               ]
    report = empirical_threshold(graph, delta, grid, paths, steps, seed=cfg.seed,
                                 threads=cfg.resolve_threads())
    written.append(fig5_csv(os.path.join(outdir, "fig5.csv"), cfg, report, t4_thr, static_thr))
    written.append(fig6_csv(os.path.join(outdir, "fig6.csv"), cfg, graph, delta, steps))
    return written


# ---------------------------------------------------------------------------
# Plot-data emitters (CSV per figure panel)
# ---------------------------------------------------------------------------

def fig4_csv(path, cfg, mean, graph, delta, beta_grid, t4_threshold):
    """Columns (beta, gamma_D); a marker row carries the certified threshold.

    An empty beta grid produces a header-only file.
    """
    rows = []
    for beta in beta_grid:
        params = EpidemicParams.homogeneous(float(beta), delta, mean.n)
        rep = certify_amei_dt(mean, params)
        gamma = rep.intermediates.get("gamma_D", float("nan"))
        rows.append((float(beta), gamma if rep.stable else float("nan")))
    if rows:
        rows.append(("threshold", t4_threshold))
    return _write_csv(path, cfg, ["beta", "gamma_D"], rows)


def fig5_csv(path, cfg, report, t4_threshold, static_threshold):
    """Columns (beta, z_star) plus the two threshold constants; header-only
    when the report is empty."""
    rows = list(zip(report.beta_grid, report.z_star))
    if rows:
        rows.append(("threshold_t4", t4_threshold))
        rows.append(("threshold_static", static_threshold))
    return _write_csv(path, cfg, ["beta", "z_star"], rows)


def fig6_csv(path, cfg, graph, delta, steps, betas=(6.0e-4, 7.5e-4, 9.0e-4), paths=3):
    """Sample paths of the infected count for three infection rates."""
    rows = []
    for panel, beta in enumerate(betas):
        for pid in range(paths):
            trace = simulate_dt_exact(graph, (np.full(graph.n, beta), np.full(graph.n, delta)),
                                      steps, reinfect=True,
                                      seed=cfg.seed + 7919 * (panel * paths + pid + 1))
            rows.extend((beta, pid, int(k), int(c))
                        for k, c in zip(trace.times, trace.infected_counts))
    return _write_csv(path, cfg, ["beta", "path_id", "k", "infected_count"], rows)


_HANDLERS = {
    "threshold": _run_threshold,
    "simulate": _run_simulate,
    "empirical": _run_empirical,
    "oracle": _run_oracle,
    "chung": _run_chung,
    "spectra": _run_spectra,
    "figure3": _run_figure3,
    "figure456": _run_figure456,
}


def run(cfg: ExperimentConfig):
    """Dispatch a validated config; returns the list of written files."""
    return _HANDLERS[cfg.task](cfg)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tempest", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="task", required=True)
    for task in _HANDLERS:
        p = sub.add_parser(task)
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--preset", choices=["iv", "small_world", "complete_edge_markovian"])
        p.add_argument("--graph-file", dest="graph_file")
        p.add_argument("--graph-param", dest="graph_params", action="append", default=[],
                       metavar="KEY=VALUE", help="preset parameter, repeatable")
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--param", dest="task_params", action="append", default=[],
                       metavar="KEY=VALUE", help="task parameter, repeatable")
        if task == "threshold":
            p.add_argument("--certificate",
                           choices=["t1", "t2", "t3", "t4", "static_ct", "static_dt"])
        if task == "figure3":
            p.add_argument("--panel", choices=["a", "b", "c"])
        if task == "chung":
            p.add_argument("--family", choices=["m2", "m3", "m4"])
        if task in ("empirical", "figure456", "simulate"):
            p.add_argument("--paths", type=int, default=None)
            p.add_argument("--steps", type=int, default=None)
            p.add_argument("--beta-grid", dest="beta_grid", default=None,
                           help="lo:hi:count or comma-separated list")
    return parser


def _parse_kv(pairs):
    out = {}
    for pair in pairs:
        key, _, value = pair.partition("=")
        if not _:
            raise ConfigError(f"expected KEY=VALUE, got {pair!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _assemble_config(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    doc["task"] = args.task
    doc.setdefault("seed", 0)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.threads is not None:
        doc["threads"] = args.threads
    if args.out is not None:
        doc["out"] = args.out
    graph = doc.setdefault("graph", {})
    if args.preset:
        graph["preset"] = args.preset
    if args.graph_file:
        graph["file"] = args.graph_file
    if args.graph_params:
        graph.setdefault("params", {}).update(_parse_kv(args.graph_params))
    if not graph:
        doc.pop("graph")
    epidemic = doc.setdefault("epidemic", {})
    if args.beta is not None:
        epidemic["beta"] = args.beta
    if args.delta is not None:
        epidemic["delta"] = args.delta
    if not epidemic:
        doc.pop("epidemic")
    params = doc.setdefault("params", {})
    params.update(_parse_kv(args.task_params))
    for key in ("certificate", "panel", "family", "paths", "steps", "beta_grid"):
        value = getattr(args, key, None)
        if value is not None:
            if key == "beta_grid" and "," in str(value):
                value = [float(x) for x in str(value).split(",")]
            params[key] = value
    if not params:
        doc.pop("params")
    return ExperimentConfig.from_dict(doc)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _assemble_config(args)
        run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except RESOURCE_ERRORS as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return 3
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except TempestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
