"""Command-line front end.

    gwimoments simulate   --config run.yaml
    gwimoments stationary --config run.yaml --format json
    gwimoments decay      --config run.yaml --seed 7 --samples 50000
    gwimoments certify    --config run.yaml --report cert.txt
    gwimoments tail       --config run.yaml --out tail.csv

Exit status: 0 success, 2 configuration or usage error, 3 runtime error
(precondition or computational budget).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys

import numpy as np

from . import config as cfgmod
from . import parallel
from .analysis import (
    classify_moment,
    empirical_alpha_moment,
    estimate_Mk_sequence,
    fit_decay_rate,
    stationary_mean_exact,
    tail_report,
)
from .certificate import Budgets, build_certificate, format_report
from .errors import ConfigError, InsufficientPositivePoints, RuntimeBudgetError
from .process import GWIModel, simulate_batch, stationary_samples, truncation_depth

log = logging.getLogger("gwimoments")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

# documented output schemas; d-dependent columns expand to name_1..name_d
SCHEMAS = {
    "simulate": ["generation", "mean_{j}", "se_{j}", "var_{j}", "extinct_fraction", "n_samples"],
    "stationary": ["alpha", "moment", "stderr", "moment_half", "shift_se", "classification",
                   "non_convergent", "n_samples", "depth", "mean_{j}", "exact_mean_{j}"],
    "decay": ["row", "alpha", "k", "m_hat", "stderr", "fitted_rate", "rate_lo", "rate_hi", "fit_r2", "rho"],
    "certify": ["alpha", "k", "bound", "m_hat", "stderr", "sound", "branch", "mode"],
    "tail": ["k_frac", "n_samples", "k", "hill", "ci_lo", "ci_hi", "k_cmp", "hill_blocks", "hill_full_k_cmp", "ratio",
             "light_tail"],
}


def columns(command: str, d: int) -> list:
    out = []
    for c in SCHEMAS[command]:
        if "{j}" in c:
            out += [c.format(j=j + 1) for j in range(d)]
        else:
            out.append(c)
    return out


class ResultTable:
    def __init__(self, cols):
        self.columns = list(cols)
        self.rows = []

    def add(self, **cells):
        missing = set(cells) - set(self.columns)
        if missing:
            raise KeyError(f"unknown columns {sorted(missing)}")
        self.rows.append([cells.get(c) for c in self.columns])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_csv_cell(v) for v in r])
        return buf.getvalue()

    def to_records(self) -> list:
        return [{c: _json_cell(v) for c, v in zip(self.columns, r)} for r in self.rows]


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


# ---------------------------------------------------------------------------
# subcommands


def build_model(cfg) -> GWIModel:
    return GWIModel(cfg.offspring_spec(), cfg.immigration)


def cmd_simulate(cfg, workers=None) -> ResultTable:
    model = build_model(cfg)
    d, G = cfg.d, cfg.k_max

    def run(rng, size):
        x = simulate_batch(model, G, size, rng)
        acc = parallel.MomentAccumulator((G + 1, d)).add(x)
        zeros = (x.sum(axis=2) == 0).sum(axis=0)
        return acc, zeros

    acc = parallel.MomentAccumulator((G + 1, d))
    zeros = np.zeros(G + 1, np.int64)
    for part, z in parallel.map_chunks(run, cfg.samples, cfg.seed, workers, tag=10):
        acc.merge(part)
        zeros += z
    mean, se, var = acc.mean(), acc.stderr(), acc.variance()
    t = ResultTable(columns("simulate", d))
    for g in range(G + 1):
        cells = {"generation": g, "extinct_fraction": float(zeros[g] / cfg.samples), "n_samples": cfg.samples}
        for j in range(d):
            cells[f"mean_{j + 1}"] = float(mean[g, j])
            cells[f"se_{j + 1}"] = float(se[g, j])
            cells[f"var_{j + 1}"] = float(var[g, j])
        t.add(**cells)
    return t


def _alpha_hint(model, cfg):
    if model.immigration_mean() is not None:
        return 1.0
    return min(a for a in cfg.alphas if a < 1) if any(a < 1 for a in cfg.alphas) else 1.0


def cmd_stationary(cfg, workers=None) -> ResultTable:
    """Per-alpha empirical E||Y||^alpha with a half-sample stability check.

    ``shift_se`` is |estimate(n) - estimate(n/2)| in units of the full-sample
    standard error. ``non_convergent`` is set when the shift exceeds 10 or the
    analytic classification is Infinite.
    """
    model = build_model(cfg)
    model.require_subcritical()
    hint = _alpha_hint(model, cfg)
    depth = truncation_depth(model, hint, cfg.eps)
    y = stationary_samples(model, cfg.samples, cfg.seed, hint, cfg.eps, workers)
    half = y[: cfg.samples // 2]
    means = y.mean(axis=0)
    eb = model.immigration_mean()
    exact = stationary_mean_exact(model) if eb is not None else np.full(cfg.d, np.nan)
    t = ResultTable(columns("stationary", cfg.d))
    for a in cfg.alphas:
        m, se = empirical_alpha_moment(y, a)
        mh, _ = empirical_alpha_moment(half, a)
        shift = abs(m - mh) / se if se > 0 else 0.0
        cls = classify_moment(model, a).classification
        cells = {
            "alpha": a, "moment": m, "stderr": se, "moment_half": mh, "shift_se": shift,
            "classification": cls, "non_convergent": bool(shift > 10.0 or cls == "Infinite"),
            "n_samples": cfg.samples, "depth": depth,
        }
        for j in range(cfg.d):
            cells[f"mean_{j + 1}"] = float(means[j])
            cells[f"exact_mean_{j + 1}"] = float(exact[j])
        t.add(**cells)
    return t


def cmd_decay(cfg, workers=None) -> ResultTable:
    """Per-(alpha, k) estimates of M_alpha(k) and a per-alpha summary with the fitted rate.

    Summary fit cells are left empty when fewer than the required number of
    estimates are positive (e.g. offspring that always die).
    """
    model = build_model(cfg)
    model.require_subcritical()
    r = model.spectral.r
    est = estimate_Mk_sequence(model, cfg.alphas, cfg.k_max, cfg.samples, cfg.seed, workers)
    ks = np.arange(cfg.k_max + 1)
    t = ResultTable(columns("decay", cfg.d))
    for a in cfg.alphas:
        means, ses = est[a]
        for k in ks:
            t.add(row="estimate", alpha=a, k=int(k), m_hat=float(means[k]), stderr=float(ses[k]))
        try:
            fit = fit_decay_rate(ks, means, ses, a, cfg.samples, k_min=r, period=r)
        except InsufficientPositivePoints as exc:
            log.warning("alpha = %g: no decay fit (%s)", a, exc)
            t.add(row="summary", alpha=a, rho=model.spectral.rho)
            continue
        t.add(row="summary", alpha=a, fitted_rate=fit.fitted_rate, rate_lo=fit.rate_ci[0],
              rate_hi=fit.rate_ci[1], fit_r2=fit.fit_r2, rho=model.spectral.rho)
    return t


def cmd_certify(cfg, workers=None):
    """Returns (table, reports): per-k bound vs estimate rows and text reports."""
    model = build_model(cfg)
    model.require_subcritical()
    budgets = Budgets(k_max_prime=cfg.cert_k_max_prime, n_samples=cfg.cert_samples, confidence=cfg.confidence,
                      lattice_budget=cfg.cert_lattice_budget, horizon=cfg.k_max, seed=cfg.seed, workers=workers)
    est = estimate_Mk_sequence(model, cfg.alphas, cfg.k_max, cfg.samples, cfg.seed, workers, tag=2)
    t = ResultTable(columns("certify", cfg.d))
    reports = []
    for a in cfg.alphas:
        cert = build_certificate(model, a, cfg.mu_bar if a >= 1 else None, budgets)
        reports.append(format_report(cert))
        means, ses = est[a]
        for k in range(cfg.k_max + 1):
            b = float(cert.per_k_bound[k])
            t.add(alpha=a, k=k, bound=b, m_hat=float(means[k]), stderr=float(ses[k]),
                  sound=bool(b >= means[k] - 3.0 * ses[k]), branch=cert.branch,
                  mode=cert.constants.estimation_mode)
        reports[-1] += f"\n  E||Y||^a bound (final) = {cert.Y_moment_bound!r}"
    return t, reports


def cmd_tail(cfg, workers=None) -> ResultTable:
    model = build_model(cfg)
    model.require_subcritical()
    if cfg.samples < 10**4:
        log.warning("tail diagnostics with fewer than 10^4 samples are unreliable")
    y = stationary_samples(model, cfg.samples, cfg.seed, _alpha_hint(model, cfg), cfg.eps, workers)
    norms = y.sum(axis=1).astype(float)
    t = ResultTable(columns("tail", cfg.d))
    for i, f in enumerate(cfg.k_fracs):
        rep = tail_report(norms, f, parallel.stream(cfg.seed, i, 20))
        h = rep["hill"]
        t.add(k_frac=f, n_samples=len(norms), k=h.order_stats_used, hill=h.hill_estimate, ci_lo=h.ci[0],
              ci_hi=h.ci[1], k_cmp=rep["k"], hill_blocks=rep["sub"], hill_full_k_cmp=rep["full"].hill_estimate,
              ratio=rep["ratio"], light_tail=rep["light_tail"])
    return t


COMMANDS = {
    "simulate": cmd_simulate,
    "stationary": cmd_stationary,
    "decay": cmd_decay,
    "certify": cmd_certify,
    "tail": cmd_tail,
}

HELP = {
    "simulate": "per-generation mean, variance and extinct fraction from the empty state",
    "stationary": "stationary alpha-moments with a half-depth convergence check",
    "decay": "M_alpha(k) estimates and the fitted geometric decay rate",
    "certify": "certified upper bounds on E||Y||^alpha checked against simulation",
    "tail": "Hill tail index and a block-stability heavy-tail check",
}


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gwimoments", description="Subcritical multitype GW processes with immigration")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=HELP[name])
        s.add_argument("--config", required=True, metavar="PATH", help="YAML experiment config")
        s.add_argument("--seed", type=int, help="master seed (overrides config)")
        s.add_argument("--samples", type=int, help="Monte Carlo sample count (overrides config)")
        s.add_argument("--out", metavar="PATH", help="output file (default stdout)")
        s.add_argument("--format", choices=["csv", "json"], help="output format (default from config, else csv)")
        s.add_argument("--workers", type=int, help="worker threads; never changes results "
                                                   "(default $GWIMOMENTS_WORKERS or 1)")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "certify":
            s.add_argument("--report", metavar="PATH", help="write the text report here instead of stderr")
    return p


def render(table: ResultTable, fmt: str, command: str, extra=None) -> str:
    if fmt == "csv":
        return table.to_csv()
    doc = {"command": command, "columns": table.columns, "rows": table.to_records()}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def run(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = cfgmod.load_config(args.config)
        cfg = cfgmod.replace(cfg, seed=args.seed, samples=args.samples, format=args.format)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("must be >= 1", "--workers")
        fn = COMMANDS[args.command]
        extra = None
        if args.command == "certify":
            table, reports = fn(cfg, args.workers)
            text = "\n\n".join(reports) + "\n"
            if args.report:
                with open(args.report, "w", encoding="utf-8") as fh:
                    fh.write(text)
            else:
                sys.stderr.write(text)
            extra = {"reports": reports}
        else:
            table = fn(cfg, args.workers)
        out = render(table, cfg.format, args.command, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # parameter combinations rejected by the numerics (e.g. k_frac too small for the sample)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeBudgetError as exc:
        print(f"runtime error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
