"""
Command-line interface.

Subcommands: constants, bounds, filter, t3, diagnose, simulate.  All file
outputs are collected in memory and written atomically at the end of a
successful run, so validation failures (exit status 2, with a JSON error
object on stderr) never leave partial artifacts behind.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import bounds as bnd
from . import filtering, simulator, whitening as wh
from .covmodel import CovarianceMatrix, ScenarioSpec, eigendecompose, leading_eigvec_cdf
from .seqstep import fdp_hat_path


class CliError(Exception):
    def __init__(self, message, **detail):
        super().__init__(message)
        self.detail = detail


def _fmt(x):
    """Shortest round-trip numeric formatting for CSV cells."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _load_matrix(path):
    try:
        rows = []
        with open(path) as fh:
            for i, line in enumerate(fh):
                if not line.strip():
                    continue
                try:
                    rows.append([float(v) for v in line.split(",")])
                except ValueError:
                    raise CliError("malformed CSV value", path=path, row=i + 1)
        mat = np.array(rows)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise CliError("matrix file is not square", path=path)
        return CovarianceMatrix(mat)
    except OSError as e:
        raise CliError(str(e), path=path)
    except ValueError as e:
        raise CliError(str(e), path=path)


def _load_vector(path):
    try:
        with open(path) as fh:
            vals = []
            for i, line in enumerate(fh):
                if not line.strip():
                    continue
                try:
                    vals.append(float(line.strip()))
                except ValueError:
                    raise CliError("malformed vector value", path=path, row=i + 1)
        return np.array(vals)
    except OSError as e:
        raise CliError(str(e), path=path)


def _parse_alphas(values):
    alphas = []
    for v in values:
        for part in str(v).split(","):
            a = float(part)
            if not 0 < a < 1:
                raise CliError("alpha must lie in (0, 1)", alpha=a)
            alphas.append(a)
    return alphas


def _resolve_delta(arg, sigma, inflate=0.0):
    if arg is None or arg == "equi":
        return wh.validate_delta(sigma, wh.make_equi_delta(sigma, inflate=inflate))
    if arg.startswith("file:"):
        return wh.validate_delta(sigma, wh.WhiteningMatrix(_load_vector(arg[5:])))
    raise CliError("--delta must be 'equi' or 'file:<path>'", delta=arg)


def _threads(args):
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("WHITEOUT_THREADS")
    return int(env) if env else 1


def _write_outputs(out_dir, artifacts):
    os.makedirs(out_dir, exist_ok=True)
    for name, text in artifacts.items():
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(text)


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_constants(args):
    alphas = _parse_alphas(args.alpha or ["0.05,0.1,0.2"])
    table = []
    for a in alphas:
        bc = bnd.starred_constants(a, args.delta_value)
        table.append({
            "alpha": a, "delta": bc.delta, "c1": bc.c1, "c2": bc.c2,
            "c3": bc.c3,
            "c1_star_lk": bc.c1_star["k"], "c2_star_lk": bc.c2_star["k"],
            "c1_star_l1": bc.c1_star["1"], "c2_star_l1": bc.c2_star["1"],
        })
    text = _json({"constants": table})
    sys.stdout.write(text)
    if args.out:
        _write_outputs(args.out, {"constants.json": text})
    return 0


def cmd_bounds(args):
    sigma = _load_matrix(args.sigma)
    beta = _load_vector(args.beta)
    if beta.shape[0] != sigma.dim:
        raise CliError("beta length disagrees with Sigma dimension")
    alphas = _parse_alphas(args.alpha or ["0.05"])
    b = bnd.delta_order_lower_bounds(sigma.eigen(), top_l=args.top_l)
    beta_sq = np.sort(beta ** 2)[::-1]
    reports = []
    for a in alphas:
        if args.pi1 is not None:
            rep = bnd.theorem_random_bound(beta_sq, args.sigma2, b, a,
                                           args.pi1, mode=args.mode,
                                           delta=args.delta_value)
        else:
            rep = bnd.theorem_main_bound(beta_sq, args.sigma2, b, a,
                                         mode=args.mode, delta=args.delta_value)
        reports.append({"alpha": a, "k": rep.k,
                        "ceiling": None if np.isinf(rep.ceiling) else rep.ceiling,
                        "mode": rep.mode})
    csv = "k,b_k\n" + "".join(
        "%d,%s\n" % (i + 1, _fmt(v)) for i, v in enumerate(b.b))
    text = _json({"reports": reports, "sigma2": args.sigma2})
    sys.stdout.write(text)
    _write_outputs(args.out, {"bound_report.json": text, "b_k.csv": csv})
    return 0


def cmd_filter(args):
    sigma = _load_matrix(args.sigma)
    beta_hat = _load_vector(args.beta_hat)
    if beta_hat.shape[0] != sigma.dim:
        raise CliError("beta_hat length disagrees with Sigma dimension")
    if (args.sigma2 is None) == (args.sigma_hat is None):
        raise CliError("provide exactly one of --sigma2 or --sigma-hat")
    if args.sigma_hat is not None and args.n is None:
        raise CliError("--sigma-hat requires --n")
    beta = _load_vector(args.beta) if args.beta else None
    if args.strategy == "oracle" and beta is None:
        raise CliError("--strategy oracle requires --beta")
    delta = _resolve_delta(args.delta, sigma,
                           inflate=1e-6 if args.strategy == "lasso" else 0.0)
    rng = np.random.default_rng(args.seed)
    result = filtering.run_whitening_filter(
        beta_hat, sigma, delta, _parse_alphas(args.alpha or ["0.2"])[0], rng,
        sigma2=args.sigma2, sigma_hat_sq=args.sigma_hat, n=args.n,
        strategy=args.strategy, beta=beta)

    order = result.ordering.order
    path = result.seqstep.fdp_hat_path
    rej = set(int(i) for i in result.rejections)
    lines = ["rank,index,W,W_star,psi,p_tilde,fdp_hat,rejected,eta_if_oracle"]
    w = result.w_stats.w if result.w_stats is not None else None
    ws = result.w_stats.w_star if result.w_stats is not None else None
    for pos, idx in enumerate(order):
        lines.append(",".join([
            str(pos + 1), str(int(idx)),
            _fmt(w[idx]) if w is not None else "",
            _fmt(ws[idx]) if ws is not None else "",
            _fmt(result.ordering.psi[idx]),
            _fmt(result.pvalues.p_tilde[pos]),
            _fmt(path[pos]) if np.isfinite(path[pos]) else "inf",
            "1" if int(idx) in rej else "0",
            _fmt(result.eta.eta[idx]) if result.eta is not None else "",
        ]))
    csv = "\n".join(lines) + "\n"
    summary = _json({
        "rejections": [int(i) for i in result.rejections],
        "directions": [int(v) for v in result.directions],
        "k_hat": int(result.seqstep.k_hat),
        "diagnostics": result.diagnostics,
    })
    sys.stdout.write(summary)
    _write_outputs(args.out, {"filter.csv": csv, "summary.json": summary})
    return 0


def cmd_t3(args):
    sigma = _load_matrix(args.sigma)
    beta = _load_vector(args.beta)
    alphas = _parse_alphas(args.alpha or ["0.05"])
    b = bnd.delta_order_lower_bounds(sigma.eigen(), top_l=args.top_l)
    beta_sq = np.sort(beta ** 2)[::-1]
    d1 = args.d1 if args.d1 is not None else max(int(np.count_nonzero(beta)), 1)
    out = []
    for a in alphas:
        rng = np.random.default_rng(args.seed)
        res = simulator.t3_knockoff_star(b, beta_sq, args.sigma2, d1, a,
                                         args.replicates, rng)
        out.append({"alpha": a, "tpr": res.tpr, "tpr_mcse": res.tpr_mcse,
                    "mean_rejections": res.mean_rejections,
                    "rejections_mcse": res.rejections_mcse})
    text = _json({"t3": out, "d1": d1, "replicates": args.replicates})
    sys.stdout.write(text)
    if args.out:
        _write_outputs(args.out, {"t3.json": text})
    return 0


def cmd_diagnose(args):
    sigma = _load_matrix(args.sigma)
    alpha = _parse_alphas(args.alpha or ["0.05"])[0]
    delta = wh.validate_delta(sigma, wh.make_equi_delta(sigma))
    report = bnd.delta_diagnostic(delta, alpha)
    b = bnd.delta_order_lower_bounds(sigma.eigen())
    dec = sigma.eigen()
    fd = {c: leading_eigvec_cdf(dec, c) for c in (0.5, 1.0, 2.0, 5.0)}
    viable = report["counts_below"][6.0] > 0
    text = _json({
        "alpha": alpha,
        "delta_min": report["delta_min"], "delta_max": report["delta_max"],
        "counts_below": {str(k): v for k, v in report["counts_below"].items()},
        "leading_eigvec_cdf": {str(k): v for k, v in fd.items()},
        "lambda_1": dec.eigenvalues[0],
        "verdict": "knockoffs viable" if viable
                   else "warning: all Delta_jj large; expect severe power loss",
    })
    csv = "j,delta_jj,snr_threshold,b_j\n" + "".join(
        "%d,%s,%s,%s\n" % (j + 1, _fmt(delta.diag[j]),
                           _fmt(report["snr_thresholds"][j]), _fmt(b.b[j]))
        for j in range(sigma.dim))
    sys.stdout.write(text)
    _write_outputs(args.out, {"diagnose.json": text, "diagnose.csv": csv})
    return 0


def cmd_simulate(args):
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise CliError(str(e), path=args.config)
    except json.JSONDecodeError as e:
        raise CliError("malformed config JSON: %s" % e, path=args.config)
    scen = raw.get("scenario", {})
    if "lambda" in scen:
        scen["lam"] = scen.pop("lambda")
    try:
        spec = ScenarioSpec(**scen)
        config = simulator.MonteCarloConfig(
            scenario=spec,
            replicates=int(raw.get("replicates", 100)),
            alphas=_parse_alphas(args.alpha or raw.get("alphas", [0.2])),
            methods=list(raw.get("methods", ["oracle-knockoff*", "bh"])),
            seed=args.seed if args.seed is not None else int(raw.get("seed", 0)),
        )
    except (TypeError, ValueError) as e:
        raise CliError("invalid scenario config: %s" % e, path=args.config)
    summary = simulator.run_scenario(config, threads=_threads(args))
    lines = ["replicate,method,alpha,R,V,FDP,TPP"]
    for r, method, alpha, R, V, fdp, tpp in summary.replicate_rows:
        lines.append(",".join([str(r), method, _fmt(alpha), _fmt(R),
                               _fmt(V), _fmt(fdp), _fmt(tpp)]))
    csv = "\n".join(lines) + "\n"
    table = {"%s@%s" % (m, _fmt(a)): v for (m, a), v in summary.table.items()}
    text = _json({"summary": table, "replicates": config.replicates,
                  "seed": config.seed})
    sys.stdout.write(text)
    _write_outputs(args.out, {"summary.json": text, "replicates.csv": csv})
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="whiteout",
        description="Whitening knockoff filter, power ceilings, and simulators")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--alpha", action="append",
                       help="target FDR level(s); repeatable or comma separated")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", required=out_required,
                       help="output directory for artifacts")

    p = sub.add_parser("constants", help="rejection-ceiling constants table")
    common(p, out_required=False)
    p.add_argument("--delta-value", type=float, default=None,
                   help="override the default delta = sqrt(alpha) - alpha")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("bounds", help="b_k sequence and rejection ceiling")
    common(p)
    p.add_argument("--sigma", required=True, help="Sigma as headerless CSV")
    p.add_argument("--beta", required=True, help="coefficient vector file")
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--pi1", type=float, default=None)
    p.add_argument("--mode", choices=["k", "1"], default="k")
    p.add_argument("--top-l", type=int, default=None)
    p.add_argument("--delta-value", type=float, default=None)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("filter", help="run the whitening filter on (beta_hat, Sigma)")
    common(p)
    p.add_argument("--beta-hat", required=True)
    p.add_argument("--sigma", required=True)
    p.add_argument("--sigma2", type=float, default=None)
    p.add_argument("--sigma-hat", type=float, default=None,
                   help="variance estimate for carving mode")
    p.add_argument("--n", type=int, default=None,
                   help="sample size behind --sigma-hat")
    p.add_argument("--delta", default="equi", help="equi | file:<path>")
    p.add_argument("--strategy", choices=["oracle", "lasso"], default="lasso")
    p.add_argument("--beta", default=None, help="true beta (oracle strategy)")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("t3", help="oracle-bound Monte Carlo on b_k(Sigma)")
    common(p, out_required=False)
    p.add_argument("--sigma", required=True)
    p.add_argument("--beta", required=True)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--d1", type=int, default=None)
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--top-l", type=int, default=None)
    p.set_defaults(func=cmd_t3)

    p = sub.add_parser("diagnose", help="whitening-cost diagnostics for Sigma")
    common(p)
    p.add_argument("--sigma", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("simulate", help="scenario power study from a JSON config")
    common(p)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = 0
        return args.func(args)
    except CliError as e:
        sys.stderr.write(_json({"error": str(e), **e.detail}))
        return 2
    except (ValueError, np.linalg.LinAlgError) as e:
        sys.stderr.write(_json({"error": str(e)}))
        return 2


if __name__ == "__main__":
    sys.exit(main())
