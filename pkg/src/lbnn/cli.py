"""Command-line front end.

Subcommands:

* ``gen-data``: synthetic dataset files plus a manifest.
* ``predict``: posterior predictive moments (finite or infinite beta).
* ``kernel``: posterior-mean feature kernel, Monte Carlo or any closed
  asymptotic regime, plus a width-sweep convergence table.
* ``verify``: cross-checks the scale-mixture estimators against the
  weight-space oracles and reports z-scores.

Every command takes ``--config FILE`` (JSON) with flags overriding the
file. Seeds are mandatory everywhere; no wall-clock seeding exists, so a
fixed configuration reproduces its outputs byte for byte at any worker
count. Exit codes: 0 ok, 1 configuration error, 2 estimator diagnostic,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .asymptotics import (care_li_sompolinsky, kernel_aitchison,
                          kernel_large_p, kernel_li_sompolinsky, kernel_wide)
from .datasets import MODES, generate_dataset
from .exceptions import EstimatorDiagnosticError
from .feature_kernel import (REGIMES, KernelEstimate, mean_kernel,
                             zt_mean_kernel)
from .matrix_io import read_matrix, write_matrix
from .model import Dataset, NetworkShape, build_gram_set
from .oracle import (empirical_moments, gibbs_posterior, gp_closed_form,
                     quadrature_scalar, quadrature_scalar_kernel)
from .posterior import predictive_moments
from .zero_temp import zt_predictive_moments, zt_scale_moments

_DEFAULTS = {
    "gen-data": {
        "mode": "teacher", "p": 4, "phat": 4, "n0": 8, "nd": 1,
        "noise": 0.1, "seed": 0, "format": "csv", "out_dir": None,
    },
    "predict": {
        "data": None, "widths": None, "depth": None, "beta": 1.0,
        "samples": 2000, "seed": 0, "ess_floor": 10.0, "workers": None,
        "out_dir": None, "format": "csv",
    },
    "kernel": {
        "data": None, "widths": None, "depth": None, "beta": 1.0,
        "samples": 2000, "seed": 0, "ess_floor": 10.0, "workers": None,
        "regime": "monte_carlo", "alpha": 0.0, "gamma": None,
        "sweep_n1": None, "out_dir": None, "format": "csv",
    },
    "verify": {
        "p": 2, "phat": 2, "n0": 3, "n1": 5, "nd": 1, "depth": 2,
        "beta": 1.0, "beta_gibbs": None, "samples": 20000, "sweeps": 6000,
        "burn_in": 600, "seed": 0, "workers": None, "out_dir": None,
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved parameters of one CLI invocation."""

    command: str
    params: dict

    def to_json(self) -> str:
        return json.dumps({"command": self.command, **self.params},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        obj = json.loads(text)
        command = obj.pop("command")
        return cls(command=command, params=obj)


def resolve_config(command: str, cli_values: dict, config_path: str | None) -> RunConfig:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    if command not in _DEFAULTS:
        raise ValueError(f"unknown command {command!r}")
    params = dict(_DEFAULTS[command])
    if config_path is not None:
        with open(config_path, "r", encoding="ascii") as fh:
            file_obj = json.load(fh)
        file_obj.pop("command", None)
        unknown = set(file_obj) - set(params)
        if unknown:
            raise ValueError(f"config keys {sorted(unknown)} are not valid for "
                             f"{command}")
        params.update(file_obj)
    for key, value in cli_values.items():
        if key in params and value is not None:
            params[key] = value
    return RunConfig(command=command, params=params)


def _resolve_workers(value) -> int:
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("LBNN_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _parse_widths(params: dict) -> tuple:
    raw = params.get("widths")
    if raw is None:
        raise ValueError("--widths is required (comma-separated, n0 first)")
    if isinstance(raw, str):
        widths = tuple(int(tok) for tok in raw.split(",") if tok.strip())
    else:
        widths = tuple(int(w) for w in raw)
    depth = params.get("depth")
    if depth is not None and len(widths) - 1 != int(depth):
        raise ValueError(
            f"--depth {depth} contradicts --widths (depth {len(widths) - 1})"
        )
    return widths


def _parse_beta(value) -> float:
    beta = float(value)
    if math.isnan(beta) or beta < 0:
        raise ValueError("beta must be non-negative or 'inf'")
    if math.isfinite(beta) and beta > 1e6:
        print(
            f"warning: beta={beta:g} is finite but extreme; importance "
            "weights may degenerate (consider --beta inf)",
            file=sys.stderr,
        )
    return beta


def _load_dataset(params: dict) -> Dataset:
    root = params.get("data")
    if root is None:
        raise ValueError("--data DIR is required")
    mats = {}
    for name in ("X", "Y", "Xhat", "Yhat"):
        for ext in (".csv", ".json"):
            path = os.path.join(root, name + ext)
            if os.path.exists(path):
                mats[name] = read_matrix(path)
                break
    for required in ("X", "Y"):
        if required not in mats:
            raise ValueError(f"dataset directory {root} is missing {required}.csv/.json")
    if "Xhat" not in mats:
        mats["Xhat"] = mats["X"].copy()
    return Dataset(X=mats["X"], Y=mats["Y"], Xhat=mats["Xhat"],
                   Yhat=mats.get("Yhat"))


def _ensure_out_dir(params: dict) -> str:
    out = params.get("out_dir")
    if out is None:
        raise ValueError("--out-dir is required")
    os.makedirs(out, exist_ok=True)
    return out


def _dump_json(obj: dict, path: str) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_data(cfg: RunConfig) -> int:
    params = cfg.params
    out = _ensure_out_dir(params)
    fmt = params["format"]
    if fmt not in ("csv", "json"):
        raise ValueError("--format must be csv or json")
    ds = generate_dataset(params["mode"], int(params["p"]), int(params["phat"]),
                          int(params["n0"]), int(params["nd"]),
                          int(params["seed"]), noise=float(params["noise"]))
    files = {}
    for name, mat in (("X", ds.X), ("Y", ds.Y), ("Xhat", ds.Xhat),
                      ("Yhat", ds.Yhat)):
        if mat is None:
            continue
        fname = f"{name}.{fmt}"
        write_matrix(os.path.join(out, fname), mat)
        files[name] = fname
    manifest = {
        "mode": params["mode"], "p": int(params["p"]), "phat": int(params["phat"]),
        "n0": int(params["n0"]), "nd": int(params["nd"]),
        "noise": float(params["noise"]), "seed": int(params["seed"]),
        "format": fmt, "files": files,
    }
    _dump_json(manifest, os.path.join(out, "manifest.json"))
    print(f"wrote dataset ({params['mode']}, p={params['p']}) to {out}")
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    params = cfg.params
    out = _ensure_out_dir(params)
    ds = _load_dataset(params)
    widths = _parse_widths(params)
    beta = _parse_beta(params["beta"])
    shape = NetworkShape(widths, beta=beta)
    seed = int(params["seed"])
    samples = int(params["samples"])
    workers = _resolve_workers(params.get("workers"))
    if shape.zero_temperature:
        moments = zt_predictive_moments(ds, shape, samples, seed)
    else:
        moments = predictive_moments(ds, shape, samples, seed, workers=workers,
                                     ess_floor=float(params["ess_floor"]))
    payload = moments.to_dict()
    payload["beta"] = "inf" if shape.zero_temperature else beta
    payload["widths"] = list(widths)
    _dump_json(payload, os.path.join(out, "moments.json"))
    for name, mat in (("mean", moments.mean), ("cov", moments.cov),
                      ("mean_se", moments.mean_se), ("cov_se", moments.cov_se)):
        write_matrix(os.path.join(out, f"{name}.csv"), mat)
    print(f"predictive moments written to {out} "
          f"(ess={_fmt_ess(moments.ess)}, samples={moments.num_samples})")
    return 0


def _fmt_ess(value: float) -> str:
    return "exact" if not math.isfinite(value) else format(value, ".1f")


def _kernel_from_regime(cfg: RunConfig, ds: Dataset, grams) -> KernelEstimate:
    params = cfg.params
    regime = params["regime"]
    seed = int(params["seed"])
    samples = int(params["samples"])
    workers = _resolve_workers(params.get("workers"))

    if regime == "monte_carlo":
        widths = _parse_widths(params)
        shape = NetworkShape(widths, beta=_parse_beta(params["beta"]))
        est = mean_kernel(ds, shape, samples, seed, workers=workers,
                          ess_floor=float(params["ess_floor"]))
        return est, {}
    if regime == "zero_temp":
        widths = _parse_widths(params)
        shape = NetworkShape(widths, beta=math.inf)
        moments = zt_scale_moments(ds, shape, samples, seed)
        est = zt_mean_kernel(ds, shape, moments)
        est.seed = seed
        return est, {"scale_chain": moments.diagnostics}
    if regime == "wide":
        gamma = params.get("gamma")
        if gamma is None:
            raise ValueError("--gamma is required for the wide regime")
        kernel = kernel_wide(grams, float(gamma), _parse_beta(params["beta"]))
        return KernelEstimate(kernel=kernel, se=np.zeros_like(kernel),
                              ess=math.inf, regime="wide"), {}
    if regime == "large_p":
        widths = _parse_widths(params)
        kernel = kernel_large_p(grams, ds.Y, int(widths[1]))
        return KernelEstimate(kernel=kernel, se=np.zeros_like(kernel),
                              ess=math.inf, regime="large_p"), {}
    if regime == "li_sompolinsky":
        gamma = params.get("gamma")
        if gamma is None:
            raise ValueError("--gamma is required for the li_sompolinsky regime")
        alpha = float(params["alpha"])
        kernel = kernel_li_sompolinsky(grams, alpha, float(gamma))
        residual = None
        if params.get("widths") is not None:
            widths = _parse_widths(params)
            _, residual = care_li_sompolinsky(grams, ds.Y, int(widths[1]), alpha)
        return KernelEstimate(kernel=kernel, se=np.zeros_like(kernel),
                              ess=math.inf, regime="li_sompolinsky",
                              residual=residual), {}
    if regime == "aitchison":
        gamma = params.get("gamma")
        if gamma is None:
            raise ValueError("--gamma is required for the aitchison regime")
        kernel, residual = kernel_aitchison(grams, float(gamma))
        return KernelEstimate(kernel=kernel, se=np.zeros_like(kernel),
                              ess=math.inf, regime="aitchison",
                              residual=residual), {}
    raise ValueError(f"--regime must be one of {REGIMES}")


def cmd_kernel(cfg: RunConfig) -> int:
    params = cfg.params
    out = _ensure_out_dir(params)
    ds = _load_dataset(params)
    grams = build_gram_set(ds)

    if params.get("sweep_n1") is not None:
        return _kernel_sweep(cfg, ds, grams, out)

    est, extra = _kernel_from_regime(cfg, ds, grams)
    payload = est.to_dict()
    payload["gamma"] = params.get("gamma")
    payload["alpha"] = params.get("alpha")
    payload.update(extra)
    _dump_json(payload, os.path.join(out, "kernel.json"))
    write_matrix(os.path.join(out, "kernel.csv"), est.kernel)
    write_matrix(os.path.join(out, "kernel_se.csv"), est.se)
    residual = "n/a" if est.residual is None else format(est.residual, ".3e")
    print(f"kernel ({est.regime}) written to {out} "
          f"(ess={_fmt_ess(est.ess)}, residual={residual})")
    return 0


def _kernel_sweep(cfg: RunConfig, ds: Dataset, grams, out: str) -> int:
    """Monte Carlo vs wide-regime convergence table over hidden widths."""
    params = cfg.params
    if params["regime"] != "monte_carlo":
        raise ValueError("--sweep-n1 applies to the monte_carlo regime")
    raw = params["sweep_n1"]
    n1_values = ([int(tok) for tok in raw.split(",") if tok.strip()]
                 if isinstance(raw, str) else [int(v) for v in raw])
    if not n1_values:
        raise ValueError("--sweep-n1 must list at least one width")
    widths = _parse_widths(params)
    if len(widths) != 3:
        raise ValueError("--sweep-n1 needs a depth-2 --widths (n0,n1,nd)")
    beta = _parse_beta(params["beta"])
    seed = int(params["seed"])
    samples = int(params["samples"])
    workers = _resolve_workers(params.get("workers"))
    rows = []
    for n1 in n1_values:
        shape = NetworkShape((widths[0], n1, widths[2]), beta=beta)
        est = mean_kernel(ds, shape, samples, seed, workers=workers,
                          ess_floor=float(params["ess_floor"]))
        reference = kernel_wide(grams, shape.nd / n1, beta)
        denom = float(np.linalg.norm(reference - grams.gxx))
        rel = float(np.linalg.norm(est.kernel - reference)) / denom
        rows.append((n1, rel, est.ess))
    log_n = np.log([r[0] for r in rows])
    log_e = np.log([r[1] for r in rows])
    slope = float(np.polyfit(log_n, log_e, 1)[0]) if len(rows) > 1 else math.nan
    payload = {
        "beta": beta, "samples": samples, "seed": seed,
        "rows": [{"n1": n1, "rel_error": rel, "ess": ess}
                 for n1, rel, ess in rows],
        "slope": None if math.isnan(slope) else slope,
    }
    _dump_json(payload, os.path.join(out, "sweep.json"))
    with open(os.path.join(out, "sweep.csv"), "w", encoding="ascii",
              newline="\n") as fh:
        fh.write("n1,rel_error\n")
        for n1, rel, _ in rows:
            fh.write(f"{n1},{format(rel, '.17g')}\n")
    print(f"width sweep written to {out} (slope="
          + ("n/a" if math.isnan(slope) else format(slope, ".3f")) + ")")
    return 0


# ---------------------------------------------------------------------------
# Cross-oracle verification
# ---------------------------------------------------------------------------


def _z_scores(a, se_a, b, se_b) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    se = np.hypot(np.asarray(se_a, dtype=float).reshape(-1),
                  np.asarray(se_b, dtype=float).reshape(-1))
    scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    z = np.empty_like(a)
    exact = se == 0
    z[~exact] = np.abs(a[~exact] - b[~exact]) / se[~exact]
    z[exact] = np.where(np.abs(a[exact] - b[exact]) <= 1e-9 * scale, 0.0, np.inf)
    return z


def cmd_verify(cfg: RunConfig) -> int:
    params = cfg.params
    out = _ensure_out_dir(params)
    p, phat, n0 = int(params["p"]), int(params["phat"]), int(params["n0"])
    nd, depth = int(params["nd"]), int(params["depth"])
    if p > 8 or nd > 4:
        raise ValueError("verification instances are capped at p <= 8, nd <= 4")
    if depth not in (1, 2):
        raise ValueError("verification supports depth 1 or 2")
    beta = _parse_beta(params["beta"])
    if not (0 < beta < math.inf):
        raise ValueError("verification needs a finite positive beta")
    seed = int(params["seed"])
    samples = int(params["samples"])
    workers = _resolve_workers(params.get("workers"))
    widths = (n0, nd) if depth == 1 else (n0, int(params["n1"]), nd)
    shape = NetworkShape(widths, beta=beta)
    beta_gibbs = params.get("beta_gibbs")
    shape_gibbs = shape if beta_gibbs is None else NetworkShape(
        widths, beta=_parse_beta(beta_gibbs))

    ds = generate_dataset("teacher", p, phat, n0, nd, seed)
    from .feature_kernel import mean_kernel as mc_kernel

    snis = predictive_moments(ds, shape, samples, seed + 1, workers=workers)
    states = gibbs_posterior(ds, shape_gibbs, int(params["sweeps"]),
                             int(params["burn_in"]), seed + 2)
    gibbs, gibbs_kernel = empirical_moments(states, ds)
    # the first-layer feature kernel needs a hidden layer to exist
    snis_kernel = (mc_kernel(ds, shape, samples, seed + 1, workers=workers)
                   if depth >= 2 else None)
    if depth < 2:
        gibbs_kernel = None

    arms = {"snis": (snis, snis_kernel), "gibbs": (gibbs, gibbs_kernel)}
    if depth == 2 and nd == 1:
        quad = quadrature_scalar(ds, shape)
        quad_kernel = KernelEstimate(
            kernel=quadrature_scalar_kernel(ds, shape),
            se=np.zeros((p, p)), ess=math.inf, regime="monte_carlo")
        arms["quadrature"] = (quad, quad_kernel)
    elif depth == 1:
        exact = gp_closed_form(ds, beta)
        arms["exact_gp"] = (exact, None)

    comparisons = []
    names = sorted(arms)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            ma, ka = arms[a]
            mb, kb = arms[b]
            quantities = {
                "mean": (ma.mean, ma.mean_se, mb.mean, mb.mean_se),
                "cov": (ma.cov, ma.cov_se, mb.cov, mb.cov_se),
            }
            if ka is not None and kb is not None:
                quantities["kernel"] = (ka.kernel, ka.se, kb.kernel, kb.se)
            for qty, (va, sa, vb, sb) in quantities.items():
                z = _z_scores(va, sa, vb, sb)
                comparisons.append({
                    "pair": f"{a} vs {b}", "quantity": qty,
                    "max_abs_z": float(np.max(z)),
                    "pass": bool(np.max(z) <= 3.0),
                })

    all_pass = all(c["pass"] for c in comparisons)
    payload = {
        "instance": {"p": p, "phat": phat, "n0": n0, "nd": nd,
                     "depth": depth, "widths": list(widths), "beta": beta,
                     "samples": samples, "sweeps": int(params["sweeps"]),
                     "seed": seed},
        "comparisons": comparisons,
        "pass": all_pass,
    }
    _dump_json(payload, os.path.join(out, "verify.json"))
    header = f"{'pair':24s} {'quantity':8s} {'max|z|':>10s}  result"
    print(header)
    print("-" * len(header))
    for c in comparisons:
        print(f"{c['pair']:24s} {c['quantity']:8s} {c['max_abs_z']:10.3f}  "
              + ("pass" if c["pass"] else "FAIL"))
    print(("all comparisons pass" if all_pass else "verification FAILED")
          + f"; details in {os.path.join(out, 'verify.json')}")
    return 0 if all_pass else 3


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lbnn",
        description="Posterior predictives and feature kernels for finite "
                    "deep linear Bayesian neural networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, *, data=False, model=False, sampling=False):
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--out-dir", dest="out_dir", help="output directory")
        if data:
            sp.add_argument("--data", help="dataset directory (X/Y/Xhat files)")
        if model:
            sp.add_argument("--widths", help="comma-separated layer widths, n0 first")
            sp.add_argument("--depth", type=int, help="network depth (cross-check)")
            sp.add_argument("--beta", help="inverse temperature, or 'inf'")
        if sampling:
            sp.add_argument("--samples", type=int, help="Monte Carlo sample count")
            sp.add_argument("--seed", type=int, help="master seed (mandatory, no clock seeding)")
            sp.add_argument("--ess-floor", dest="ess_floor", type=float,
                            help="minimum effective sample size")
            sp.add_argument("--workers", type=int,
                            help="worker threads (default: LBNN_WORKERS or CPU count)")

    sp = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(sp)
    sp.add_argument("--mode", choices=MODES)
    sp.add_argument("--p", type=int, help="training examples")
    sp.add_argument("--phat", type=int, help="test examples")
    sp.add_argument("--n0", type=int, help="input dimension")
    sp.add_argument("--nd", type=int, help="output dimension")
    sp.add_argument("--noise", type=float, help="target noise (noisy mode)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--format", choices=("csv", "json"), help="matrix file format")

    sp = sub.add_parser("predict", help="posterior predictive moments")
    common(sp, data=True, model=True, sampling=True)
    sp.add_argument("--format", choices=("csv", "json"))

    sp = sub.add_parser("kernel", help="posterior-mean feature kernel")
    common(sp, data=True, model=True, sampling=True)
    sp.add_argument("--regime", choices=REGIMES)
    sp.add_argument("--alpha", type=float, help="ratio p/n for li_sompolinsky")
    sp.add_argument("--gamma", type=float, help="ratio nd/n for closed-form regimes")
    sp.add_argument("--sweep-n1", dest="sweep_n1",
                    help="comma-separated hidden widths for a convergence table")
    sp.add_argument("--format", choices=("csv", "json"))

    sp = sub.add_parser("verify", help="cross-check estimators against oracles")
    common(sp)
    sp.add_argument("--p", type=int)
    sp.add_argument("--phat", type=int)
    sp.add_argument("--n0", type=int)
    sp.add_argument("--n1", type=int)
    sp.add_argument("--nd", type=int)
    sp.add_argument("--depth", type=int, choices=(1, 2))
    sp.add_argument("--beta")
    sp.add_argument("--beta-gibbs", dest="beta_gibbs",
                    help="override the Gibbs arm's beta (negative control)")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--sweeps", type=int)
    sp.add_argument("--burn-in", dest="burn_in", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    return parser


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "predict": cmd_predict,
    "kernel": cmd_kernel,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    try:
        cfg = resolve_config(command, args, config_path)
        return _HANDLERS[command](cfg)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EstimatorDiagnosticError as exc:
        print(f"estimator diagnostic: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
