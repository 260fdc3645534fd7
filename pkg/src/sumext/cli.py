"""Command-line front end.

    sumext normalize DATA          normalized atoms and frame
    sumext extend DATA             build T, report M, the oracle floor and samples of Tf
    sumext trace DATA              same, for data whose weights are all infinite
    sumext norm DATA               oracle value, exact spline path against IRLS
    sumext kcurve DATA             CSV of (t, K(t))
    sumext audit REPORT            re-check the geometry and ledger of an extend report

Norms in reports are given in the units of the input data.  Internally everything is
computed on the normalized measure, where p-th powers carry the factor
frame.weight_factor; reports divide it back out.
"""

from __future__ import annotations

import json
import logging
import math
import sys

import click
import numpy as np

from .config import Config, ConfigError
from .dyadic import CZTree, geometry_audit
from .measures import Box, InputError, normalize, read_atoms
from .norms import k_curve, k_curve_csv, overlap_audit
from .oracle import InfeasibleError, ToleranceError, j_norm

log = logging.getLogger("sumext")

# Largest Omega support overlap accepted by `audit`, per dimension.  Measured maxima on
# the desk suite are far below this; see the decisions ledger.
OVERLAP_BOUND = {1: 24, 2: 96}


def _dump(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
    _write(text, out)


def _write(text, out):
    if out is None or out == "-":
        click.echo(text, nl=False)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _finite(x):
    """JSON-friendly float: inf and nan become strings."""
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


def run_options(fn):
    opts = [
        click.option("--m", "m", type=int, default=1, show_default=True, help="smoothness order"),
        click.option("--n", "n", type=int, default=None, help="dimension (default: from the data)"),
        click.option("--p", "p", type=float, default=2.0, show_default=True, help="integrability exponent"),
        click.option("--eps", "eps", type=float, default=0.1, show_default=True, help="basis constant"),
        click.option("--max-depth", "max_depth", type=int, default=40, show_default=True),
        click.option("--grid", "grid", type=int, default=512, show_default=True,
                     help="cells per axis for the discretized oracle path"),
        click.option("--oracle", "oracle", type=click.Choice(["exact", "irls"]), default=None,
                     help="exact splines (n=1, p=2 only) or IRLS; default picks exact when it applies"),
        click.option("--seed", "seed", type=int, default=0, show_default=True),
        click.option("--out", "out", type=click.Path(dir_okay=False), default=None, help="output file (default stdout)"),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _load(path, m, n, p, eps, max_depth, grid, oracle, seed):
    x, w, f = read_atoms(path, n)
    dim = x.shape[1]
    if n is not None and n != dim:
        raise ConfigError(f"--n {n} but the data have {dim} coordinates")
    if oracle is None:
        oracle = "exact" if (dim, float(p)) == (1, 2.0) else "irls"
    cfg = Config(m=m, n=dim, p=float(p), eps=eps, max_depth=max_depth, grid=grid, oracle=oracle, seed=seed)
    mu = normalize(x, w, f, m, float(p))
    return cfg, mu


def _raw_norm(pth_power, frame, p):
    """Undo the weight factor of the normalization: p-th powers divide by it."""
    if math.isinf(pth_power):
        return math.inf
    return (pth_power / frame.weight_factor) ** (1.0 / p)


def _sample_grid(mu, count):
    """count points per axis over the raw data hull widened by 20%."""
    raw = mu.frame.inverse(mu.locations)
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    half = 0.6 * (hi - lo)
    half = np.where(half > 0, half, 0.5)
    mid = 0.5 * (lo + hi)
    axes = [np.linspace(mid[d] - half[d], mid[d] + half[d], count) for d in range(mu.n)]
    if mu.n == 1:
        return axes[0].reshape(-1, 1)
    X, Y = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def _sandwich(tf_norm, oracle_norm, scale, p):
    ratio = None
    if oracle_norm > 1e-6 * scale:
        ratio = tf_norm / oracle_norm
    return {"Tf": _finite(tf_norm), "oracle": _finite(oracle_norm), "p": p,
            "Tf_p_power": _finite(tf_norm**p), "oracle_p_power": _finite(oracle_norm**p),
            "ratio": None if ratio is None else _finite(ratio),
            "floor_holds": bool(tf_norm >= oracle_norm * (1 - 1e-6) - 1e-6 * scale)}


def _extend_report(cfg, mu, samples, seed, trace=False):
    from .extension import top_extend

    f = np.asarray(mu.values, float)
    res = top_extend(mu, cfg)
    jv = res.j_value(f)
    orc_p = j_norm(f, mu, cfg)
    fr = mu.frame
    tf_raw = _raw_norm(jv["total_p"], fr, cfg.p)
    orc_raw = _raw_norm(orc_p, fr, cfg.p)
    m_raw = _raw_norm(res.m_value(f) ** cfg.p, fr, cfg.p)
    fin = np.isfinite(mu.weights)
    scale = float(np.max(np.abs(f), initial=0.0)) * (1 + float(np.sum(mu.weights[fin]) / fr.weight_factor)) ** (1 / cfg.p)
    body = res.to_json(f)
    report = {
        "command": "trace" if trace else "extend",
        "config": cfg.to_json(),
        "frame": fr.to_json(),
        "atoms": mu.to_json(),
        "merge_log": list(mu.merge_log),
        "decompositions": body["decompositions"],
        "events": body["events"],
        "xi": body["xi"],
        "keystone_jets": body["keystone_jets"],
        "ledger": body["ledger"],
        "M": {"value": _finite(m_raw), "value_normalized": _finite(res.m_value(f)),
              "terms": body["M"]["terms"]},
        "J": {k: _finite(v) for k, v in jv.items()},
        "sandwich": _sandwich(tf_raw, orc_raw, scale, cfg.p),
        "M_ratio": None if tf_raw <= 1e-6 * scale else _finite(m_raw / tf_raw),
    }
    grid = _sample_grid(mu, samples)
    report["samples"] = {"x": grid.tolist(), "Tf": [float(v) for v in res(f, fr.forward(grid))]}
    rng = np.random.default_rng(seed)
    ys = rng.uniform(0, 1, size=(8, cfg.n))
    recon = 0.0
    used = 0
    for y in ys:
        d, k = res.reconstruct_jet(f, y)
        direct = res.derivs(f, y.reshape(1, -1), cfg.m - 1)[:, 0]
        recon = max(recon, float(np.max(np.abs(d - direct))))
        used = max(used, k)
    report["reconstruction"] = {"points": len(ys), "max_error": recon, "max_functionals": used}
    report["omega_overlap"] = overlap_audit(res.omega_supports())
    if trace:
        vals = res(f, mu.locations)
        report["trace"] = {
            "residuals": [float(v) for v in vals - f],
            "max_residual": float(np.max(np.abs(vals - f), initial=0.0)),
            "point_ledger": [r.to_json() for r in res.functionals if r.kind == "point"],
        }
    return report


def _fail(exc):
    click.echo(f"error: {exc}", err=True)
    sys.exit(2)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="log progress to stderr")
def main(verbose):
    """Linear extension operators for weighted scattered data."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("normalize")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@run_options
def cmd_normalize(data, m, n, p, eps, max_depth, grid, oracle, seed, out):
    """Map the atoms into the central tenth of the unit cube."""
    try:
        cfg, mu = _load(data, m, n, p, eps, max_depth, grid, oracle, seed)
    except (InputError, ConfigError) as exc:
        _fail(exc)
    _dump({"command": "normalize", "config": cfg.to_json(), "frame": mu.frame.to_json(),
           "atoms": mu.to_json(), "merge_log": list(mu.merge_log)}, out)


@main.command("extend")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@run_options
@click.option("--samples", type=int, default=33, show_default=True, help="sample points per axis for Tf")
def cmd_extend(data, m, n, p, eps, max_depth, grid, oracle, seed, out, samples):
    """Build the extension operator and write a JSON report."""
    try:
        cfg, mu = _load(data, m, n, p, eps, max_depth, grid, oracle, seed)
        report = _extend_report(cfg, mu, samples, seed)
    except (InputError, ConfigError, InfeasibleError, ToleranceError) as exc:
        _fail(exc)
    _dump(report, out)


@main.command("trace")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@run_options
@click.option("--samples", type=int, default=33, show_default=True)
def cmd_trace(data, m, n, p, eps, max_depth, grid, oracle, seed, out, samples):
    """Exact interpolation: every weight must be inf."""
    try:
        cfg, mu = _load(data, m, n, p, eps, max_depth, grid, oracle, seed)
        if not np.all(mu.infinite):
            raise InputError("trace needs every weight to be inf")
        report = _extend_report(cfg, mu, samples, seed, trace=True)
    except (InputError, ConfigError, InfeasibleError, ToleranceError) as exc:
        _fail(exc)
    _dump(report, out)


@main.command("norm")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@run_options
def cmd_norm(data, m, n, p, eps, max_depth, grid, oracle, seed, out):
    """Oracle value of the data; when both paths apply, exact and IRLS side by side."""
    try:
        cfg, mu = _load(data, m, n, p, eps, max_depth, grid, oracle, seed)
        f = mu.values
        rows = {}
        paths = ["exact", "irls"] if (cfg.n, cfg.p) == (1, 2.0) else ["irls"]
        for path in paths:
            val = j_norm(f, mu, cfg.with_(oracle=path))
            rows[path] = {"p_power": _finite(val / mu.frame.weight_factor),
                          "norm": _finite(_raw_norm(val, mu.frame, cfg.p))}
    except (InputError, ConfigError, InfeasibleError, ToleranceError) as exc:
        _fail(exc)
    report = {"command": "norm", "config": cfg.to_json(), "frame": mu.frame.to_json(), "oracle": rows}
    if len(rows) == 2:
        a, b = rows["exact"]["p_power"], rows["irls"]["p_power"]
        if isinstance(a, float) and isinstance(b, float):
            report["relative_disagreement"] = abs(a - b) / max(abs(a), 1e-300) if a else abs(b)
    _dump(report, out)


@main.command("kcurve")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@run_options
@click.option("--tmin", type=float, default=1e-3, show_default=True)
@click.option("--tmax", type=float, default=1e3, show_default=True)
@click.option("--points", type=int, default=20, show_default=True)
def cmd_kcurve(data, m, n, p, eps, max_depth, grid, oracle, seed, out, tmin, tmax, points):
    """CSV of K(t) on a log grid, in the units of the input."""
    try:
        cfg, mu = _load(data, m, n, p, eps, max_depth, grid, oracle, seed)
        ts = np.geomspace(tmin, tmax, points)
        rows = k_curve(mu.values, mu, ts, cfg)
    except (InputError, ConfigError, InfeasibleError, ToleranceError) as exc:
        _fail(exc)
    c = mu.frame.weight_factor ** (1.0 / cfg.p)
    _write(k_curve_csv([(t, K / c, e) for t, K, e in rows]), out)


@main.command("audit")
@click.argument("report", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out", type=click.Path(dir_okay=False), default=None)
def cmd_audit(report, out):
    """Re-parse an extend/trace report and re-run the geometry and overlap audits."""
    try:
        with open(report, encoding="utf-8") as fh:
            data = json.load(fh)
        cfg = Config(**data["config"])
        trees = [(d["path"], CZTree.from_json(d["tree"])) for d in data["decompositions"]]
        supports = [Box(r["support"]["lo"], r["support"]["hi"]) for r in data["ledger"]]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        _fail(f"{report}: not an extend report ({exc})")
    geo = []
    ok = True
    for path, tree in trees:
        a = geometry_audit(tree)
        geo.append({"path": path, "violations": a["violations"], "multiplicity_1_3": a["multiplicity_1_3"],
                    "n_cubes": a["n_cubes"]})
        ok &= not a["violations"]
    overlap = overlap_audit(supports)
    bound = OVERLAP_BOUND[cfg.n]
    ok &= overlap <= bound
    recon = data.get("reconstruction", {})
    if recon:
        ok &= recon.get("max_error", 0.0) <= 1e-8 * (1 + max((abs(a["f"]) for a in data["atoms"]), default=0.0))
    result = {"command": "audit", "config": cfg.to_json(), "trees": geo, "omega_overlap": overlap,
              "omega_overlap_bound": bound, "reconstruction": recon, "passed": bool(ok)}
    _dump(result, out)
    if not ok:
        sys.exit(1)


if __name__ == "__main__":
    main()
