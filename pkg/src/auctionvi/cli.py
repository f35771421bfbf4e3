"""Command-line front end: ``auctionvi {bne,check,flow,learn,odea}``.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines, then command-line flags (highest priority). Outputs go
to ``--out``, else ``$AUCTIONVI_OUT``, else the working directory; every file
carries the resolved configuration and the package version.

Exit codes: 0 success (also for reported non-convergence), 2 usage or
configuration error, 3 numerical failure.
"""

import argparse
import json
import os
import sys
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .bidspace import FeasibleSet, PwlBid
from .dynamics import ALPHA_MAX, flow_field, integrate_trajectories, odea_run, projected_gradient_learn, random_starts
from .equilibria import bne, fpa_ode_residual, vi_residual
from .errors import AuctionVIError, NumericalError
from .minty import fpa_mvi_counterexample, minty_probe_sweep, minty_residual, scan_two_slope
from .monotonicity import counterexample, quasi_mono_check, random_monotonicity_sweep
from .operators import AuctionRule
from .priors import Prior, master_grid
from .svg import flow_svg

OUT_ENV = "AUCTIONVI_OUT"

DEFAULTS = {
    "rule": None, "prior": "uniform", "n": 2, "delta": 0.01, "grid": 1025, "seed": 0, "out": None,
    # check
    "counterexample": None, "minty": None, "monotonicity": None, "count": 100,
    # flow
    "resolution": 101, "b1_range": "0:1", "b2_range": "0:1", "trajectories": 0, "step": None,
    "method": "euler", "max_steps": 20000, "tol": None,
    # learn
    "start": None, "max_iters": 2000,
    # odea
    "K": 500, "alpha": ALPHA_MAX, "lipschitz": None, "gap_radius": 0.25, "gap_every": 50,
}

TYPES = {"n": int, "delta": float, "grid": int, "seed": int, "count": int, "resolution": int,
         "trajectories": int, "step": float, "max_steps": int, "tol": float, "max_iters": int,
         "K": int, "alpha": float, "lipschitz": float, "gap_radius": float, "gap_every": int}


ALIASES = {"grid_size": "grid"}


class UsageError(Exception):
    pass


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            key = ALIASES.get(key, key)
            if key not in DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def write_config(cfg, path):
    with open(path, "w") as fh:
        for key in sorted(cfg):
            if cfg[key] is not None and key != "out":
                fh.write(f"{key} = {cfg[key]}\n")


def _coerce(cfg):
    out = dict(cfg)
    for key, typ in TYPES.items():
        if out.get(key) is not None and not isinstance(out[key], typ):
            try:
                out[key] = typ(out[key])
            except ValueError:
                raise UsageError(f"invalid value for {key}: {out[key]!r}")
    return out


def resolve(args):
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config(args.config))
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    cfg = _coerce(cfg)
    if cfg["rule"] is None:
        raise UsageError("the rule is required (--rule spa|fpa or rule = ... in the config file)")
    cfg["rule"] = AuctionRule.parse(cfg["rule"]).short
    cfg["command"] = args.command
    return cfg


def _out_dir(cfg):
    out = cfg.get("out") or os.environ.get(OUT_ENV) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _header(cfg):
    shown = {k: v for k, v in sorted(cfg.items()) if k != "out"}
    return [f"auctionvi {__version__}", "config: " + json.dumps(shown, sort_keys=True)]


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, PwlBid):
        return obj.to_dict()
    return obj


def _write_json(path, cfg, payload):
    doc = {"version": __version__, "config": {k: v for k, v in sorted(cfg.items()) if k != "out"}}
    doc.update(_to_jsonable(payload))
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _prior(cfg):
    return Prior.parse(cfg["prior"], cfg["n"])


def _range(text):
    try:
        lo, hi = (float(v) for v in str(text).split(":"))
    except ValueError:
        raise UsageError(f"range must look like lo:hi, got {text!r}")
    return lo, hi


def load_bid(spec, prior, rule, delta, grid):
    """Start bid from ``identity``, ``linear:a``, ``bne`` or a JSON/CSV file."""
    if spec in (None, "identity"):
        return PwlBid.identity()
    if spec == "bne":
        return bne(prior, rule, delta, grid).bid
    if spec.startswith("linear:"):
        return PwlBid.linear(float(spec.split(":", 1)[1]))
    if not os.path.exists(spec):
        raise UsageError(f"unknown start {spec!r} (identity, linear:a, bne or a file)")
    if spec.endswith(".json"):
        with open(spec) as fh:
            data = json.load(fh)
        data = data.get("bid", data)
        return PwlBid.from_dict(data)
    with open(spec) as fh:
        rows = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    data = np.loadtxt(rows[1:], delimiter=",", ndmin=2)
    return PwlBid(data[:, 0], data[:, 1])


# -- commands ---------------------------------------------------------------

def cmd_bne(cfg):
    prior, rule = _prior(cfg), AuctionRule.parse(cfg["rule"])
    sol = bne(prior, rule, cfg["delta"], master_grid(cfg["grid"]))
    out = _out_dir(cfg)
    stem = os.path.join(out, f"bne_{rule.short}")
    sol.bid.to_csv(stem + ".csv", header=_header(cfg))
    res, witness = vi_residual(sol.bid, prior, rule, cfg["delta"], seed=cfg["seed"], return_witness=True)
    report = {"bid": sol.bid, "delta0": sol.delta0, "vi_residual": res, "vi_witness": witness}
    if rule is AuctionRule.FIRST_PRICE:
        report["ode_residual"] = fpa_ode_residual(sol.bid, prior)
    _write_json(stem + ".json", cfg, report)
    print(f"{rule.short} equilibrium written to {stem}.csv (VI residual {res:.3e})")
    return report


def _check_counterexample(cfg, name):
    beta, beta_t, rule, delta = counterexample(name)
    if rule.short != cfg["rule"]:
        raise UsageError(f"counterexample {name!r} belongs to rule {rule.short}")
    rep = quasi_mono_check(beta, beta_t, Prior.uniform(2), rule, delta)
    return {"counterexample": name, "delta": delta, **rep.to_dict()}


def _check_minty(cfg, spec):
    prior, rule, delta = _prior(cfg), AuctionRule.parse(cfg["rule"]), cfg["delta"]
    if spec.startswith("family:"):
        n = int(spec.split(":", 1)[1])
        beta = fpa_mvi_counterexample(n)
        rep = minty_residual(beta, beta, prior, rule, min(delta, 0.2))
        return {"minty": spec, **rep.to_dict()}
    if spec == "sweep":
        return {"minty": spec, **minty_probe_sweep(cfg["count"], prior, rule, delta, cfg["seed"])}
    raise UsageError(f"unknown minty check {spec!r} (family:<n> or sweep)")


def cmd_check(cfg):
    report = {}
    if cfg["counterexample"]:
        if cfg["counterexample"].startswith("family:"):
            report["minty"] = _check_minty(cfg, cfg["counterexample"])
        else:
            report["quasi_monotonicity"] = _check_counterexample(cfg, cfg["counterexample"])
    if cfg["minty"]:
        report["minty"] = _check_minty(cfg, cfg["minty"])
    if cfg["monotonicity"]:
        if cfg["monotonicity"] != "sweep":
            raise UsageError("monotonicity check supports only 'sweep'")
        report["monotonicity_sweep"] = random_monotonicity_sweep(
            cfg["count"], _prior(cfg), cfg["rule"], cfg["delta"], cfg["seed"])
    if not report:
        name = f"{cfg['rule']}-prop"
        report["quasi_monotonicity"] = _check_counterexample(cfg, name)
    path = _write_json(os.path.join(_out_dir(cfg), f"check_{cfg['rule']}.json"), cfg, report)
    for key, val in report.items():
        summary = val.get("verdict", val.get("residual", val.get("max_residual", val.get("counts"))))
        print(f"{key}: {summary}")
    print(f"report written to {path}")
    return report


def cmd_flow(cfg):
    prior, rule, delta = _prior(cfg), AuctionRule.parse(cfg["rule"]), cfg["delta"]
    ranges = (_range(cfg["b1_range"]), _range(cfg["b2_range"]))
    field = flow_field(rule, prior, delta, ranges, cfg["resolution"])
    vmap = scan_two_slope(rule, prior, delta, ranges[0], ranges[1], cfg["resolution"])
    trajs = []
    if cfg["trajectories"] > 0:
        starts = random_starts(cfg["trajectories"], delta, cfg["seed"], ranges)
        trajs = integrate_trajectories(starts, rule, prior, delta, step=cfg["step"] or 0.2,
                                       max_steps=cfg["max_steps"], tol=cfg["tol"] or 1e-7,
                                       method=cfg["method"])
    out = _out_dir(cfg)
    stem = os.path.join(out, f"flow_{rule.short}")
    field.to_csv(stem + ".csv", header=_header(cfg))
    vmap.to_csv(os.path.join(out, f"minty_{rule.short}.csv"), header=_header(cfg))
    svg = flow_svg(field, vmap, trajs, title=f"{rule.short} two-slope gradient field")
    meta = escape(" | ".join(_header(cfg)))
    svg = svg.replace("<title>", f"<metadata>{meta}</metadata>\n<title>", 1)
    with open(stem + ".svg", "w") as fh:
        fh.write(svg)
    star = field.star
    report = {"stationary": field.stationary(1e-6), "star": None if star is None else [star.b1, star.b2],
              "violated_cells": vmap.n_violated,
              "trajectories": [{"start": [t.iterates[0].b1, t.iterates[0].b2],
                                "end": [t.final.b1, t.final.b2], "steps": len(t),
                                "status": t.status, "distance": t.distances[-1]} for t in trajs]}
    _write_json(stem + ".json", cfg, report)
    print(f"flow field written to {stem}.svg ({vmap.n_violated} violated cells)")
    return report


def cmd_learn(cfg):
    prior, rule, delta = _prior(cfg), AuctionRule.parse(cfg["rule"]), cfg["delta"]
    beta0 = load_bid(cfg["start"], prior, rule, delta, master_grid(cfg["grid"]))
    traj = projected_gradient_learn(beta0, rule, prior, delta, step=cfg["step"] or 0.2,
                                    max_iters=cfg["max_iters"], tol=cfg["tol"] or 1e-10)
    out = _out_dir(cfg)
    stem = os.path.join(out, f"learn_{rule.short}")
    traj.to_csv(stem + ".csv", header=_header(cfg))
    status = traj.status
    report = {"status": status, "iterations": len(traj), "final_distance": traj.distances[-1],
              "final": traj.final}
    _write_json(stem + "_final.json", cfg, report)
    print(f"learning {status} after {len(traj)} iterations; L2 distance to equilibrium "
          f"{traj.distances[-1]:.3e}")
    return report


def rate_report(gaps):
    """Fit ``gap_k = C k^{-1/2}`` (log-space least squares) and report the spread."""
    ks = np.array(sorted(int(k) for k in gaps))
    if ks.size == 0:
        return None
    vals = np.array([gaps[str(k)] for k in ks])
    scaled = vals * np.sqrt(ks)
    C = float(np.exp(np.mean(np.log(scaled))))
    ratio = scaled / C
    return {"k": ks.tolist(), "gap": vals.tolist(), "C": C, "min_ratio": float(ratio.min()),
            "max_ratio": float(ratio.max()), "within_factor_2": bool(ratio.min() >= 0.5 and ratio.max() <= 2.0)}


def cmd_odea(cfg):
    prior, rule, delta = _prior(cfg), AuctionRule.parse(cfg["rule"]), cfg["delta"]
    cfg["start"] = cfg["start"] or "linear:0.5"
    beta0 = load_bid(cfg["start"], prior, rule, delta, master_grid(cfg["grid"]))
    K = cfg["K"]
    every = max(1, cfg["gap_every"])
    traj, best = odea_run(beta0, rule, prior, delta, cfg["alpha"], K, grid=master_grid(cfg["grid"]),
                          lipschitz=cfg["lipschitz"], gap_checkpoints=range(every, K + 1, every),
                          gap_radius=cfg["gap_radius"], seed=cfg["seed"])
    out = _out_dir(cfg)
    stem = os.path.join(out, f"odea_{rule.short}")
    gaps = traj.extras["restricted_gap"]
    with open(stem + ".csv", "w") as fh:
        for line in _header(cfg):
            fh.write(f"# {line}\n")
        fh.write("k,dual_grad_norm,distance,criterion,restricted_gap\n")
        crit = [float("nan")] + traj.extras["criterion"]
        for k in range(len(traj)):
            gap = gaps.get(str(k), float("nan"))
            fh.write(f"{k},{float(traj.grad_norms[k])!r},{float(traj.distances[k])!r},{float(crit[k])!r},{float(gap)!r}\n")
    sel = traj.extras["selected"]
    report = {"status": traj.status, "selected": sel, "distance_selected": traj.distances[sel],
              "distance_trend": traj.distances[::max(1, K // 10)], "L": traj.extras["L"],
              "alpha": traj.extras["alpha"], "rate": rate_report(gaps), "final": best}
    if "note" in traj.extras:
        report["note"] = traj.extras["note"]
    _write_json(stem + "_final.json", cfg, report)
    print(f"odea: selected iterate {sel}, H-distance to equilibrium {traj.distances[sel]:.4e}")
    return report


COMMANDS = {"bne": cmd_bne, "check": cmd_check, "flow": cmd_flow, "learn": cmd_learn, "odea": cmd_odea}


def build_parser():
    parser = argparse.ArgumentParser(prog="auctionvi", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"auctionvi {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--rule", help="spa or fpa")
    common.add_argument("--prior", help="uniform, power:<a> or csv:<path>")
    common.add_argument("--n", type=int, help="number of bidders")
    common.add_argument("--delta", type=float, help="minimal bid slope")
    common.add_argument("--grid-size", "--grid", dest="grid", type=int, help="knot count of the master grid")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("bne", parents=[common], help="closed-form equilibrium and VI residual")

    p = sub.add_parser("check", parents=[common], help="monotonicity and Minty checks")
    p.add_argument("--counterexample", help="spa-prop, fpa-prop or family:<n>")
    p.add_argument("--minty", help="family:<n> or sweep")
    p.add_argument("--monotonicity", help="sweep")
    p.add_argument("--count", type=int)

    p = sub.add_parser("flow", parents=[common], help="two-slope vector field and Minty map")
    p.add_argument("--resolution", type=int)
    p.add_argument("--b1-range", dest="b1_range")
    p.add_argument("--b2-range", dest="b2_range")
    p.add_argument("--trajectories", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--method", choices=["euler", "rk4"])
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("learn", parents=[common], help="projected gradient ascent")
    p.add_argument("--start", help="identity, linear:<a>, bne or a bid file")
    p.add_argument("--step", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("odea", parents=[common], help="optimistic dual extrapolation")
    p.add_argument("--start", help="identity, linear:<a>, bne or a bid file")
    p.add_argument("--K", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lipschitz", type=float, help="override the Lipschitz bound")
    p.add_argument("--gap-radius", dest="gap_radius", type=float)
    p.add_argument("--gap-every", dest="gap_every", type=int)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"auctionvi: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"auctionvi: numerical failure: {exc}", file=sys.stderr)
        return 3
    except AuctionVIError as exc:
        print(f"auctionvi: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
