"""Command-line front end: ``tailrisk <group> <command> [options]``.

Inputs are CSV files with one header row (the first column is used for
1-D samples) and JSON config documents. Outputs are CSV files, written
to a temporary file and renamed into place only on success, plus a flat
``key=value`` summary on stdout.

Exit codes: 0 success, 1 usage error, 2 domain or numeric error.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import assoc, evt, mecsim, metadist, risk, rsl, snc
from .errors import TailRiskError
from .rng import SEED_MAX


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# --------------------------------------------------------------------------
# I/O helpers


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit(summary: dict, out=None):
    out = out or sys.stdout
    for k, v in summary.items():
        out.write(f"{k}={_fmt(v)}\n")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TailRiskError(f"{path}: empty file, expected a header row")
    header, body = rows[0], [r for r in rows[1:] if r]
    try:
        data = np.array([[float(c) for c in r] for r in body], dtype=float)
    except ValueError as exc:
        raise TailRiskError(f"{path}: non-numeric cell ({exc})") from None
    if body and data.shape[1] != len(header):
        raise TailRiskError(f"{path}: row width does not match header")
    return header, data.reshape(len(body), len(header))


def read_samples(path) -> np.ndarray:
    _, data = read_csv(path)
    if data.shape[0] == 0:
        raise TailRiskError(f"{path}: no data rows")
    return data[:, 0].copy()


def write_csv(path, header, columns):
    """Write columns under ``header`` atomically (temp file + rename)."""
    cols = [np.asarray(c).ravel() for c in columns]
    n = cols[0].size if cols else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    formatted = [[_fmt(v) for v in c.tolist()] for c in cols]
    for i in range(n):
        w.writerow([f[i] for f in formatted])
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise TailRiskError(f"{path}: config must be a JSON object")
    return cfg


def _need(args, name):
    if getattr(args, name) is None:
        raise UsageError(f"--{name.replace('_', '-')} is required for this command")
    return getattr(args, name)


def _seed(args):
    s = _need(args, "seed")
    if not 0 <= s <= SEED_MAX:
        raise UsageError("--seed must be a 64-bit unsigned integer")
    return s


# --------------------------------------------------------------------------
# evt


def cmd_evt(args, cfg):
    xs = read_samples(_need(args, "input"))
    if args.cmd == "fit-gpd":
        d = args.threshold if args.threshold is not None else cfg.get("threshold")
        exc = xs if d is None else evt.pot_excesses(xs, d)
        p = evt.fit_gpd(exc, threshold=0.0 if d is None else d)
        s = {"sigma_t": p.sigma_t, "xi": p.xi, "threshold": p.threshold, "n": len(exc),
             "ks_distance": evt.ks_distance_gpd(exc, p)}
        if args.out:
            write_csv(args.out, ["sigma_t", "xi", "threshold"], [[p.sigma_t], [p.xi], [p.threshold]])
        return s
    if args.cmd == "fit-gev":
        g = evt.fit_gev(xs)
        if args.out:
            write_csv(args.out, ["mu", "sigma", "xi"], [[g.mu], [g.sigma], [g.xi]])
        return {"mu": g.mu, "sigma": g.sigma, "xi": g.xi, "n": xs.size}
    if args.cmd == "pot":
        d = args.threshold if args.threshold is not None else cfg.get("threshold")
        if d is None:
            raise UsageError("--threshold is required for evt pot")
        exc = evt.pot_excesses(xs, d)
        if args.out:
            write_csv(args.out, ["excess"], [exc.values])
        return {"threshold": float(d), "n": len(exc)}
    m = args.block_size if args.block_size is not None else cfg.get("block_size")
    if m is None:
        raise UsageError("--block-size is required for evt blocks")
    bm = evt.block_maxima(xs, m)
    if args.out:
        write_csv(args.out, ["maximum"], [bm.values])
    return {"block_size": int(m), "n": len(bm)}


# --------------------------------------------------------------------------
# risk


def cmd_risk(args, cfg):
    xs = read_samples(_need(args, "input"))
    alpha = args.alpha if args.alpha is not None else cfg.get("alpha")
    if alpha is None:
        raise UsageError("--alpha is required for risk commands")
    if args.cmd == "var":
        return {"alpha": alpha, "var": risk.var_empirical(xs, alpha)}
    if args.cmd == "cvar":
        return {"alpha": alpha, "cvar": risk.cvar_empirical(xs, alpha)}
    if args.cmd == "evar":
        r = risk.evar_empirical(xs, alpha, full_output=True)
        return {"alpha": alpha, "evar": r.value, "z": r.z, "at_boundary": r.at_boundary}
    rep = risk.cvar_gpd_link_check(xs, alpha)
    return {"alpha": alpha, "cvar_minus_var": rep.lhs, "gpd_mean": rep.rhs, "rel_err": rep.rel_err}


# --------------------------------------------------------------------------
# rsl


_SC_KEYS = {"n_tx", "n_rx", "blockage_decay_m", "noise_figure_db", "sidelobe_db", "pointing_error_std",
            "nlos_angle_spread", "mu", "kappa", "lambda_exponent", "warmup_fraction", "eval_fraction",
            "bandwidth_hz"}


def cmd_rsl(args, cfg):
    seed = _seed(args)
    kw = {k: cfg[k] for k in _SC_KEYS if k in cfg}
    if args.mu is not None:
        kw["mu"] = args.mu
    sc = rsl.MmwaveScenario.random(density_per_km2=cfg.get("density_per_km2", 24.0),
                                   area_km2=cfg.get("area_km2", 1.0), seed=seed, **kw)
    episodes = args.episodes if args.episodes is not None else int(cfg.get("episodes", 2000))
    schemes = [s.upper() for s in cfg.get("schemes", list(rsl.SCHEMES))]
    results = [rsl.simulate_mmwave(sc, s, episodes, seed=seed) for s in schemes]
    top = max((float(np.ceil(r.rates_gbps.max())) for r in results if r.rates_gbps.size), default=1.0)
    grid = np.linspace(0.0, top, int(cfg.get("ccdf_points", 101)))
    summary = {"n_cells": sc.n_cells, "episodes": episodes}
    cols = [grid]
    for r in results:
        summary[f"{r.scheme.lower()}_mean"] = r.summary["mean"]
        summary[f"{r.scheme.lower()}_variance"] = r.summary["variance"]
        cols.append(rsl.rate_ccdf(r.rates_gbps, grid) if r.rates_gbps.size else np.full(grid.size, math.nan))
    if args.out:
        write_csv(args.out, ["rate_gbps"] + [f"ccdf_{s.lower()}" for s in schemes], cols)
    return summary


# --------------------------------------------------------------------------
# snc


def _arrival(cfg):
    a = cfg.get("arrival", {"kind": "poisson", "lam": 1.0})
    kind = a.get("kind")
    if kind == "poisson":
        return snc.LogMgf.poisson(a["lam"])
    if kind == "deterministic":
        return snc.LogMgf.deterministic(a["a"])
    if kind == "bernoulli":
        return snc.LogMgf.bernoulli(a["p"], a.get("size", 1.0))
    raise TailRiskError(f"unknown arrival kind {kind!r}")


def _service(cfg):
    s = cfg.get("service", {"kind": "rayleigh", "mean_snr": 10.0})
    if s.get("kind") == "constant":
        return snc.ServiceModel.constant(s["c"])
    if s.get("kind") == "rayleigh":
        return snc.ServiceModel.rayleigh(s["mean_snr"], s.get("scale", 1.0))
    raise TailRiskError(f"unknown service kind {s.get('kind')!r}")


def cmd_snc(args, cfg):
    if args.cmd == "effbw":
        lam = _arrival(cfg)
        theta = args.theta if args.theta is not None else cfg.get("theta")
        if theta is None:
            raise UsageError("--theta is required for snc effbw")
        return {"theta": theta, "effective_bandwidth": snc.effective_bandwidth(lam, theta)}
    if args.cmd == "decay":
        lam = _arrival(cfg)
        c = args.capacity if args.capacity is not None else cfg.get("capacity")
        if c is None:
            raise UsageError("--capacity is required for snc decay")
        th = snc.decay_rate(lam, c)
        return {"capacity": c, "theta_star": th, "zero_tail": math.isinf(th)}
    svc = _service(cfg)
    ws = list(range(int(cfg.get("w_min", 1)), int(cfg.get("w_max", 10)) + 1))
    if args.cmd == "bound":
        env = snc.ArrivalEnvelope(cfg.get("rho", 1.0), cfg.get("sigma", 0.0))
        res = [snc.delay_violation_bound(w, env, svc) for w in ws]
        if args.out:
            write_csv(args.out, ["w", "bound", "argmin_s"], [ws, [r.bound for r in res], [r.s for r in res]])
        return {"rho": env.rho, "sigma": env.sigma, **{f"bound_w{w}": r.bound for w, r in zip(ws, res)}}
    seed = _seed(args)
    T = args.T if args.T is not None else int(cfg.get("T", 100_000))
    if "arrival" in cfg:
        lam = _arrival(cfg)
        arr, label = lam.sampler, lam.name
    else:
        rho = cfg.get("rho", 1.0)
        arr, label = (lambda rng, n: np.full(n, rho)), f"constant({rho})"
    tr = snc.queue_sim(arr, svc.sample, T, seed, ws=ws, warmup=int(cfg.get("warmup", 0)))
    if args.out:
        write_csv(args.out, ["t", "q"], [np.arange(T), tr.q])
    s = {"T": T, "arrival": label, "mean_q": float(tr.q.mean())}
    s.update({f"violation_freq_w{w}": f for w, f in zip(ws, tr.violation_frequency)})
    return s


# --------------------------------------------------------------------------
# metadist


def cmd_meta(args, cfg):
    if args.cmd == "field":
        seed = _seed(args)
        keys = ("lam", "d0", "alpha_pl", "theta", "radius", "realizations")
        pc = metadist.PoissonFieldConfig(seed=seed, **{k: cfg[k] for k in keys if k in cfg})
        ps = metadist.poisson_field_success_samples(pc)
        if args.out:
            write_csv(args.out, ["success_probability"], [ps])
        m = metadist.moments_from_samples(ps)
        return {"realizations": ps.size, "m1": m.m1, "m2": m.m2}
    if args.cmd == "moments":
        m = metadist.moments_from_samples(read_samples(_need(args, "input")))
        return {"m1": m.m1, "m2": m.m2}
    if args.input:
        ps = read_samples(args.input)
        m = metadist.moments_from_samples(ps)
    else:
        if "m1" not in cfg or "m2" not in cfg:
            raise UsageError("meta beta needs --in samples or m1/m2 in --config")
        ps, m = None, metadist.MetaMoments(cfg["m1"], cfg["m2"])
    bp = metadist.beta_from_moments(m)
    s = {"a": bp.a, "b": bp.b, "m1": m.m1, "m2": m.m2}
    if ps is not None:
        s["sup_distance"] = metadist.ccdf_sup_distance(ps, bp)
    if args.out:
        x = np.linspace(0.0, 1.0, int(cfg.get("ccdf_points", 101)))
        cols = [x, metadist.meta_ccdf(x, bp)]
        header = ["x", "beta_ccdf"]
        if ps is not None:
            cols.append(metadist.empirical_ccdf(ps, x))
            header.append("empirical_ccdf")
        write_csv(args.out, header, cols)
    return s


# --------------------------------------------------------------------------
# mecsim


_MEC_KEYS = ("arrival_mean", "epsilon", "f_max", "cycles_per_bit", "p_tx", "V", "w1", "w2",
             "f_levels", "warmup_fraction", "kappa_cpu")


def cmd_mec(args, cfg):
    if args.cmd == "analyze":
        header, data = read_csv(_need(args, "input"))
        if "X" not in header:
            raise TailRiskError("trace file needs an X column")
        d = args.threshold if args.threshold is not None else cfg.get("d")
        if d is None:
            raise UsageError("--threshold (the queue threshold d) is required for mec analyze")
        X = data[:, header.index("X")]
        ta = mecsim.mec_tail_analysis(X, d)
        if args.out:
            write_csv(args.out, ["x", "ccdf"], [ta.grid, ta.ccdf])
        return {"d": float(d), "n_exceed": ta.n_exceed, "sigma_t": ta.gpd.sigma_t, "xi": ta.gpd.xi,
                "ks_distance": ta.ks_distance}
    seed = _seed(args)
    T = args.T if args.T is not None else int(cfg.get("T", 1_000_000))
    kw = {k: cfg[k] for k in _MEC_KEYS if k in cfg}
    if "offload" in cfg:
        kw["offload"] = _service({"service": cfg["offload"]})
    if "d" in cfg and "sigma_th" in cfg:
        c = mecsim.MecConfig(seed=seed, T=T, d=cfg["d"], sigma_th=cfg["sigma_th"],
                             xi_th=cfg.get("xi_th", 0.0), **kw)
    else:
        c = mecsim.default_config(seed=seed, T=T, **kw)
    trace, rep = mecsim.mec_run(c)
    if args.out:
        write_csv(args.out, ["t", "X", "Q1", "Q2", "Q3", "f", "offload"],
                  [np.arange(T), trace.X, trace.Q[:, 0], trace.Q[:, 1], trace.Q[:, 2], trace.f,
                   trace.offload.astype(int)])
    s = {"T": T, "d": c.d, "epsilon": c.epsilon, "sigma_th": c.sigma_th, "xi_th": c.xi_th}
    s.update(rep.as_dict())
    return s


# --------------------------------------------------------------------------
# assoc


def cmd_assoc(args, cfg):
    vt, vp = cfg.get("vartheta", 1.0), cfg.get("varphi", 1.0)
    split = bool(cfg.get("power_split", False))
    if args.cmd == "ebar":
        seed = _seed(args)
        n = args.n_draws if args.n_draws is not None else int(cfg.get("n_draws", 2000))
        r = assoc.monte_carlo_ebar(int(cfg.get("B", 3)), int(cfg.get("U", 3)),
                                   assoc.rayleigh_sampler(cfg.get("mean_snr", 10.0)), vt, vp, n, seed,
                                   method=cfg.get("method", "brute"), power_split=split)
        return {"mean": r.mean, "stderr": r.stderr, "n": r.n}
    _, gamma = read_csv(_need(args, "input"))
    inst = assoc.AssocInstance(gamma, vt, vp, power_split=split, convention=cfg.get("convention", "net"))
    x, val = assoc.brute_force_opt(inst) if args.cmd == "brute" else assoc.greedy_assoc(inst)
    if args.out:
        write_csv(args.out, [f"u{u}" for u in range(inst.U)], [x[:, u] for u in range(inst.U)])
    s = {"B": inst.B, "U": inst.U, "value": val, "links": int(x.sum())}
    if "gamma0" in cfg:
        s["reliability"] = assoc.reliability_fraction(inst, x, cfg["gamma0"])
    return s


# --------------------------------------------------------------------------


_GROUPS = {
    "evt": (cmd_evt, ["fit-gpd", "fit-gev", "pot", "blocks"]),
    "risk": (cmd_risk, ["var", "cvar", "evar", "link-check"]),
    "rsl": (cmd_rsl, ["simulate"]),
    "snc": (cmd_snc, ["bound", "effbw", "decay", "queue-sim"]),
    "meta": (cmd_meta, ["moments", "beta", "field"]),
    "mec": (cmd_mec, ["run", "analyze"]),
    "assoc": (cmd_assoc, ["brute", "greedy", "ebar"]),
}


def _common(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--in", dest="input", metavar="PATH")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--alpha", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--block-size", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--capacity", type=float)
    p.add_argument("--episodes", type=int)
    p.add_argument("--mu", type=float)
    p.add_argument("--T", type=int)
    p.add_argument("--n-draws", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tailrisk", description="Tail-risk analysis and URLLC simulators.")
    groups = parser.add_subparsers(dest="group", metavar="GROUP", parser_class=_Parser)
    groups.required = True
    for name, (_, cmds) in _GROUPS.items():
        g = groups.add_parser(name)
        sub = g.add_subparsers(dest="cmd", metavar="COMMAND", parser_class=_Parser)
        sub.required = True
        for c in cmds:
            _common(sub.add_parser(c))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        handler = _GROUPS[args.group][0]
        summary = handler(args, cfg)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except SystemExit as exc:   # --help
        return int(exc.code or 0)
    except (TailRiskError, ValueError, ArithmeticError, OSError, KeyError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"tailrisk: error: {type(exc).__name__}: {exc}\n")
        return 2
    emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
