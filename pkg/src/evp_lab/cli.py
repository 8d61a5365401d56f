"""Command-line front end: ``evp-lab <command> [options]``.

Every run writes its main output (JSON or CSV) plus a manifest recording the
configuration, seeds, software version, input digests and output digests.
The exit status is 0 exactly when every tolerance asserted by the command
passed; configuration errors exit with status 2 and a JSON diagnostic on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from importlib import metadata

import numpy as np

from . import arithmetic, geomsum, liouville, walk
from .cohomology import solve_damped, solve_rotation
from .environment import classify, environment_from_config, invariant_density, make_alpha
from .errors import ConfigError, EvpLabError
from .periodic import function_from_spec, logistic
from .poisson import center, clt_variance, iterated_poisson

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG = 0, 1, 2

# per-command configuration keys accepted from --config files
SCHEMAS = {
    "alpha": {"alpha", "depth", "gammas", "growth", "q_min"},
    "cohomology": {"alpha", "psi", "damped", "tolerance", "depth"},
    "density": {"env", "alpha", "p", "tolerance"},
    "poisson": {"env", "psi", "depth", "tolerance"},
    "mix": {"env", "psi", "x", "ns", "window", "max_slope"},
    "clt": {"env", "psi", "N", "trials", "variance_tolerance", "ks_tolerance"},
    "geomsum.delta": {"s", "n", "m", "max_ratio"},
    "geomsum.llt": {"s", "lengths", "max_error"},
    "geomsum.tail": {"p", "n", "mode", "samples", "min_r2"},
    "liouville": {"env", "stages", "dp_cap", "points_per_arc", "rows"},
}
GLOBAL_KEYS = {"seed", "threads", "precision_bits"}


def version():
    try:
        return metadata.version("evp-lab")
    except metadata.PackageNotFoundError:
        return "unknown"


# parsing helpers ---------------------------------------------------------------

def parse_ladder(text):
    """'64..4096' (powers of two), '8,16,...,512' (geometric), or '1,2,3'."""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    text = str(text).replace(" ", "")
    if ".." in text and "..." not in text:
        lo, hi = (int(v) for v in text.split(".."))
        out, v = [], lo
        while v <= hi:
            out.append(v)
            v *= 2
        return out
    parts = text.split(",")
    if "..." in parts:
        i = parts.index("...")
        head = [int(v) for v in parts[:i]]
        last = int(parts[i + 1])
        if len(head) < 2:
            raise ConfigError(f"ladder {text!r} needs two terms before '...'")
        out = list(head)
        if head[1] % head[0] == 0 and head[1] // head[0] > 1:
            ratio = head[1] // head[0]
            while out[-1] * ratio <= last:
                out.append(out[-1] * ratio)
        else:
            step = head[1] - head[0]
            while out[-1] + step <= last:
                out.append(out[-1] + step)
        return out
    return [int(v) for v in parts]


def parse_floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",")]


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _load_json(path, inputs):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path} is not valid JSON: {err}") from err
    inputs[path] = _sha256_file(path)
    return data


def _load_function(value, inputs, what):
    if value is None:
        return None
    if isinstance(value, str) and os.path.exists(value):
        value = _load_json(value, inputs)
    elif isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{what}: not a file and not inline JSON: {value!r}") from err
    try:
        return function_from_spec(value)
    except (ValueError, TypeError, KeyError) as err:
        raise ConfigError(f"{what}: {err}") from err


def _load_env(value, inputs, bits):
    if value is None:
        value = {"alpha": "golden", "p_coefficients": {"logistic": {}}}
    elif isinstance(value, str):
        if os.path.exists(value):
            value = _load_json(value, inputs)
        else:
            try:
                value = json.loads(value)
            except json.JSONDecodeError as err:
                raise ConfigError(f"env: not a file and not inline JSON: {value!r}") from err
    if not isinstance(value, dict):
        raise ConfigError("env must be a JSON object")
    return environment_from_config(value, bits)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    if isinstance(obj, int) and abs(obj) > 2 ** 53:
        return str(obj)
    return obj


# output ----------------------------------------------------------------------------

class Run:
    """Collects configuration, inputs and outputs for one command."""

    def __init__(self, command, args, config):
        self.command = command
        self.args = args
        self.config = config
        self.inputs = {}
        self.checks = []  # (name, passed, detail)
        self.seeds = {}

    def check(self, name, passed, detail=""):
        self.checks.append((name, bool(passed), detail))

    @property
    def passed(self):
        return all(p for _, p, _ in self.checks)

    def run_digest(self):
        # thread count changes scheduling only, never numbers, so it stays out
        config = {k: v for k, v in self.config.items() if k != "threads"}
        body = {
            "command": self.command,
            "config": _jsonable(config),
            "seeds": self.seeds,
            "version": version(),
            "inputs": self.inputs,
        }
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    def _path(self, ext):
        out = self.args.out or f"{self.command.replace('.', '-')}.{ext}"
        if not os.path.isabs(out):
            out = os.path.join(self.args.out_dir, out)
        os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
        return out

    def write(self, payload, table=None):
        """Write JSON payload, or the CSV table when --csv is chosen and a table exists."""
        digest = self.run_digest()
        if self.args.format == "csv" and table is not None:
            header, rows = table
            path = self._path("csv")
            buf = io.StringIO()
            buf.write(f"# manifest_sha256={digest}\r\n")
            w = csv.writer(buf, lineterminator="\r\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
        else:
            path = self._path("json")
            doc = {"manifest_sha256": digest, "command": self.command,
                   "checks": [{"name": n, "passed": p, "detail": d} for n, p, d in self.checks],
                   "passed": self.passed, "result": _jsonable(payload)}
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
        manifest = {
            "manifest_sha256": digest,
            "command": self.command,
            "config": _jsonable(self.config),
            "seeds": self.seeds,
            "version": version(),
            "inputs": self.inputs,
            "outputs": {path: _sha256_file(path)},
            "checks": [{"name": n, "passed": p, "detail": d} for n, p, d in self.checks],
            "passed": self.passed,
        }
        with open(path + ".manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for name, ok, detail in self.checks:
            print(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))
        print(f"wrote {path}")
        return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


# commands ----------------------------------------------------------------------------

def cmd_alpha(run, cfg, bits):
    if cfg.get("gammas"):
        sched = arithmetic.liouville_alpha(parse_floats(cfg["gammas"]), q_min=int(cfg.get("q_min", 2)),
                                           growth=bool(cfg.get("growth", True)), bits=bits)
        run.check("schedule complete", not sched.truncated, sched.notice)
        for s in sched.stages:
            run.check(f"stage q={s.q} approximation",
                      arithmetic.approximation_holds(sched.rotation, s.p, s.q, s.gamma))
        rows = [(i + 1, str(p), str(q)) for i, (p, q) in enumerate(sched.rotation.convergents)]
        return {"schedule": sched, "profile": arithmetic.diophantine_profile(sched.rotation)}, \
            (["k", "p_k", "q_k"], rows)
    rot = make_alpha(cfg.get("alpha", "golden"), int(cfg.get("depth", 64)), bits)
    prof = arithmetic.diophantine_profile(rot) if len(rot.convergents) >= 3 else None
    rows = [(i + 1, str(a), str(p), str(q)) for i, (a, (p, q)) in
            enumerate(zip(rot.partial_quotients, rot.convergents))]
    return {"rotation": rot, "profile": prof}, (["k", "a_k", "p_k", "q_k"], rows)


def cmd_cohomology(run, cfg, bits):
    psi = _load_function(cfg.get("psi"), run.inputs, "psi") or function_from_spec({"cos": 1})
    rot = make_alpha(cfg.get("alpha", "golden"), int(cfg.get("depth", 64)), bits)
    tol = float(cfg.get("tolerance", 1e-9))
    if cfg.get("damped") is not None:
        rep = solve_damped(psi, rot, float(cfg["damped"]))
        run.check("series cross-check", rep.series_discrepancy < tol, f"{rep.series_discrepancy:.3e}")
    else:
        rep = solve_rotation(psi, rot)
    run.check("residual", rep.residual_sup < tol, f"{rep.residual_sup:.3e} < {tol:g}")
    coeffs = rep.solution.coefficients
    K = rep.solution.degree
    rows = [(k, c.real, c.imag) for k, c in zip(range(-K, K + 1), coeffs)]
    return rep, (["k", "re_coefficient", "im_coefficient"], rows)


def cmd_density(run, cfg, bits):
    if cfg.get("p") is not None and cfg.get("env") is None:
        p = _load_function(cfg["p"], run.inputs, "p")
        env = classify(make_alpha(cfg.get("alpha", "golden"), 64, bits), p)
    else:
        env = _load_env(cfg.get("env"), run.inputs, bits)
    tol = float(cfg.get("tolerance", 1e-9))
    dens = invariant_density(env, tol=max(tol, 1e-9))
    run.check("stationarity residual", dens.stationarity_residual < tol,
              f"{dens.stationarity_residual:.3e} < {tol:g}")
    x = np.arange(256) / 256
    rows = list(zip(x.tolist(), dens.rho(x).tolist()))
    return {"environment": env, "density": dens}, (["x_circle", "rho_density"], rows)


def cmd_poisson(run, cfg, bits):
    env = _load_env(cfg.get("env"), run.inputs, bits)
    psi_raw = _load_function(cfg.get("psi"), run.inputs, "psi") or function_from_spec({"cos": 1})
    tol = float(cfg.get("tolerance", 1e-9))
    depth = int(cfg.get("depth", 1))
    dens = invariant_density(env)
    psi = center(env, dens, psi_raw)
    certs = iterated_poisson(env, dens, psi, depth, tol)
    for j, c in enumerate(certs, start=1):
        run.check(f"level {j} residual", c.residual_sup < tol, f"{c.residual_sup:.3e}")
    sigma2 = clt_variance(env, dens, certs[0].phi)
    rows = [(j, c.branch, c.residual_sup, c.norm_ratio) for j, c in enumerate(certs, start=1)]
    return {"certificates": certs, "sigma2": sigma2}, \
        (["level", "branch", "residual_sup", "norm_ratio"], rows)


def _mix_one(env, x, psi, dens, ns, window):
    return walk.mixing_curve(env, x, psi, dens, ns, window)


def cmd_mix(run, cfg, bits):
    env = _load_env(cfg.get("env"), run.inputs, bits)
    psi_raw = _load_function(cfg.get("psi"), run.inputs, "psi") or function_from_spec({"cos": 1})
    ns = parse_ladder(cfg.get("ns", "256..8192"))
    xs = parse_floats(cfg.get("x", "0.3"))
    window = tuple(parse_floats(cfg["window"])) if cfg.get("window") else None
    try:
        dens = invariant_density(env)
    except EvpLabError:
        dens = None  # Cesaro estimate of nu
    psi = psi_raw
    threads = max(1, int(run.config.get("threads", 1)))
    if threads > 1 and len(xs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            curves = list(pool.map(lambda x: _mix_one(env, x, psi, dens, ns, window), xs))
    else:
        curves = [_mix_one(env, x, psi, dens, ns, window) for x in xs]
    if cfg.get("max_slope") is not None:
        for c in curves:
            run.check(f"slope x={c.x}", c.slope <= float(cfg["max_slope"]),
                      f"{c.slope:.3f}" + (" (censored bound)" if c.censored else ""))
    rows = [(c.x, n, e, nu, gap, c.slope) for c in curves for (n, e, nu, gap) in c.rows]
    return {"curves": curves}, (["x_circle", "n_steps", "expectation", "nu_psi", "gap", "fitted_slope"], rows)


def cmd_clt(run, cfg, bits):
    env = _load_env(cfg.get("env"), run.inputs, bits)
    psi_raw = _load_function(cfg.get("psi"), run.inputs, "psi") or function_from_spec({"cos": 1})
    N = int(cfg.get("N", 10 ** 4))
    trials = int(cfg.get("trials", 10 ** 4))
    seed = int(run.config.get("seed", 0))
    dens = invariant_density(env)
    psi = center(env, dens, psi_raw)
    res = walk.clt_experiment(env, psi, N, trials, seed, density=dens)
    run.seeds = {"seed": seed, "streams": list(res.streams)}
    vt = float(cfg.get("variance_tolerance", 0.05))
    kt = float(cfg.get("ks_tolerance", 0.02))
    run.check("variance", res.relative_error <= vt, f"relative error {res.relative_error:.4f}")
    run.check("ks statistic", res.ks_statistic < kt, f"{res.ks_statistic:.4f}")
    rows = [(N, trials, res.empirical_variance, res.sigma2, res.relative_error, res.ks_statistic, seed)]
    return res, (["N_steps", "trials", "empirical_variance", "sigma2", "relative_error", "ks_statistic", "seed"], rows)


def cmd_geomsum_delta(run, cfg, bits):
    s = float(cfg.get("s", 0.5))
    ns = parse_ladder(cfg.get("n", "64..4096"))
    ms = [int(v) for v in parse_floats(cfg.get("m", "0,1,2"))]
    max_ratio = float(cfg.get("max_ratio", 2.0))
    rows = []
    for m in ms:
        scaled = []
        for n in ns:
            t = geomsum.delta_table(s, n, m)
            rows.append((n, m, t.sup, t.scaled_sup))
            scaled.append(t.scaled_sup)
        ratio = max(scaled) / min(scaled)
        run.check(f"m={m} scaled sup ratio", ratio <= max_ratio, f"{ratio:.3f}")
    return {"rows": rows}, (["n_sites", "order_m", "sup_delta", "scaled_sup"], rows)


def llt_ladder_ok(errors, max_inversions=1):
    inversions = sum(1 for a, b in zip(errors, errors[1:]) if b > a)
    return inversions <= max_inversions, inversions


def cmd_geomsum_llt(run, cfg, bits):
    s = float(cfg.get("s", 0.5))
    lengths = parse_ladder(cfg.get("lengths", "8,16,...,512"))
    max_err = float(cfg.get("max_error", 0.05))
    rows = []
    errs = []
    for L in lengths:
        seg = geomsum.Segment.iid(s, L)
        e = geomsum.llt_error(seg)
        errs.append(e)
        rows.append((L, seg.T_W, seg.sigma2_W, e))
    ok, inv = llt_ladder_ok(errs)
    run.check("decreasing trend", ok, f"{inv} inversion(s)")
    run.check("final scaled error", errs[-1] < max_err, f"{errs[-1]:.4f}")
    return {"rows": rows}, (["length_sites", "T_W_steps", "sigma2_W_steps2", "scaled_llt_error"], rows)


def cmd_geomsum_tail(run, cfg, bits):
    p = float(cfg.get("p", 0.5))
    ns = parse_ladder(cfg.get("n", "64..4096"))
    mode = cfg.get("mode", "exact")
    seed = int(run.config.get("seed", 0))
    if mode == "mc":
        run.seeds = {"seed": seed, "streams": [0]}
    tails, fit = geomsum.tail_ladder(p, ns, mode, seed if mode == "mc" else None,
                                     int(cfg.get("samples", 10 ** 5)))
    run.check("c > 0", fit.c > 0, f"c = {fit.c:.4f}")
    min_r2 = float(cfg.get("min_r2", 0.9))
    run.check("regression R^2", fit.r_squared > min_r2, f"{fit.r_squared:.4f}")
    rows = [(t.n, t.tau, t.window, t.probability, fit.c) for t in tails]
    return {"rows": tails, "fit": fit}, (["n_steps", "tau_sites", "window_steps", "probability", "fitted_c"], rows)


def cmd_liouville(run, cfg, bits):
    stages = int(cfg.get("stages", 2))
    dp_cap = int(cfg.get("dp_cap", walk.STEP_CAP))
    gammas = [n + 1 for n in range(1, stages + 1)]
    sched = arithmetic.liouville_alpha(gammas, growth=True, bits=bits)
    env_cfg = cfg.get("env")
    if env_cfg is None:
        env = classify(sched.rotation, logistic())
    else:
        base = _load_env(env_cfg, run.inputs, bits)
        env = classify(sched.rotation, base.p, base.K_target)
    run.seeds = {"seed": int(run.config.get("seed", 0)), "streams": []}
    obs = liouville.build_observable(env, sched, stages, dp_cap=dp_cap,
                                     points_per_arc=int(cfg.get("points_per_arc", liouville.POINTS_PER_ARC)))
    lemmas = []
    for st in sched.stages[:len(obs.stages)]:
        r = 1.0 / (16 * st.q)
        for x in (0.0, 0.999 * r, 0.5 / st.q):
            c = liouville.lemma_certificate(env, st.q, st.p, st.gamma, x, dp_cap)
            lemmas.append(c)
            run.check(f"lemma q={st.q} x={x:.6g} support", c.support_ok is True)
            if c.exact:
                run.check(f"lemma q={st.q} x={x:.6g} bound", c.bound_holds is True, f"{c.expectation:.6f}")
    for rec in obs.stages:
        run.check(f"stage {rec.n} certified", rec.certified, f"margin {rec.min_margin:.3e}")
        run.check(f"stage {rec.n} approximation", rec.approximation_ok)
    run.check("amplitude ladder", liouville.amplitude_ladder_holds(obs))
    rows = liouville.slow_mixing_witness(env, obs, int(cfg.get("rows", 16)), dp_cap)
    run.check("witness rows", all(r.holds for r in rows if r.exact), f"{len(rows)} rows")
    table = [(r.n, r.q_tilde, r.x, r.gap, r.lower_bound, r.exact) for r in rows]
    return {"schedule": sched, "observable": obs, "lemmas": lemmas, "witness": rows}, \
        (["stage", "q_tilde_steps", "x_circle", "gap", "lower_bound", "exact"], table)


COMMANDS = {
    "alpha": cmd_alpha,
    "cohomology": cmd_cohomology,
    "density": cmd_density,
    "poisson": cmd_poisson,
    "mix": cmd_mix,
    "clt": cmd_clt,
    "geomsum.delta": cmd_geomsum_delta,
    "geomsum.llt": cmd_geomsum_llt,
    "geomsum.tail": cmd_geomsum_tail,
    "liouville": cmd_liouville,
}


# argument parser ---------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with command options")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--precision-bits", type=int, dest="precision_bits")
    common.add_argument("--out-dir", dest="out_dir", default=".")
    common.add_argument("--out", help="output file name (relative to --out-dir)")
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", nargs="?", const=True, metavar="PATH",
                     help="write JSON (optionally to PATH)")
    fmt.add_argument("--csv", nargs="?", const=True, metavar="PATH",
                     help="write CSV (optionally to PATH)")

    parser = argparse.ArgumentParser(prog="evp-lab", description="Quasi-periodic random walk experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("alpha", parents=[common], help="continued fraction and Diophantine profile")
    p.add_argument("--alpha", "--value", dest="alpha")
    p.add_argument("--depth", type=int)
    p.add_argument("--gammas", help="build a Liouville schedule, e.g. 2,3")
    p.add_argument("--q-min", dest="q_min", type=int)
    p.add_argument("--no-growth", dest="growth", action="store_const", const=False)

    p = sub.add_parser("cohomology", parents=[common], help="solve phi(x+alpha) - phi(x) = psi")
    p.add_argument("--alpha")
    p.add_argument("--psi")
    p.add_argument("--damped", type=float, help="solve lam*k(x) - k(x-alpha) = psi instead")
    p.add_argument("--tolerance", "--tol", dest="tolerance", type=float)

    p = sub.add_parser("density", parents=[common], help="invariant density")
    p.add_argument("--env")
    p.add_argument("--alpha", help="with --p, an alternative to --env")
    p.add_argument("--p", help="p as a function file or inline JSON")
    p.add_argument("--tolerance", "--tol", dest="tolerance", type=float)

    p = sub.add_parser("poisson", parents=[common], help="Poisson certificates")
    p.add_argument("--env")
    p.add_argument("--psi")
    p.add_argument("--depth", type=int)
    p.add_argument("--tolerance", "--tol", dest="tolerance", type=float)

    p = sub.add_parser("mix", parents=[common], help="exact mixing curve")
    p.add_argument("--env")
    p.add_argument("--psi")
    p.add_argument("--x", help="start point(s), comma separated")
    p.add_argument("--ns", help="step ladder, e.g. 256,512,...,8192 or 256..8192")
    p.add_argument("--window", help="fit window lo,hi")
    p.add_argument("--max-slope", dest="max_slope", type=float)

    p = sub.add_parser("clt", parents=[common], help="Monte Carlo CLT experiment")
    p.add_argument("--env")
    p.add_argument("--psi")
    p.add_argument("--N", type=int)
    p.add_argument("--trials", type=int)

    g = sub.add_parser("geomsum", help="geometric-sum diagnostics")
    gsub = g.add_subparsers(dest="geomsum_command", required=True)
    p = gsub.add_parser("delta", parents=[common])
    p.add_argument("--s", type=float)
    p.add_argument("--n")
    p.add_argument("--m")
    p = gsub.add_parser("llt", parents=[common])
    p.add_argument("--s", type=float)
    p.add_argument("--lengths")
    p = gsub.add_parser("tail", parents=[common])
    p.add_argument("--p", type=float)
    p.add_argument("--n")
    p.add_argument("--mode", choices=["exact", "mc"])
    p.add_argument("--samples", type=int)

    p = sub.add_parser("liouville", parents=[common], help="slow-mixing construction")
    p.add_argument("--env")
    p.add_argument("--stages", type=int)
    p.add_argument("--dp-cap", dest="dp_cap", type=int)
    p.add_argument("--points-per-arc", dest="points_per_arc", type=int)
    p.add_argument("--rows", type=int)
    return parser


_NOT_CONFIG = {"command", "geomsum_command", "config", "out_dir", "out", "format", "json", "csv"}


def resolve_config(command, args):
    """Defaults < config file < environment variables < explicit flags."""
    allowed = SCHEMAS[command] | GLOBAL_KEYS
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from err
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - allowed)
        if unknown:
            raise ConfigError(f"unknown configuration key(s) for {command}: {', '.join(unknown)}")
        cfg.update(file_cfg)
    if "EVP_LAB_THREADS" in os.environ:
        cfg["threads"] = int(os.environ["EVP_LAB_THREADS"])
    if "EVP_LAB_PRECISION_BITS" in os.environ:
        cfg["precision_bits"] = int(os.environ["EVP_LAB_PRECISION_BITS"])
    for key, value in vars(args).items():
        if key in _NOT_CONFIG or value is None:
            continue
        cfg[key] = value
    cfg.setdefault("seed", 0)
    cfg.setdefault("threads", os.cpu_count() or 1)
    cfg.setdefault("precision_bits", arithmetic.DEFAULT_PRECISION_BITS)
    return cfg


def run(command, config, args):
    """Execute one command; returns the exit status."""
    r = Run(command, args, config)
    r.seeds = {"seed": int(config.get("seed", 0)), "streams": []}
    bits = int(config["precision_bits"])
    payload, table = COMMANDS[command](r, config, bits)
    r.write(payload, table)
    return EXIT_OK if r.passed else EXIT_TOLERANCE


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command if args.command != "geomsum" else f"geomsum.{args.geomsum_command}"
    args.format = "csv" if args.csv else "json"
    for choice in (args.csv, args.json):
        if isinstance(choice, str) and not args.out:
            args.out = choice
    try:
        config = resolve_config(command, args)
        return run(command, config, args)
    except ConfigError as err:
        print(json.dumps({"error": "config", "command": command, "message": str(err)}), file=sys.stderr)
        return EXIT_CONFIG
    except EvpLabError as err:
        print(json.dumps({"error": type(err).__name__, "command": command, "message": str(err)}),
              file=sys.stderr)
        return EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
