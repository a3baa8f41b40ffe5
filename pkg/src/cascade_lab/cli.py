"""Command-line front end.

    cascade-lab binary analyze|sim ...
    cascade-lab cont sim|rate|opt-eps|series ...
    cascade-lab verify ...

Exit codes: 0 success, 1 verification failure, 2 usage or parameter error.
Scalars are printed with 17 significant digits; trajectories go to CSV and
scalar reports to JSON.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import binary_model as bm
from . import continuous_model as cm
from . import montecarlo as mc
from .core import BinaryParams, BudgetSpec, NoCascadeError, ParameterError, WorldState
from .privacy_verify import Notion, certify

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
TRAJECTORY_HEADER = ("rep", "n", "eps_n", "s", "a", "x", "l")
RATE_HEADER = ("n", "mean_l", "f_n", "ratio")
SWEEP_HEADER = ("eps", "k", "p_correct")
THIN_ABOVE = 10_000


class UsageError(Exception):
    pass


# --- formatting -----------------------------------------------------------


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _jsonable(obj):
    """Floats become raw 17-digit tokens; non-finite values become strings."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return bool(obj) if isinstance(obj, np.bool_) else obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    x = float(obj)
    if not math.isfinite(x):
        return fmt(x)
    return _Raw(fmt(x))


class _Raw(float):
    def __new__(cls, text):
        obj = super().__new__(cls, float(text))
        obj.text = text
        return obj

    def __repr__(self):
        return self.text


def dump_json(obj) -> str:
    # json uses float.__repr__, which _Raw overrides with the 17-digit text
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


# --- config ---------------------------------------------------------------

CONFIG_KEYS = {
    "model": {"family", "p", "sigma", "mechanism", "budget", "a", "u"},
    "sim": {"agents", "replications", "seed", "horizon", "theta"},
    "output": {"format", "path", "checkpoints"},
}
# config key -> argparse dest
CONFIG_DEST = {
    ("model", "p"): "p",
    ("model", "sigma"): "sigma",
    ("model", "mechanism"): "mech",
    ("model", "budget"): "budget",
    ("model", "a"): "a",
    ("model", "u"): "u",
    ("model", "family"): "family",
    ("sim", "agents"): "agents",
    ("sim", "replications"): "reps",
    ("sim", "seed"): "seed",
    ("sim", "horizon"): "horizon",
    ("sim", "theta"): "theta",
    ("output", "format"): "format",
    ("output", "path"): "out",
    ("output", "checkpoints"): "checkpoints",
}


@dataclass
class RunConfig:
    """Values read from a config file, keyed by argparse destination."""

    values: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        values = {}
        for section in parser.sections():
            if section not in CONFIG_KEYS:
                raise UsageError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in CONFIG_KEYS[section]:
                    raise UsageError(f"unknown config key {section}.{key}")
                values[CONFIG_DEST[(section, key)]] = raw.strip()
        return cls(values)


def _apply_config(args, cfg: RunConfig):
    """Fill unset flags from the config; flags given on the command line win."""
    family = cfg.values.get("family")
    if family and family not in ("binary", "continuous"):
        raise UsageError(f"model.family must be binary or continuous, got {family!r}")
    for dest, raw in cfg.values.items():
        if dest == "budget":
            if hasattr(args, "eps"):
                _budget_into(args, raw)
        elif dest != "family" and hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, raw)


def _budget_into(args, raw: str):
    raw = raw.strip().lower()
    if raw.startswith("uniform"):
        _, _, rng = raw.partition(":")
        if getattr(args, "eps_dist", None) is None and getattr(args, "eps", None) is None:
            args.eps_dist = rng
    elif getattr(args, "eps", None) is None and getattr(args, "eps_dist", None) is None:
        args.eps = raw


# --- argument coercion ----------------------------------------------------


def _num(name, raw, cast=float):
    if raw is None:
        return None
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise UsageError(f"--{name} expects a number, got {raw!r}") from None


def _int(name, raw, default=None, minimum=None):
    val = _num(name, raw, lambda v: int(float(v)) if float(v).is_integer() else int(v))
    val = default if val is None else val
    if val is not None and minimum is not None and val < minimum:
        raise UsageError(f"--{name} must be >= {minimum}, got {val}")
    return val


def _pair(name, raw):
    parts = [p for p in str(raw).replace(" ", "").split(",") if p]
    if len(parts) != 2:
        raise UsageError(f"--{name} expects lo,hi")
    return _num(name, parts[0]), _num(name, parts[1])


def _budget(args, required=True) -> BudgetSpec | None:
    if args.eps is not None and args.eps_dist is not None:
        raise UsageError("give either --eps or --eps-dist, not both")
    if args.eps_dist is not None:
        lo, hi = _pair("eps-dist", args.eps_dist)
        return BudgetSpec.uniform(lo, hi)
    if args.eps is not None:
        return BudgetSpec.fixed(_num("eps", args.eps))
    if required:
        raise UsageError("a privacy budget is required (--eps or --eps-dist)")
    return None


def _mechanism(args, budget_is_notion=False) -> cm.Mechanism:
    sigma = _num("sigma", args.sigma)
    if sigma is None:
        raise UsageError("--sigma is required")
    kind = (args.mech or "smooth").lower()
    if kind in ("none", "truthful"):
        if not budget_is_notion and (args.eps is not None or args.eps_dist is not None):
            raise UsageError("--mech none takes no budget")
        return cm.Mechanism.truthful(sigma)
    if kind == "constant":
        u = _num("u", getattr(args, "u", None))
        if u is None:
            b = _budget(args)
            if b.is_distributional:
                raise UsageError("constant flip needs a fixed --eps or --u")
            u = bm.flip_prob(b)
        return cm.Mechanism.constant_flip(u, sigma)
    budget = _budget(args)
    if kind == "smooth":
        return cm.Mechanism.from_budget(budget, sigma)
    if kind == "staircase":
        a = _num("a", args.a)
        if a is None:
            raise UsageError("--mech staircase requires --a")
        if budget.is_distributional:
            raise UsageError("staircase needs a fixed --eps")
        return cm.Mechanism.staircase(budget.epsilon, a, sigma)
    raise UsageError(f"unknown mechanism {args.mech!r}")


def _theta(args):
    raw = getattr(args, "theta", None)
    if raw is None:
        return WorldState.PLUS
    if str(raw).lower() in ("both", "alternate"):
        return None
    return WorldState.coerce(_num("theta", raw, int))


def _sweep(raw):
    parts = [p for p in str(raw).split(",") if p]
    if len(parts) != 3:
        raise UsageError("--sweep expects lo,hi,steps")
    lo, hi = _num("sweep", parts[0]), _num("sweep", parts[1])
    steps = _int("sweep", parts[2], minimum=2)
    if not 0 < lo < hi:
        raise UsageError("--sweep needs 0 < lo < hi")
    return np.linspace(lo, hi, steps)


def _checkpoint_list(raw, agents):
    if raw is None:
        return None
    pts = sorted({_int("checkpoints", p, minimum=1) for p in str(raw).split(",") if p.strip()})
    if pts and pts[-1] > agents:
        raise UsageError("checkpoints must not exceed the number of agents")
    return pts


# --- output ---------------------------------------------------------------


class _Sink:
    def __init__(self, path):
        self.path = path

    def __enter__(self):
        if self.path in (None, "-"):
            self.fh = sys.stdout
        else:
            self.fh = open(self.path, "w", newline="")
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not sys.stdout:
            self.fh.close()
        return False


def _write_csv(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])


def _emit(args, header, rows, report=None):
    """CSV (or JSON) rows to --out / stdout; the report JSON goes to stdout, or stderr when rows use stdout."""
    fmt_kind = (args.format or "csv").lower()
    if fmt_kind not in ("csv", "json"):
        raise UsageError(f"--format must be csv or json, got {args.format!r}")
    rows = list(rows)
    if fmt_kind == "json":
        doc = {"columns": list(header), "rows": [list(r) for r in rows]}
        if report is not None:
            doc["summary"] = report
        with _Sink(args.out) as fh:
            fh.write(dump_json(doc) + "\n")
        if args.out not in (None, "-") and report is not None:
            print(dump_json(report))
        return
    with _Sink(args.out) as fh:
        _write_csv(fh, header, rows)
    if report is not None:
        stream = sys.stderr if args.out in (None, "-") else sys.stdout
        print(dump_json(report), file=stream)


def _report_only(args, report):
    if args.out not in (None, "-"):
        with open(args.out, "w") as fh:
            fh.write(dump_json(report) + "\n")
    print(dump_json(report))


def _record_points(agents, full):
    if full or agents <= THIN_ABOVE:
        return np.arange(1, agents + 1)
    return mc.geometric_checkpoints(agents)


# --- commands -------------------------------------------------------------


def _binary_params(args) -> BinaryParams:
    p = _num("p", args.p)
    if p is None:
        raise UsageError("--p is required")
    budget = _budget(args, required=False) or BudgetSpec.infinite()
    return BinaryParams(p, budget)


def _binary_report(params: BinaryParams, k_max: int) -> dict:
    an = bm.analyze(params)
    table = bm.epsilon_breakpoints(params.p, max(k_max, 3))
    u_point = None if params.budget.is_distributional else bm.flip_prob(params.budget)
    return {
        "p": params.p,
        "budget": params.budget.describe(),
        "u": u_point,
        "u_bar": an.u,
        "u_tilde": an.u_tilde,
        "rho": an.rho,
        "k": an.k,
        "p_correct_cascade": an.p_correct_cascade,
        "breakpoints": [{"k": k, "v_k": v, "eps_k": e} for k, v, e in table],
    }


def cmd_binary_analyze(args) -> int:
    params = _binary_params(args)
    if args.sweep is not None:
        rows = []
        for e in _sweep(args.sweep):
            an = bm.analyze(params.p, BudgetSpec.fixed(e))
            rows.append((e, an.k, an.p_correct_cascade))
        _emit(args, SWEEP_HEADER, rows)
        return EXIT_OK
    _report_only(args, _binary_report(params, _int("k-max", args.k_max, 8, 3)))
    return EXIT_OK


def cmd_binary_sim(args) -> int:
    params = _binary_params(args)
    agents = _int("agents", args.agents, 1000, 1)
    reps = _int("reps", args.reps, 1, 1)
    seed = _int("seed", args.seed, 0, 0)
    theta = _theta(args) or WorldState.PLUS
    keep = _record_points(agents, args.full)
    rows, sides = [], []
    for r in range(reps):
        traj, summ = bm.simulate_binary(params, theta, agents, seed, replication=r)
        sides.append(summ.cascade or 0)
        for i in keep - 1:
            rows.append((r, int(traj.n[i]), traj.eps_n[i], traj.s[i], int(traj.a[i]), int(traj.x[i]), traj.l[i]))
    sides = np.asarray(sides)
    an = bm.analyze(params)
    report = {
        "replications": reps,
        "agents": agents,
        "theta": int(theta),
        "k": an.k,
        "p_correct_cascade": an.p_correct_cascade,
        "correct_cascade_frac": float(np.mean(sides == int(theta))),
        "wrong_cascade_frac": float(np.mean(sides == -int(theta))),
        "no_cascade_frac": float(np.mean(sides == 0)),
    }
    _emit(args, TRAJECTORY_HEADER, rows, report)
    return EXIT_OK


def _sim_settings(args):
    agents = _int("agents", args.agents, None, 1)
    horizon = _int("horizon", args.horizon, None, 1)
    if agents is not None and horizon is not None and agents != horizon:
        raise UsageError("--agents and --horizon disagree; the horizon is the number of agents simulated")
    agents = agents or horizon or 1000
    return agents, _int("reps", args.reps, 1, 1), _int("seed", args.seed, 0, 0)


def cmd_cont_sim(args) -> int:
    mech = _mechanism(args)
    agents, reps, seed = _sim_settings(args)
    theta = _theta(args)
    spec = mc.SimSpec(mech, horizon=agents, theta=theta, checkpoints=_checkpoint_list(args.checkpoints, agents))
    keep = _record_points(agents, args.full)
    st = mc.run_ensemble(spec, reps, seed, record=keep)
    rec = st.records
    rows = []
    for i, r in enumerate(st.reps):
        for j, n in enumerate(rec["n"]):
            rows.append((int(r), int(n), rec["eps_n"][i, j], rec["s"][i, j], int(rec["a"][i, j]), int(rec["x"][i, j]), rec["l"][i, j]))
    pooled = st.tau_stats()
    report = {
        "mechanism": mech.describe(),
        "sigma": mech.sigma,
        "agents": agents,
        "replications": reps,
        "seed": seed,
        "tau_mean": pooled["tau_mean"],
        "tau_censored_frac": pooled["tau_censored_frac"],
        "w_mean": pooled["w_mean"],
        "w_censored_frac": pooled["w_censored_frac"],
        "per_theta": {
            str(int(t)): st.tau_stats(t) for t in (WorldState.PLUS, WorldState.MINUS) if np.any(st.theta == int(t))
        },
    }
    _emit(args, TRAJECTORY_HEADER, rows, report)
    return EXIT_OK


def _reference_curve(mech: cm.Mechanism) -> cm.RateCurve:
    k = mech.kind
    if k is cm.MechanismKind.SMOOTH:
        return cm.RateCurve(cm.RateKind.HOMOGENEOUS_LOG, mech.sigma, eps=mech.eps)
    if k is cm.MechanismKind.STAIRCASE:
        return cm.RateCurve(cm.RateKind.PUFFERFISH_LOG, mech.sigma, eps=mech.eps, a=mech.a)
    if k is cm.MechanismKind.HETERO_SMOOTH:
        return cm.RateCurve(cm.RateKind.HETERO_SQRT, mech.sigma)
    if k is cm.MechanismKind.TRUTHFUL:
        return cm.RateCurve(cm.RateKind.NONPRIVATE_SQRT_LOG, mech.sigma)
    raise UsageError("no reference rate curve for the constant-flip mechanism")


def cmd_cont_rate(args) -> int:
    mech = _mechanism(args)
    agents, reps, seed = _sim_settings(args)
    cps = _checkpoint_list(args.checkpoints, agents) or mc.geometric_checkpoints(agents, per_decade=10)
    st = mc.run_ensemble(mc.SimSpec(mech, horizon=agents, theta=_theta(args), checkpoints=tuple(cps)), reps, seed)
    curve = _reference_curve(mech)
    f = np.atleast_1d(cm.rate_curve_value(curve, st.checkpoints))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = st.mean_l / f
    _emit(args, RATE_HEADER, zip(st.checkpoints, st.mean_l, f, ratio))
    return EXIT_OK


def cmd_cont_opt_eps(args) -> int:
    sigma = _num("sigma", args.sigma)
    if sigma is None:
        raise UsageError("--sigma is required")
    eps, obj = cm.optimal_epsilon(sigma, _num("lo", args.lo) or 0.05, _num("hi", args.hi), tol=1e-8)
    _report_only(args, {"sigma": sigma, "eps_star": eps, "objective": obj})
    return EXIT_OK


def cmd_cont_series(args) -> int:
    sigma = _num("sigma", args.sigma)
    eps = _num("eps", args.eps)
    if sigma is None or eps is None:
        raise UsageError("--eps and --sigma are required")
    if args.a is not None:
        res = cm.pufferfish_stopping_series(eps, _num("a", args.a), sigma)
    else:
        res = cm.expected_stopping_series(eps, sigma)
    _report_only(args, {"exponent": res.exponent, "finite": res.finite, "value_shape": res.value_shape, "log_value_shape": res.log_value_shape})
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.eps_dist is not None:
        raise UsageError("verify takes a fixed --eps")
    notion = Notion.coerce(args.notion)
    eps = _num("eps", args.eps)
    if eps is None:
        raise UsageError("--eps is required")
    if args.sigma is None:
        args.sigma = "1"
    if notion is Notion.PUFFERFISH and args.a is None:
        raise UsageError("pufferfish needs the adjacency distance --a")
    mech = _mechanism(args, budget_is_notion=True)
    l_grid = [_num("l-grid", v) for v in str(args.l_grid).split(",") if v.strip()]
    rep = certify(
        mech,
        notion,
        eps,
        adjacency_a=_num("a", args.a),
        l_grid=l_grid,
        pair_samples=_int("trials", args.trials, 10_000, 1),
        seed=_int("seed", args.seed, 0, 0),
    )
    doc = rep.as_dict()
    doc["mechanism"] = mech.describe()
    _report_only(args, doc)
    return EXIT_OK if rep.passed else EXIT_FAIL


# --- parser ---------------------------------------------------------------


def _common(p, budget=True, sim=False, out=True):
    if budget:
        p.add_argument("--eps", default=None, help="fixed privacy budget (inf for none)")
        p.add_argument("--eps-dist", dest="eps_dist", default=None, metavar="LO,HI", help="uniform budget law")
    if sim:
        p.add_argument("--agents", default=None)
        p.add_argument("--reps", default=None)
        p.add_argument("--seed", default=None)
        p.add_argument("--horizon", default=None)
        p.add_argument("--theta", default=None, help="+1, -1 or both (alternating by replication)")
        p.add_argument("--full", action="store_true", help="write every agent even past 10^4 agents")
        p.add_argument("--checkpoints", default=None, metavar="N1,N2,...")
    if out:
        p.add_argument("--out", default=None)
        p.add_argument("--format", default=None, choices=("csv", "json"))


def _cont_model(p):
    p.add_argument("--sigma", default=None)
    p.add_argument("--mech", default=None, choices=("smooth", "staircase", "constant", "none"))
    p.add_argument("--a", default=None, help="staircase step width / Pufferfish adjacency")
    p.add_argument("--u", default=None, help="constant flip probability")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cascade-lab", description="Privacy-aware sequential learning toolkit")
    ap.add_argument("--config", default=None, help="INI file with [model], [sim], [output] sections")
    groups = ap.add_subparsers(dest="group", required=True)

    binary = groups.add_parser("binary", help="binary-signal cascades").add_subparsers(dest="cmd", required=True)
    p = binary.add_parser("analyze")
    p.add_argument("--p", default=None)
    p.add_argument("--sweep", default=None, metavar="LO,HI,STEPS")
    p.add_argument("--k-max", dest="k_max", default=None)
    _common(p)
    p.set_defaults(func=cmd_binary_analyze)
    p = binary.add_parser("sim")
    p.add_argument("--p", default=None)
    _common(p, sim=True)
    p.set_defaults(func=cmd_binary_sim)

    cont = groups.add_parser("cont", help="Gaussian-signal learning").add_subparsers(dest="cmd", required=True)
    for name, func in (("sim", cmd_cont_sim), ("rate", cmd_cont_rate)):
        p = cont.add_parser(name)
        _cont_model(p)
        _common(p, sim=True)
        p.set_defaults(func=func)
    p = cont.add_parser("opt-eps")
    p.add_argument("--sigma", default=None)
    p.add_argument("--lo", default=None)
    p.add_argument("--hi", default=None)
    _common(p, budget=False)
    p.set_defaults(func=cmd_cont_opt_eps)
    p = cont.add_parser("series")
    p.add_argument("--sigma", default=None)
    p.add_argument("--a", default=None)
    p.add_argument("--eps", default=None)
    _common(p, budget=False)
    p.set_defaults(func=cmd_cont_series)

    p = groups.add_parser("verify", help="empirical privacy certification")
    _cont_model(p)
    p.add_argument("--notion", required=True, choices=[n.value for n in Notion])
    p.add_argument("--trials", default=None, help="sampled signal pairs per belief value")
    p.add_argument("--seed", default=None)
    p.add_argument("--l-grid", dest="l_grid", default="-3,0,3")
    _common(p)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            _apply_config(args, RunConfig.load(args.config))
        return args.func(args)
    except (UsageError, ParameterError, NoCascadeError) as exc:
        print(f"cascade-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
