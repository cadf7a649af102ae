"""Command-line interface.

Every command builds an :class:`ExperimentSpec` from its flags, validates it,
runs the wrapped solver or simulator and writes CSV (header row first) or
JSON (with ``schema_version`` and the spec echoed for provenance). A JSON
output can be replayed with ``supermarket replay FILE``.

Exit codes: 0 success, 2 invalid arguments, 3 numerical failure or
non-convergence.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import equilibrium as eq
from . import hetero
from . import mean_field as mf
from ._validation import check_arrival_rate
from .exceptions import NumericalError
from .sim import (
    SCHEMA_VERSION,
    SimConfig,
    run_coupled_sim,
    run_equilibrium_sim,
    two_server_externality,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

SEED_ENV = "SUPERMARKET_SEED"


@dataclass
class ExperimentSpec:
    """Command name, parameters, output target and format."""

    command: str
    params: dict
    output: str = None
    format: str = "csv"

    def to_dict(self):
        return {"command": self.command, "params": dict(self.params),
                "output": self.output, "format": self.format}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"command", "params", "output", "format"}
        if unknown:
            raise ValueError(f"unknown spec keys: {sorted(unknown)}")
        spec = cls(d["command"], dict(d["params"]), d.get("output"), d.get("format", "csv"))
        spec.validate()
        return spec

    def validate(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        cmd = COMMANDS[self.command]
        if self.format not in cmd.formats:
            raise ValueError(f"{self.command} writes {'/'.join(cmd.formats)}, not {self.format!r}")
        unknown = set(self.params) - set(cmd.keys)
        if unknown:
            raise ValueError(f"unknown parameters for {self.command}: {sorted(unknown)}")
        cmd.check(self.params)


@dataclass
class Output:
    """What a command produced: CSV rows, a JSON payload and stderr notes."""

    header: list = None
    rows: list = field(default_factory=list)
    payload: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    text: list = field(default_factory=list)
    failed: str = None


# -- parameter parsing ------------------------------------------------------


def parse_mu(text, l_max=None):
    """``"2.5"`` is a real strategy, ``"0.2,0.8"`` a mass vector over 1..n."""
    if isinstance(text, (list, tuple)):
        return mf.as_distribution([float(v) for v in text], l_max)
    text = str(text).strip()
    if "," in text:
        masses = [float(v) for v in text.split(",") if v.strip()]
        if l_max is not None and len(masses) < l_max:
            masses += [0.0] * (l_max - len(masses))
        return mf.SamplingDistribution(masses)
    x = float(text)
    return mf.SamplingDistribution.from_real(x, l_max if l_max is not None else max(1, math.ceil(x)))


def parse_range(text):
    """``"10:20"`` -> (10, 20), inclusive."""
    try:
        a, b = (int(v) for v in str(text).split(":"))
    except ValueError:
        raise ValueError(f"expected a range like 10:20, got {text!r}") from None
    if a < 1 or b < a:
        raise ValueError(f"range must satisfy 1 <= a <= b, got {text!r}")
    return a, b


def _game(p):
    if p.get("cs_over_c") is None and p.get("cs") is None:
        raise ValueError("give --cs or --cs-over-c")
    if p.get("cs_over_c") is not None:
        return mf.GameParams(p["lambda"], 1.0, p["cs_over_c"], p["lmax"])
    return mf.GameParams(p["lambda"], p.get("c", 1.0), p.get("cs", 0.0), p["lmax"])


def _density(p):
    cfg = p.get("density") or {"kind": "uniform", "c_max": 1.0}
    return hetero.CostDensity.from_config(cfg)


def _check_game(p):
    _game(p)


# -- commands ---------------------------------------------------------------


def run_tail(p):
    mu = parse_mu(p["mu"], p.get("lmax"))
    tail = mf.tail_distribution(mu, p["lambda"], p.get("tol", mf.DEFAULT_TOL))
    rows = [(k, float(r)) for k, r in enumerate(tail.r)]
    note = f"truncation K={tail.truncation_k} bound={tail.truncation_bound:.3e}"
    return Output(["k", "r"], rows, {"truncation_k": tail.truncation_k,
                                     "truncation_bound": tail.truncation_bound,
                                     "r": tail.r.tolist()}, [note])


def run_nash(p):
    params = _game(p)
    tol = p.get("tol", mf.DEFAULT_TOL)
    report = eq.enumerate_nash(params, q_grid=p.get("q_grid", 1000), tol=tol)
    found = eq.find_nash(params, tol)
    payload = report.to_dict()
    payload["find_nash"] = found
    payload["pure"] = report.pure
    payload["mixed"] = report.mixed
    rows = [(e.value, e.kind.value) for e in report.equilibria]
    return Output(["L", "kind"], rows, payload, list(report.warnings))


def run_brfig(p):
    params = _game(p)
    per_unit = p.get("points", 100)
    xs = np.linspace(1.0, params.l_max, per_unit * (params.l_max - 1) + 1)
    rows = eq.best_response_curve(params, xs, p.get("tol", mf.DEFAULT_TOL))
    return Output(["x", "br_lo", "br_hi"], rows, {"rows": [list(r) for r in rows]})


def run_vfig(p):
    lam = p["lambda"]
    tol = p.get("tol", mf.DEFAULT_TOL)
    log = p.get("log", False)
    if p.get("opponent_range"):
        l = p["l"]
        a, b = parse_range(p["opponent_range"])
        l_max = max(b, l + 1, p.get("lmax") or 1)
        rows = [(o, eq.v_against(l, float(o), lam, l_max, tol)) for o in range(a, b + 1)]
        header = ["opponent_L", "V"]
    else:
        l_max = p["lmax"]
        ls = [p["l"]] if p.get("l") else list(range(1, l_max))
        qs = np.linspace(0.0, 1.0, p.get("points", 101))
        rows = []
        for l in ls:
            vs = eq.v_curve(l, lam, l_max, qs, tol)
            rows += [(l, float(q), float(v)) for q, v in zip(qs, vs)]
        header = ["L", "q", "V"]
    if log:
        rows = [r + (math.log(r[-1]) if r[-1] > 0 else -math.inf,) for r in rows]
        header = header + ["log_V"]
    return Output(header, rows, {"header": header, "rows": [list(r) for r in rows]})


def run_socopt(p):
    params = _game(p)
    opt = eq.social_optimum(params, refine_tol=p.get("refine_tol", 1e-8), tol=p.get("tol", mf.DEFAULT_TOL))
    return Output(["s", "cost"], [(opt.s, opt.cost)], opt.to_dict())


def run_hetero(p):
    f = _density(p)
    init = parse_mu(p["init"], p["lmax"]) if p.get("init") else None
    res = hetero.hetero_nash(p["lambda"], p["cs"], p["lmax"], f, damping=p.get("damping", 0.5),
                             max_iter=p.get("max_iter", 10000), init=init)
    rows = [(j, float(c)) for j, c in enumerate(res.strategy.thresholds)]
    out = Output(["j", "c_j"], rows, res.to_dict())
    if not res.verified:
        out.failed = f"hetero_nash status {res.status}, threshold gap {res.max_threshold_gap:.3e}"
    return out


def _sim_config(p):
    mu = parse_mu(p["mu"], p.get("lmax"))
    return SimConfig(n=p["n"], lambda_=p["lambda"], mu=mu, horizon=p["horizon"],
                     warmup=p.get("warmup"), seed=p["seed"],
                     tagged_fraction=p.get("tagged_fraction", 0.01), tagged_l=p.get("tagged_l"),
                     n_batches=p.get("batches", 20))


def run_simulate(p):
    res = run_equilibrium_sim(_sim_config(p))
    return Output(["k", "r_hat", "stderr"], res.tail_rows(), res.to_dict())


def run_couple(p):
    l_max = p.get("lmax")
    mu1 = parse_mu(p["mu1"], l_max)
    mu2 = parse_mu(p["mu2"], l_max)
    if mu1.l_max != mu2.l_max:
        l_max = max(mu1.l_max, mu2.l_max)
        mu1, mu2 = parse_mu(p["mu1"], l_max), parse_mu(p["mu2"], l_max)
    cfg = SimConfig(n=p["n"], lambda_=p["lambda"], mu=[1.0], horizon=p["horizon"],
                    warmup=p.get("warmup"), seed=p["seed"])
    rep = run_coupled_sim(cfg, mu1, mu2, strict=False)
    out = Output(list(rep.to_dict()), [tuple(rep.to_dict().values())], rep.to_dict())
    out.text = [f"violations: {rep.violations}", f"events: {rep.events}",
                f"mean_queue_length_1: {rep.mean_queue_length_1:.6f}",
                f"mean_queue_length_2: {rep.mean_queue_length_2:.6f}"]
    if rep.violations:
        out.failed = f"{rep.violations} coupling order violations"
    return out


def run_externality(p):
    rep = two_server_externality(p["lambda"], p["horizon"], p.get("warmup"), p["seed"])
    d = rep.to_dict()
    row = (rep.lambda_, rep.w_hat.mean, rep.w_hat.stderr, rep.mm2_wait, rep.mm1pair_min2_wait,
           rep.z_score, rep.exceeds_mm2)
    return Output(["lambda", "w_hat", "stderr", "mm2_wait", "mm1pair_min2_wait", "z", "exceeds_mm2"],
                  [row], d)


def _check_tail(p):
    check_arrival_rate(p["lambda"])
    parse_mu(p["mu"], p.get("lmax"))
    mf.truncation_index(p["lambda"], p.get("tol", mf.DEFAULT_TOL))


def _check_nash(p):
    _game(p)
    if p.get("q_grid", 1000) < 100:
        raise ValueError("q_grid must be at least 100")


def _check_vfig(p):
    mf.truncation_index(p["lambda"])
    if p.get("opponent_range"):
        if not p.get("l"):
            raise ValueError("--opponent-range needs --l")
        parse_range(p["opponent_range"])
    elif not p.get("lmax") or p["lmax"] < 2:
        raise ValueError("q curves need --lmax >= 2")
    elif p.get("l") and not 1 <= p["l"] < p["lmax"]:
        raise ValueError(f"--l must lie in 1..lmax-1, got {p['l']}")


def _check_hetero(p):
    mf.truncation_index(p["lambda"])
    _density(p)
    if p.get("init"):
        parse_mu(p["init"], p["lmax"])


def _check_couple(p):
    SimConfig(n=p["n"], lambda_=p["lambda"], mu=[1.0], horizon=p["horizon"],
              warmup=p.get("warmup"), seed=p["seed"])
    parse_mu(p["mu1"], p.get("lmax"))
    parse_mu(p["mu2"], p.get("lmax"))


def _check_externality(p):
    SimConfig(n=2, lambda_=p["lambda"], mu=[0.0, 1.0], horizon=p["horizon"],
              warmup=p.get("warmup"), seed=p["seed"])


@dataclass(frozen=True)
class Command:
    run: object
    check: object
    keys: tuple
    formats: tuple
    help: str


_GAME_KEYS = ("lambda", "c", "cs", "cs_over_c", "lmax", "tol")
_SIM_KEYS = ("n", "lambda", "mu", "lmax", "horizon", "warmup", "seed")

COMMANDS = {
    "tail": Command(run_tail, _check_tail, ("lambda", "mu", "lmax", "tol"), ("csv", "json"),
                    "mean-field tail r(k)"),
    "nash": Command(run_nash, _check_nash, _GAME_KEYS + ("q_grid",), ("json", "csv"),
                    "all Nash equilibria and the monotonicity diagnosis"),
    "brfig": Command(run_brfig, _check_game, _GAME_KEYS + ("points",), ("csv", "json"),
                     "best response against a real population strategy"),
    "vfig": Command(run_vfig, _check_vfig, ("lambda", "l", "lmax", "opponent_range", "points", "log", "tol"),
                    ("csv", "json"), "marginal value of sampling curves"),
    "socopt": Command(run_socopt, _check_game, _GAME_KEYS + ("refine_tol",), ("json", "csv"),
                      "symmetric social optimum"),
    "hetero": Command(run_hetero, _check_hetero,
                      ("lambda", "cs", "lmax", "density", "damping", "max_iter", "init"), ("json", "csv"),
                      "heterogeneous-cost equilibrium thresholds"),
    "simulate": Command(run_simulate, lambda p: _sim_config(p),
                        _SIM_KEYS + ("tagged_fraction", "tagged_l", "batches"), ("json", "csv"),
                        "finite-N simulation"),
    "couple": Command(run_couple, _check_couple, ("n", "lambda", "mu1", "mu2", "lmax", "horizon", "warmup", "seed"),
                      ("text", "json", "csv"), "coupled pair with pathwise order check"),
    "externality": Command(run_externality, _check_externality, ("lambda", "horizon", "warmup", "seed"),
                           ("json", "csv"), "two-server join-the-shorter example"),
}


# -- argument parser --------------------------------------------------------


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _game_flags(sp, lmax_required=True):
    sp.add_argument("--lambda", dest="lambda_", type=float, required=True)
    sp.add_argument("--c", type=float, default=1.0, help="waiting cost per unit time")
    sp.add_argument("--cs", type=float, default=None, help="cost per sampled queue")
    sp.add_argument("--cs-over-c", type=float, default=None, help="cost ratio; overrides --c/--cs")
    sp.add_argument("--lmax", type=int, required=lmax_required)
    sp.add_argument("--tol", type=float, default=mf.DEFAULT_TOL)


def _sim_flags(sp):
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--lambda", dest="lambda_", type=float, required=True)
    sp.add_argument("--lmax", type=int, default=None)
    sp.add_argument("--horizon", type=float, required=True)
    sp.add_argument("--warmup", type=float, default=None)
    sp.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV} or 0")


def build_parser():
    parser = argparse.ArgumentParser(prog="supermarket", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, formats):
        sp = sub.add_parser(name, help=COMMANDS[name].help)
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        sp.add_argument("--format", choices=formats, default=formats[0])
        return sp

    sp = add("tail", ("csv", "json"))
    sp.add_argument("--lambda", dest="lambda_", type=float, required=True)
    sp.add_argument("--mu", required=True, help="real strategy like 2.5 or masses like 0.2,0.8")
    sp.add_argument("--lmax", type=int, default=None)
    sp.add_argument("--tol", type=float, default=mf.DEFAULT_TOL)

    sp = add("nash", ("json", "csv"))
    _game_flags(sp)
    sp.add_argument("--q-grid", type=int, default=1000)

    sp = add("brfig", ("csv", "json"))
    _game_flags(sp)
    sp.add_argument("--points", type=int, default=100, help="population strategies per unit interval")

    sp = add("vfig", ("csv", "json"))
    sp.add_argument("--lambda", dest="lambda_", type=float, required=True)
    sp.add_argument("--l", type=int, default=None, help="own sample size")
    sp.add_argument("--lmax", type=int, default=None)
    sp.add_argument("--opponent-range", default=None, help="integer population strategies a:b")
    sp.add_argument("--points", type=int, default=101, help="q grid points for V(L, L+q)")
    sp.add_argument("--log", action="store_true", help="add a natural-log column")
    sp.add_argument("--tol", type=float, default=mf.DEFAULT_TOL)

    sp = add("socopt", ("json", "csv"))
    _game_flags(sp)
    sp.add_argument("--refine-tol", type=float, default=1e-8)

    sp = add("hetero", ("json", "csv"))
    sp.add_argument("--lambda", dest="lambda_", type=float, required=True)
    sp.add_argument("--cs", type=float, required=True)
    sp.add_argument("--lmax", type=int, required=True)
    sp.add_argument("--density", default=None,
                    help='JSON like {"kind": "uniform", "c_max": 1} or a path to such a file')
    sp.add_argument("--damping", type=float, default=0.5)
    sp.add_argument("--max-iter", type=int, default=10000)
    sp.add_argument("--init", default=None, help="starting distribution, same syntax as --mu")

    sp = add("simulate", ("json", "csv"))
    _sim_flags(sp)
    sp.add_argument("--mu", required=True)
    sp.add_argument("--tagged-fraction", type=float, default=0.01)
    sp.add_argument("--tagged-l", type=int, default=None)
    sp.add_argument("--batches", type=int, default=20)

    sp = add("couple", ("text", "json", "csv"))
    _sim_flags(sp)
    sp.add_argument("--mu1", required=True)
    sp.add_argument("--mu2", required=True)

    sp = add("externality", ("json", "csv"))
    sp.add_argument("--lambda", dest="lambda_", type=float, required=True)
    sp.add_argument("--horizon", type=float, default=1e6)
    sp.add_argument("--warmup", type=float, default=None)
    sp.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV} or 0")

    sp = sub.add_parser("replay", help="re-run the spec echoed in a JSON output")
    sp.add_argument("file")
    sp.add_argument("--out", default=None)
    return parser


def _load_density(text):
    if text is None:
        return None
    if os.path.exists(text):
        with open(text) as fh:
            return json.load(fh)
    return json.loads(text)


def spec_from_args(args):
    """Translate parsed flags into a validated :class:`ExperimentSpec`."""
    ns = vars(args).copy()
    command = ns.pop("command")
    output = ns.pop("out", None)
    fmt = ns.pop("format", None)
    params = {}
    for k, v in ns.items():
        key = "lambda" if k == "lambda_" else k
        if v is not None and v is not False:
            params[key] = v
    if "seed" in COMMANDS[command].keys and "seed" not in params:
        params["seed"] = _default_seed()
    if command == "hetero" and "density" in params:
        params["density"] = _load_density(params["density"])
    spec = ExperimentSpec(command, params, output, fmt)
    spec.validate()
    return spec


def execute(spec):
    """Run a validated spec; returns its :class:`Output`."""
    return COMMANDS[spec.command].run(spec.params)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats by strings so the JSON is strict."""
    if isinstance(o, float) and not math.isfinite(o):
        return "nan" if math.isnan(o) else ("inf" if o > 0 else "-inf")
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def render(spec, out):
    if spec.format == "json":
        doc = {"schema_version": SCHEMA_VERSION, "spec": spec.to_dict(), "result": out.payload}
        return json.dumps(_clean(doc), indent=2, default=_json_default) + "\n"
    if spec.format == "text":
        return "\n".join(out.text) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(out.header)
    for row in out.rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        if args.command == "replay":
            with open(args.file) as fh:
                doc = json.load(fh)
            spec = ExperimentSpec.from_dict(doc["spec"])
            spec.output = args.out
        else:
            spec = spec_from_args(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        print(f"supermarket: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        out = execute(spec)
    except ValueError as e:
        print(f"supermarket: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ArithmeticError) as e:
        print(f"supermarket: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    for note in out.notes:
        print(note, file=sys.stderr)
    _write(render(spec, out), spec.output)
    if out.failed:
        print(f"supermarket: {out.failed}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
