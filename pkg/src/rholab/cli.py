"""Command-line entry point: rholab <subcommand> [--config FILE] [--set key=value ...].

Exit codes: 0 all assertions passed, 1 an assertion failed, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Callable, Dict

import numpy as np
import yaml

from . import __version__
from .critical_radius import RadiusError, critical_covering, shen_rho, verify_variation
from .dyadic_cz import check_cz_invariants, cz_decompose
from .exponents import ExponentError, exponent_table, power_lemma_q, render
from .harness import (
    ConfigError,
    HypothesisError,
    config_from_mapping,
    dumps_record,
    negative_control,
    parse_field,
    parse_rho,
    refinement_sweeps,
    sigma_search,
)
from .lattice import Cube, LatticeError, LatticeField, make_grid, save_field
from .maximal_ops import dyadic_maximal, local_maximal, m_rho_sigma, minimal_m
from .sczo_kernels import AnnulusSpec, KernelError, SampleSpec, build_kernel, condition_suite
from .trials import cz_trials, domination_trials, localized_oracle, okikiolu_trials, reduction_trial
from .weight_classes import (
    TestBench,
    WeightError,
    a1_constant,
    ainf_eps_check,
    ap_constant,
    refinement_study,
    relation_suite,
    rh_constant,
)

log = logging.getLogger("rholab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class Outcome:
    """Collects report text, JSON payload and CSV tables for one run."""

    def __init__(self, name: str):
        self.name = name
        self.lines = []
        self.payload: Dict = {}
        self.tables: Dict[str, Callable[[Path], None]] = {}
        self.passed = True

    def line(self, text: str):
        self.lines.append(text)

    def write(self, out_dir: str):
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / f"{self.name}.txt").write_text("\n".join(self.lines) + "\n", encoding="utf-8")
        (path / f"{self.name}.json").write_text(json.dumps(self.payload, indent=2, default=_jsonable),
                                                encoding="utf-8")
        for fname, writer in self.tables.items():
            writer(path / fname)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return str(x)


def _options(args, defaults: dict) -> dict:
    opts = dict(defaults)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        opts.update(data)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        opts[k.strip()] = yaml.safe_load(v)
    return opts


def _check_keys(opts: dict, defaults: dict, extra=()):
    unknown = set(opts) - set(defaults) - set(extra)
    if unknown:
        raise ConfigError(f"unknown options: {sorted(unknown)}")


def _vec(x) -> list:
    return [float(a) for a in np.atleast_1d(x)]


def _field(spec, low, high, h, offset=True) -> LatticeField:
    return LatticeField.from_function(parse_field(spec), low, high, h, offset=offset)


# ---------------------------------------------------------------- subcommands


def cmd_verify_rho(args) -> Outcome:
    d = {"rho": "harmonic", "low": [-10.0], "high": [10.0], "grid_n": 24, "n_random": 10000}
    o = _options(args, d)
    _check_keys(o, d)
    rep = verify_variation(parse_rho(o["rho"]), _vec(o["low"]), _vec(o["high"]), grid_n=int(o["grid_n"]),
                           n_random=int(o["n_random"]), seed=args.seed)
    out = Outcome("verify-rho")
    out.payload = rep.to_dict()
    out.line(f"C0_fit {rep.C0_fit!r}")
    out.line(f"N0_fit {rep.N0_fit!r}")
    out.line(f"growth {rep.growth!r}")
    out.line(f"satisfied {str(rep.satisfied).lower()}")
    out.passed = bool(rep.satisfied)
    return out


def cmd_shen_rho(args) -> Outcome:
    d = {"V": "one", "x": [0.0, 0.0, 0.0]}
    o = _options(args, d)
    _check_keys(o, d)
    V = parse_field(o["V"])
    x = np.asarray(_vec(o["x"]))
    if x.size != 3:
        raise ConfigError("shen-rho works in dimension 3")
    val = shen_rho(V, x)
    out = Outcome("shen-rho")
    out.payload = {"x": x.tolist(), "rho": val}
    out.line(f"rho {val!r}")
    return out


def cmd_covering(args) -> Outcome:
    d = {"rho": "harmonic", "low": [-10.0], "high": [10.0], "h": 0.01}
    o = _options(args, d)
    _check_keys(o, d)
    grid = make_grid(_vec(o["low"]), _vec(o["high"]), float(o["h"]))
    rep = critical_covering(parse_rho(o["rho"]), grid)
    out = Outcome("covering")
    out.payload = rep.to_dict()
    out.line(f"cubes {len(rep.radii)}")
    out.line(f"covered {str(rep.covered).lower()}")
    out.line(f"N1_fit {rep.N1_fit!r}")
    out.passed = bool(rep.covered)

    def table(path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("center,radius\n")
            for c, r in zip(rep.centers, rep.radii):
                fh.write(";".join(repr(float(a)) for a in np.atleast_1d(c)) + f",{float(r)!r}\n")
    out.tables["covering_cubes.csv"] = table
    return out


def cmd_weight_constant(args) -> Outcome:
    d = {"class": "A_p", "w": "power:0.5", "u": None, "p": 2.0, "s": 2.0, "eps": 0.5, "theta": 0.0,
         "rho": "harmonic", "low": [-10.0], "high": [10.0], "points": 256, "scheme": "all"}
    o = _options(args, d)
    _check_keys(o, d)
    cls = o["class"]
    low, high = _vec(o["low"]), _vec(o["high"])
    rho = parse_rho(o["rho"])
    extent = max(b - a for a, b in zip(low, high))

    def value(h):
        w = _field(o["w"], low, high, h)
        u = None if o["u"] is None else _field(o["u"], low, high, h)
        th = float(o["theta"])
        if cls == "A_p":
            return ap_constant(w, float(o["p"]), th, rho=rho, u=u)
        if cls == "A_1":
            return a1_constant(w, th, rho=rho, u=u)
        if cls == "RH":
            return rh_constant(w, float(o["s"]), th, rho=rho)
        if cls == "RH_inf":
            return rh_constant(w, math.inf, th, rho=rho)
        if cls == "A_inf_eps":
            return ainf_eps_check(w, float(o["eps"]), th, rho=rho, u=u, scheme=o["scheme"])
        raise ConfigError(f"unknown class {cls!r}")

    h0 = extent / int(o["points"])
    est = value(h0)
    out = Outcome("weight-constant")
    out.payload = {"estimate": est.to_dict()}
    out.line(f"class {est.cls}")
    out.line(f"value {est.value!r}")
    if args.refine:
        st = refinement_study(cls, lambda h: value(h).value, h0, args.refine)
        out.payload["refinement"] = st.to_dict()
        out.line(f"values {' '.join(repr(v) for v in st.values)}")
        out.line(f"growth {st.growth!r}")
        out.line(f"stable {str(st.stable()).lower()}")
        out.line(f"diverges {str(st.diverges()).lower()}")
        out.passed = st.stable()
    return out


def cmd_relations(args) -> Outcome:
    d = {"rho": "harmonic", "low": [-10.0], "high": [10.0], "points": 512, "p": 2.0, "s": 2.0}
    o = _options(args, d)
    _check_keys(o, d)
    bench = TestBench(parse_rho(o["rho"]), _vec(o["low"]), _vec(o["high"]), int(o["points"]),
                      refinements=args.refine if args.refine else 2)
    rep = relation_suite(bench, p=float(o["p"]), s=float(o["s"]))
    out = Outcome("relations")
    out.payload = json.loads(rep.to_json())
    for r in rep.records:
        out.line(r.to_line())
    out.passed = rep.all_pass
    return out


def _trial_outcome(name: str, results: list) -> Outcome:
    out = Outcome(name)
    out.payload = {"results": results}
    for r in results:
        out.line(" ".join(f"{k}={v}" for k, v in r.items() if not isinstance(v, (list, dict))))
    out.passed = all(bool(r["passed"]) for r in results)
    return out


def cmd_cz(args) -> Outcome:
    d = {"mode": "decompose", "f": "indicator:0:0.25", "v": "one", "low": [0.0], "high": [1.0],
         "points": 64, "t": 0.5, "trials": 100, "dims": [1, 2, 3]}
    o = _options(args, d)
    _check_keys(o, d)
    mode = o["mode"]
    if mode == "enclosing":
        return _trial_outcome("cz", [okikiolu_trials(int(k), int(o["trials"]), args.seed) for k in o["dims"]])
    if mode == "random":
        return _trial_outcome("cz", [cz_trials(int(o["trials"]), args.seed)])
    if mode == "localized":
        pts = o["points"] if isinstance(o["points"], list) else [o["points"]] * len(o["dims"])
        if len(pts) != len(o["dims"]):
            raise ConfigError("points must be a number or one entry per dimension")
        return _trial_outcome("cz", [localized_oracle(args.seed + i, int(k), int(n))
                                     for i, (k, n) in enumerate(zip(o["dims"], pts))])
    if mode != "decompose":
        raise ConfigError(f"unknown cz mode {mode!r}")
    low, high = _vec(o["low"]), _vec(o["high"])
    side = np.asarray(high) - np.asarray(low)
    if not np.allclose(side, side[0]):
        raise ConfigError("cz needs a cubical root")
    h = float(side[0]) / int(o["points"])
    f = _field(o["f"], low, high, h)
    v = _field(o["v"], low, high, h)
    R = Cube.from_edges(low, high)
    try:
        cz = cz_decompose(f, R, v, float(o["t"]))
    except LatticeError as exc:
        raise ConfigError(str(exc)) from exc
    inv = check_cz_invariants(f, v, cz)
    out = Outcome("cz")
    out.payload = {"invariants": inv, "selected": len(cz.selected), "gamma_realized": cz.gamma_realized,
                   "doubling_constant": cz.doubling_constant}
    out.line(f"selected {len(cz.selected)}")
    out.line(f"gamma_realized {cz.gamma_realized!r}")
    for k, val in inv.items():
        out.line(f"{k} {val}")
    out.passed = all(val for k, val in inv.items() if isinstance(val, (bool, np.bool_)))
    out.tables["cz_cubes.csv"] = cz.write_cubes_csv
    return out


def cmd_kernel_check(args) -> Outcome:
    d = {"kernel": "surrogate", "dim": 1, "N0": 4.0, "delta": 1.0, "N": 4.0, "s": 2.0,
         "low": None, "high": None, "n": 4000}
    o = _options(args, d)
    _check_keys(o, d)
    dim = int(o["dim"])
    params = {"dim": dim}
    if o["kernel"] in ("surrogate", "decay-homogeneous"):
        params["N0"] = float(o["N0"])
    if o["kernel"] == "surrogate":
        params["delta"] = float(o["delta"])
    K = build_kernel(o["kernel"], **params)
    low = _vec(o["low"]) if o["low"] is not None else [-4.0] * dim
    high = _vec(o["high"]) if o["high"] is not None else [4.0] * dim
    spec = SampleSpec(tuple(low), tuple(high), int(o["n"]), args.seed)
    ann = AnnulusSpec(tuple(low), tuple(high), seed=args.seed)
    reps = condition_suite(K, float(o["N"]), float(o["s"]), float(o["delta"]), spec, ann)
    out = Outcome("kernel-check")
    out.payload = {k: r.to_dict() for k, r in reps.items()}
    for k, r in reps.items():
        out.line(f"{k} value={r.value!r} growth={r.growth!r} passed={str(r.passed).lower()}")
    out.passed = all(r.passed for r in reps.values())
    return out


def cmd_maximal(args) -> Outcome:
    d = {"mode": "single", "operator": "rho-sigma", "f": "indicator:-1:1", "rho": "harmonic", "sigma": 0.0,
         "low": [-4.0], "high": [4.0], "points": 128, "trials": 100, "dims": [1, 2], "tolerance": 1e-12}
    o = _options(args, d)
    _check_keys(o, d)
    if o["mode"] == "reduction":
        res = [reduction_trial(int(k), int(o["points"]), args.seed) for k in o["dims"]]
        for r in res:
            r["passed"] = r["max_abs_diff"] <= float(o["tolerance"])
        return _trial_outcome("maximal", res)
    if o["mode"] == "domination":
        return _trial_outcome("maximal", [domination_trials(int(k), int(o["trials"]), args.seed) for k in o["dims"]])
    if o["mode"] != "single":
        raise ConfigError(f"unknown maximal mode {o['mode']!r}")
    low, high = _vec(o["low"]), _vec(o["high"])
    extent = max(b - a for a, b in zip(low, high))
    f = _field(o["f"], low, high, extent / int(o["points"]))
    rho = parse_rho(o["rho"])
    kind = o["operator"]
    if kind == "rho-sigma":
        res = m_rho_sigma(f, rho, float(o["sigma"]))
    elif kind == "minimal":
        res = minimal_m(f, rho, float(o["sigma"]))
    elif kind == "local":
        res = local_maximal(f, Cube.from_edges(low, high))
    elif kind == "dyadic":
        res = dyadic_maximal(f, Cube.from_edges(low, high))
    else:
        raise ConfigError(f"unknown operator {kind!r}")
    out = Outcome("maximal")
    vals = res.values.samples
    out.payload = {"max": float(np.max(vals)), "min": float(np.min(vals)), "flags": res.flags}
    out.line(f"max {float(np.max(vals))!r}")
    out.line(f"min {float(np.min(vals))!r}")
    out.tables["maximal_field.txt"] = lambda p: save_field(res.values, p)
    out.tables["maximal_witness.csv"] = res.write_witness_csv
    return out


def _sweep_cfg(args):
    o = _options(args, {})
    cfg = config_from_mapping(o)
    if args.refine:
        cfg = cfg.replace(refine=args.refine)
    return cfg


def cmd_sweep(args) -> Outcome:
    cfg = _sweep_cfg(args)
    out = Outcome("sweep")
    if args.negative:
        rec = negative_control(cfg)
        out.payload = rec.to_dict()
        out.line(f"sup_by_level {' '.join(repr(v) for v in rec.meta['sup_by_level'])}")
        out.line(f"growth {rec.meta['growth']!r}")
        out.line(f"fired {str(rec.meta['fired']).lower()}")
        out.passed = rec.meta["fired"]
        out.tables["sweep.csv"] = rec.write_csv
        return out
    recs = refinement_sweeps(cfg)
    out.payload = {"levels": [r.to_dict() for r in recs]}
    out.lines.append(dumps_record(recs[-1]).rstrip("\n"))
    out.line(f"sup_by_level {' '.join(repr(r.sup_ratio) for r in recs)}")
    out.line(f"sup_above_floor_by_level {' '.join(repr(r.meta['sup_above_floor']) for r in recs)}")
    out.passed = recs[-1].refinement_drift < 1.5 if cfg.refine else True
    for i, r in enumerate(recs):
        out.tables[f"sweep_level{i}.csv"] = r.write_csv
    return out


def cmd_sigma_search(args) -> Outcome:
    cfg = _sweep_cfg(args)
    res = sigma_search(cfg)
    out = Outcome("sigma-search")
    out.payload = res.to_dict()
    out.line(f"status {res.status}")
    out.line(f"sigma_star {res.sigma_star}")
    for s, sups in res.tried.items():
        out.line(f"sigma {s:g} sups {' '.join(repr(v) for v in sups)}")
    if res.record is not None:
        out.line(f"sup_above_floor {res.record.meta['sup_above_floor']!r}")
    out.passed = res.sigma_star is not None
    if res.record is not None:
        out.tables["sigma_search.csv"] = res.record.write_csv
    return out


def cmd_exponents(args) -> Outcome:
    d = {"q": 2, "d": 3, "gamma": 1, "p": 2, "s": 2}
    o = _options(args, d)
    _check_keys(o, d)
    tab = exponent_table(o["q"], int(o["d"]), o["gamma"])
    qpl = power_lemma_q(o["p"], o["s"])
    out = Outcome("exponents")
    out.payload = {k: render(v) for k, v in tab.items()}
    out.payload["power_lemma_q"] = render(qpl)
    for k, v in out.payload.items():
        out.line(f"{k} {v}")
    return out


COMMANDS = {
    "verify-rho": cmd_verify_rho,
    "shen-rho": cmd_shen_rho,
    "covering": cmd_covering,
    "weight-constant": cmd_weight_constant,
    "relations": cmd_relations,
    "cz": cmd_cz,
    "kernel-check": cmd_kernel_check,
    "maximal": cmd_maximal,
    "sweep": cmd_sweep,
    "sigma-search": cmd_sigma_search,
    "exponents": cmd_exponents,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with options for the subcommand")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one option")
    common.add_argument("--out", help="directory for the report, JSON and CSV tables")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--refine", type=int, default=0, help="number of lattice halvings")
    common.add_argument("--threads", type=int, default=1, help="worker threads for numpy backends")
    common.add_argument("-v", "--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="rholab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"rholab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "sweep":
            sp.add_argument("--negative", action="store_true", help="run as a negative control")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(args.threads))
    try:
        out = COMMANDS[args.command](args)
    except (ConfigError, ExponentError, KernelError, RadiusError, WeightError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (LatticeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("\n".join(out.lines))
    if args.out:
        out.write(args.out)
    return EXIT_OK if out.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
