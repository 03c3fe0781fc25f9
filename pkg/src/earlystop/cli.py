"""Command-line front end.

Every subcommand reads one JSON config (``--config``), writes its files to
``--out`` and is deterministic given the config bytes and the seed.
Exit codes: 0 success, 1 assumption failure (``check``), 2 config error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, experiments
from .analytics import oracle_report
from .filters import KINDS, make_regulariser
from .model import make_signal, make_spectrum, signal_from_json, spectrum_from_json
from .numerics import ConvergenceError

SUBCOMMANDS = ("simulate", "mc", "oracles", "rates", "check", "concentration")

TOP_KEYS = {
    "filter", "alpha", "D", "spectrum", "signal", "delta", "noise", "C_circ", "kappa", "t0",
    "replications", "seed", "t_grid", "iterations", "rates", "check", "concentration",
}
SPECTRUM_KEYS = {"kind", "c", "nu", "p", "shift", "values", "file"}
SIGNAL_KEYS = {"kind", "R", "s", "sign", "i0", "amplitude", "beta", "d", "seed", "values", "file"}
KAPPA_KEYS = {"rule", "C_kappa", "sign"}
RATES_KEYS = {"p", "d", "beta", "R", "deltas", "N"}
CHECK_KEYS = {"L", "t_grid", "karamata_p"}
CONCENTRATION_KEYS = {"weights", "x", "N", "omega", "drift_x"}


class ConfigError(ValueError):
    pass


def _check_keys(d, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r} in {where}")


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r}")
    return cfg[key]


def load_config(path: str | None) -> dict:
    if path is None:
        raise ConfigError("--config is required")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    _check_keys(cfg, TOP_KEYS, "config")
    for key, allowed in (("spectrum", SPECTRUM_KEYS), ("signal", SIGNAL_KEYS), ("rates", RATES_KEYS),
                         ("check", CHECK_KEYS), ("concentration", CONCENTRATION_KEYS)):
        if key in cfg:
            _check_keys(cfg[key], allowed, key)
    if isinstance(cfg.get("kappa"), dict):
        _check_keys(cfg["kappa"], KAPPA_KEYS, "kappa")
    return cfg


def _relative(path: str, base: Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base / p


def build_spectrum(cfg: dict, base: Path):
    spec = dict(cfg.get("spectrum", {"kind": "polynomial"}))
    if "file" in spec:
        if len(spec) > 1:
            raise ConfigError("spectrum: 'file' excludes other keys")
        return spectrum_from_json(_relative(spec["file"], base))
    kind = spec.pop("kind", "polynomial")
    D = cfg.get("D")
    if kind != "explicit" and D is None:
        raise ConfigError("missing required key 'D'")
    return make_spectrum(kind, D, **spec)


def build_signal(cfg: dict, base: Path, D: int):
    sig = dict(cfg.get("signal", {"kind": "poly_decay"}))
    if "file" in sig:
        if len(sig) > 1:
            raise ConfigError("signal: 'file' excludes other keys")
        return signal_from_json(_relative(sig["file"], base))
    kind = sig.pop("kind", "poly_decay")
    return make_signal(kind, None if kind == "explicit" else D, **sig)


def build_mc_config(cfg: dict, base: Path, seed: int, width: int) -> experiments.MCConfig:
    kind = cfg.get("filter", "landweber")
    if kind not in KINDS:
        raise ConfigError(f"filter must be one of {KINDS}, got {kind!r}")
    reg = make_regulariser(kind, cfg.get("alpha", 1.0))
    delta = _require(cfg, "delta")
    spectrum = build_spectrum(cfg, base)
    if "D" in cfg and cfg["D"] != spectrum.D:
        raise ConfigError(f"D={cfg['D']} disagrees with the spectrum length {spectrum.D}")
    signal = build_signal(cfg, base, spectrum.D)
    kappa = cfg.get("kappa", "default")
    kw = {}
    if kappa == "default":
        kw["kappa_rule"] = "default"
    elif isinstance(kappa, dict) and kappa.get("rule") == "perturbed":
        kw.update(kappa_rule="perturbed", C_kappa=float(kappa.get("C_kappa", 0.0)), kappa_sign=int(kappa.get("sign", 1)))
    else:
        raise ConfigError("kappa must be 'default' or {'rule': 'perturbed', 'C_kappa': ..., 'sign': +1|-1}")
    return experiments.MCConfig(
        reg=reg,
        spectrum=spectrum,
        signal=signal,
        delta=float(delta),
        C_circ=float(cfg.get("C_circ", math.sqrt(2))),
        t0_rule=cfg.get("t0", "auto"),
        N=int(cfg.get("replications", 100)),
        seed=seed,
        width=width,
        noise=cfg.get("noise", "gaussian"),
        **kw,
    )


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return format(float(v), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        # JSON has no inf/nan; ``repr`` of a float round-trips exactly
        return f if math.isfinite(f) else str(f)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _t_grid(cfg: dict) -> np.ndarray:
    if "t_grid" in cfg and "iterations" in cfg:
        raise ConfigError("give either 't_grid' or 'iterations', not both")
    if "t_grid" in cfg:
        return np.asarray(cfg["t_grid"], dtype=float)
    its = cfg.get("iterations", 100)
    m = np.arange(int(its) + 1) if isinstance(its, int) else np.asarray(its, dtype=float)
    return np.sqrt(m)


def cmd_simulate(cfg, args, base, out: Path) -> int:
    conf = build_mc_config(cfg, base, args.seed, 1)
    rows, indices = experiments.trace(conf, _t_grid(cfg))
    write_csv(out / "trace.csv", experiments.TRACE_FIELDS, ([r[k] for k in experiments.TRACE_FIELDS] for r in rows))
    write_json(out / "indices.json", indices)
    _say(args, f"wrote {out / 'trace.csv'} ({len(rows)} rows); tau={indices['tau']:.6g}")
    return 0


def cmd_mc(cfg, args, base, out: Path) -> int:
    conf = build_mc_config(cfg, base, args.seed, args.width)
    summary, records = experiments.run_mc(conf)
    write_csv(out / "runs.csv", experiments.RUN_FIELDS, (r.row() for r in records))
    write_json(out / "summary.json", summary)
    _say(args, json.dumps(_jsonable({k: summary[k] for k in ("N", "kappa", "floor_rate", "tau_over_t_w")})))
    return 0


def cmd_oracles(cfg, args, base, out: Path) -> int:
    conf = build_mc_config(cfg, base, args.seed, 1)
    rep = oracle_report(conf.reg, conf.spectrum, conf.signal, conf.delta, kappa=conf.kappa,
                        C_circ=conf.C_circ, t0=conf.t0())
    d = rep.to_dict()
    write_json(out / "oracles.json", d)
    _say(args, json.dumps(_jsonable(d), indent=2, sort_keys=True))
    return 0


def cmd_rates(cfg, args, base, out: Path) -> int:
    rc = dict(cfg.get("rates", {}))
    kind = cfg.get("filter", "landweber")
    reg = make_regulariser(kind, cfg.get("alpha", 1.0))
    res = experiments.rate_study(
        reg,
        float(rc.get("p", 0.5)),
        int(rc.get("d", 1)),
        float(rc.get("beta", 1.0)),
        float(rc.get("R", 1.0)),
        rc.get("deltas", [0.1, 0.05, 0.025, 0.0125]),
        int(rc.get("N", 50)),
        seed=args.seed,
        C_circ=float(cfg.get("C_circ", math.sqrt(2))),
        t0_rule=cfg.get("t0", "auto"),
    )
    write_csv(out / "rates.csv", ("delta", "D", "mse", "se"), zip(res.deltas, res.dimensions, res.mse, res.se))
    write_json(out / "rates.json", res.to_dict())
    _say(args, f"slope={res.slope:.4f} exponent={res.exponent:.4f}")
    return 0


def cmd_check(cfg, args, base, out: Path) -> int:
    cc = cfg.get("check", {})
    conf = build_mc_config(cfg, base, args.seed, 1)
    L = int(cc.get("L", 2))
    reports = [diagnostics.check_S(conf.spectrum, L)]
    t_grid = cc.get("t_grid")
    if conf.C_circ < math.sqrt(conf.spectrum.D):
        reports += diagnostics.check_A(conf.reg, conf.spectrum, conf.delta, conf.C_circ, t_grid)
    else:
        reports.append(diagnostics.AssumptionReport("A", False, note="t_circ undefined: C_circ >= sqrt(D)"))
    s = reports[0]
    if s.passed:
        nu_m, nu_p = s.constants["nu_minus"], s.constants["nu_plus"]
        p = float(cc.get("karamata_p", 2.0))
        if math.isfinite(nu_m):
            reports.append(diagnostics.karamata_check(conf.spectrum, L, nu_m, nu_p, p))
    failed = [r for r in reports if not r.passed and not r.warning]
    if not args.quiet:
        print(f"{'id':<10} {'status':<8} {'worst_slack':>14}  constants")
        for r in reports:
            status = "pass" if r.passed else ("warn" if r.warning else "FAIL")
            consts = json.dumps(_jsonable(r.constants), sort_keys=True)
            print(f"{r.id:<10} {status:<8} {r.worst_slack:>14.6g}  {consts}")
    write_json(out / "check.json", [r.to_dict() for r in reports])
    return 1 if failed else 0


def cmd_concentration(cfg, args, base, out: Path) -> int:
    cc = dict(cfg.get("concentration", {}))
    conf = build_mc_config(cfg, base, args.seed, 1)
    lam = conf.spectrum.lambdas
    w = cc.get("weights", "uniform")
    if w == "uniform":
        a = np.full(lam.size, 1.0 / lam.size)
    elif w == "inverse_lambda_sq":
        a = lam**-2.0
    elif isinstance(w, list):
        a = np.asarray(w, dtype=float)
    else:
        raise ConfigError("concentration.weights must be 'uniform', 'inverse_lambda_sq' or a list")
    N = int(cc.get("N", 100_000))
    xs = list(cc.get("x", [1.0, 2.0, 4.0]))
    tails = diagnostics.concentration_lm(a, xs, N, args.seed)
    result = {"laurent_massart": [t.to_dict() for t in tails]}
    if "omega" in cc:
        ok, drift = diagnostics.maxsum_drift_check(conf.spectrum, float(cc["omega"]),
                                                   cc.get("drift_x", [1.0, 2.0, 4.0, 8.0]), N, args.seed)
        result["drift"] = {"passed": ok, "tails": [t.to_dict() for t in drift]}
    write_json(out / "concentration.json", result)
    for t in tails:
        _say(args, f"x={t.x:g} freq={t.frequency:.5f} ucb={t.ucb:.5f} bound={t.bound:.5f} "
                   f"{'pass' if t.passed else 'FAIL'}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "mc": cmd_mc,
    "oracles": cmd_oracles,
    "rates": cmd_rates,
    "check": cmd_check,
    "concentration": cmd_concentration,
}


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _width(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("width must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="earlystop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--seed", type=_u64, default=None, help="override the config seed")
        p.add_argument("--width", type=_width, default=os.cpu_count() or 1, help="worker processes")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")
        return COMMANDS[args.command](cfg, args, Path(args.config).resolve().parent, out)
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
