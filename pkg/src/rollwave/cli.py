"""Command-line front end: ``rollwave <command> --config <path> [--out <dir>]``.

Configuration is flat ``key = value`` text.  Keys are dotted
(``model.F``, ``numerics.L``); a ``[section]`` line prefixes the keys that
follow it.  Every artifact carries a hash of the configuration and
``check`` refuses to combine artifacts whose hashes differ.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 check
failure.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import bloch, equilibria, evans, evolution, profile as prof_mod
from .errors import ConfigError, DomainError, RollWaveError, SolverError
from .io import fmt, read_csv, read_table, write_csv
from .model import ModelParams

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4

# key -> (type, default); None default means optional with no value
KEYS = {
    "model.F": (float, None),
    "model.nu": (float, None),
    "wave.X": (float, None),
    "wave.tau0": (float, None),
    "wave.c": (float, None),
    "wave.c_rel": (float, None),
    "wave.c_range": (str, None),
    "wave.c_rel_range": (str, None),
    "numerics.L": (int, 256),
    "numerics.scheme": (str, "forward"),
    "numerics.tol": (float, prof_mod.NEWTON_TOL),
    "numerics.eta": (float, 0.01),
    "numerics.xi_n": (int, 51),
    "numerics.xi_extent": (float, 1.0),
    "numerics.T_horizon": (float, 50.0),
    "numerics.power_xi": (str, "0.05, 0.15, 0.4"),
    "numerics.N": (int, 32),
    "numerics.T_end": (float, None),
    "numerics.L_per_period": (int, 128),
    "numerics.perturbation": (float, 1e-4),
    "evans.xi": (float, 0.0),
    "evans.contour": (str, "circle"),
    "evans.center": (complex, 0j),
    "evans.radius": (float, 1e-4),
    "evans.lo": (complex, None),
    "evans.hi": (complex, None),
    "evans.n_points": (int, 64),
    "check.scheme": (str, "fourier"),
    "check.L": (int, 128),
    "check.d2_window": (float, 0.5),
    "check.require": (str, ""),
    "output.dir": (str, "."),
}

HELP = {
    "hopf": "Hopf point and constant-state data",
    "profile": "periodic profiles by shooting and continuation",
    "spectrum": "method 2: R(xi) from eigenvalues of the discretized Bloch operator",
    "power": "method 1: power iteration on the linearized Bloch evolution",
    "evolve": "method 3: nonlinear evolution on [-N X, N X]",
    "evans": "method 4: Evans-function winding numbers",
    "check": "aggregate structural and spectral verdicts into report.json",
}


def _parse_value(key, raw):
    typ = KEYS[key][0]
    try:
        if typ is complex:
            return complex(raw.replace(" ", ""))
        if typ is int:
            return int(raw)
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from exc


def parse_config_text(text, origin="<config>"):
    values = {}
    section = ""
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ConfigError(f"{origin}:{n}: expected key = value")
        key = key.strip()
        if section and "." not in key:
            key = f"{section}.{key}"
        if key not in KEYS:
            raise ConfigError(f"{origin}:{n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{origin}:{n}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw.strip())
    return values


def _floats(s, key):
    try:
        return [float(t) for t in s.replace(":", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {s!r}") from exc


@dataclass(frozen=True)
class RunConfig:
    values: dict

    @classmethod
    def from_text(cls, text, origin="<config>"):
        v = parse_config_text(text, origin)
        cfg = cls(v)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, path)

    def get(self, key):
        return self.values.get(key, KEYS[key][1])

    def validate(self):
        v = self.values
        for key in ("model.F", "model.nu"):
            if key not in v:
                raise ConfigError(f"missing required key {key}")
        try:
            ModelParams(v["model.F"], v["model.nu"])
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        if ("wave.X" in v) == ("wave.tau0" in v):
            raise ConfigError("give exactly one of wave.X and wave.tau0")
        speeds = [k for k in ("wave.c", "wave.c_rel", "wave.c_range", "wave.c_rel_range") if k in v]
        if len(speeds) > 1:
            raise ConfigError(f"give at most one wave speed key, got {speeds}")
        for key in ("wave.c_range", "wave.c_rel_range"):
            if key in v:
                a, b, n = self.range_spec(key)
                if n < 2 or a == b:
                    raise ConfigError(f"{key}: need start != stop and at least 2 points")
        if self.get("numerics.scheme") not in bloch.SCHEMES:
            raise ConfigError(f"numerics.scheme must be one of {bloch.SCHEMES}")
        if self.get("check.scheme") not in bloch.SCHEMES:
            raise ConfigError(f"check.scheme must be one of {bloch.SCHEMES}")
        if self.get("evans.contour") not in ("circle", "rectangle"):
            raise ConfigError("evans.contour must be circle or rectangle")
        if self.get("evans.contour") == "rectangle" and (
                "evans.lo" not in v or "evans.hi" not in v):
            raise ConfigError("rectangle contour needs evans.lo and evans.hi")
        for key in ("numerics.L", "numerics.xi_n", "numerics.N", "numerics.L_per_period",
                    "evans.n_points", "check.L"):
            if self.get(key) < 1:
                raise ConfigError(f"{key} must be positive")
        unknown = set(self.requirements()) - set(VERDICTS)
        if unknown:
            raise ConfigError(f"check.require: unknown verdicts {sorted(unknown)}")

    def range_spec(self, key):
        parts = _floats(self.values[key], key)
        if len(parts) != 3:
            raise ConfigError(f"{key}: expected 'start, stop, n'")
        return parts[0], parts[1], int(parts[2])

    def requirements(self):
        return [t.strip() for t in self.get("check.require").split(",") if t.strip()]

    @property
    def model(self):
        return ModelParams(self.values["model.F"], self.values["model.nu"])

    def hash(self):
        items = sorted((k, fmt(v)) for k, v in self.values.items() if not k.startswith("output."))
        text = "\n".join(f"{k}={v}" for k, v in items)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


VERDICTS = ("D1", "D2", "D3prime", "H3", "H4", "amplitude", "coercivity")


def _period(cfg):
    p = cfg.model
    if "wave.X" in cfg.values:
        return float(cfg.values["wave.X"])
    return equilibria.hopf_point(cfg.values["wave.tau0"], p).X


def _speeds(cfg, c_s, side):
    """Wave speeds requested by the config, checked against the branch side."""
    v = cfg.values
    if "wave.c" in v:
        cs = [v["wave.c"]]
    elif "wave.c_rel" in v:
        cs = [c_s * (1.0 + v["wave.c_rel"])]
    elif "wave.c_range" in v:
        a, b, n = cfg.range_spec("wave.c_range")
        cs = list(np.linspace(a, b, n))
    elif "wave.c_rel_range" in v:
        a, b, n = cfg.range_spec("wave.c_rel_range")
        cs = list(c_s * (1.0 + np.linspace(a, b, n)))
    else:
        raise ConfigError("profile needs one of wave.c, wave.c_rel, wave.c_range, wave.c_rel_range")
    wrong = [c for c in cs if not (c - c_s) * side > 0]
    if wrong:
        where = "below" if side < 0 else "above"
        raise ConfigError(f"speeds {wrong} are not on the wave branch, which lies {where} "
                          f"c_s = {c_s:.12g} for this period")
    if len(cs) > 1 and abs(cs[0] - c_s) > abs(cs[-1] - c_s):
        raise ConfigError("a c-range must move away from c_s (start nearest the Hopf point)")
    return cs


# outputs


def _out(cfg, args, name):
    d = args.out or cfg.get("output.dir")
    os.makedirs(d, exist_ok=True)
    return os.path.join(d, name)


def _write_kv(path, data):
    with open(path, "w") as fh:
        for k, v in data.items():
            fh.write(f"{k}={fmt(v)}\n")


def _read_kv(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            k, sep, v = line.strip().partition("=")
            if sep:
                out[k] = v
    return out


def _load_profile(cfg, args):
    path = _out(cfg, args, "profile.txt")
    if not os.path.exists(path):
        raise ConfigError(f"{path} not found; run `rollwave profile` with this config first")
    prof = prof_mod.load_profile(path)
    if prof.meta.get("config_hash") != cfg.hash():
        raise ConfigError(f"{path} was produced by a different config "
                          f"(hash {prof.meta.get('config_hash')} != {cfg.hash()})")
    return prof


def cmd_hopf(cfg, args):
    p = cfg.model
    if "wave.tau0" in cfg.values:
        tau0 = cfg.values["wave.tau0"]
    else:
        tau0 = equilibria.tau0_for_period(p, cfg.values["wave.X"])
    hp = equilibria.hopf_point(tau0, p)
    alpha, beta, gamma = equilibria.linearized_profile_coefficients(hp.tau0, hp.c_s, p)
    data = {"config_hash": cfg.hash(), "F": p.F, "nu": p.nu, "tau0": hp.tau0, "u0": hp.u0,
            "c_s": hp.c_s, "omega": hp.omega, "X": hp.X, "alpha": alpha, "gamma": gamma}
    _write_kv(_out(cfg, args, "hopf.txt"), data)
    for k in ("tau0", "u0", "c_s", "omega", "X"):
        print(f"{k} = {fmt(data[k])}")
    return EXIT_OK


def cmd_profile(cfg, args):
    p = cfg.model
    X = _period(cfg)
    c_s, k = prof_mod.hopf_branch_slope(p, X)
    cs = _speeds(cfg, c_s, np.sign(k))
    L = cfg.get("numerics.L")
    if len(cs) == 1:
        profiles = [prof_mod.profile_at_speed(p, X, cs[0], L)]
    else:
        first = prof_mod.profile_at_speed(p, X, cs[0], L)
        rest = prof_mod.continue_in_c(p, X, cs[1:], L, guess=first.wave) if len(cs) > 1 else []
        profiles = [first] + rest
    h = cfg.hash()
    extra = {"config_hash": h, "c_s": c_s}
    if len(profiles) == 1:
        prof_mod.save_profile(profiles[0], _out(cfg, args, "profile.txt"), extra)
    else:
        for i, pr in enumerate(profiles):
            prof_mod.save_profile(pr, _out(cfg, args, f"profile_{i:03d}.txt"), extra)
        # the last wave on the branch is the one later commands use
        prof_mod.save_profile(profiles[-1], _out(cfg, args, "profile.txt"), extra)
        rows = [(pr.wave.c, pr.amplitude, pr.wave.q, pr.wave.b1) for pr in profiles]
        write_csv(_out(cfg, args, "branch.csv"), ("c", "amplitude", "q", "b1"), rows, h)
    for pr in profiles:
        print(f"c = {fmt(pr.wave.c)}  amplitude = {pr.amplitude:.6g}  residual = {pr.residual:.3e}")
    return EXIT_OK


SPECTRUM_COLUMNS = ("xi", "R") + tuple(f"Re_lambda_{j}" for j in range(1, 7)) + \
    tuple(f"Im_lambda_{j}" for j in range(1, 7))


def cmd_spectrum(cfg, args):
    p = cfg.model
    prof = _load_profile(cfg, args)
    xis = bloch.xi_grid(prof.wave.X, cfg.get("numerics.xi_n"), cfg.get("numerics.xi_extent"))
    cur = bloch.r_curve(prof, p, xis, cfg.get("numerics.scheme"), cfg.get("numerics.L"))
    lead = cur.leading
    rows = np.column_stack([cur.xis, cur.R, lead.real, lead.imag])
    write_csv(_out(cfg, args, "spectrum.csv"), SPECTRUM_COLUMNS, rows, cfg.hash())
    print(f"max R = {cur.R.max():.6g} at xi = {cur.xis[np.argmax(cur.R)]:.6g}")
    return EXIT_OK


def cmd_power(cfg, args):
    p = cfg.model
    prof = _load_profile(cfg, args)
    scheme, L = cfg.get("numerics.scheme"), cfg.get("numerics.L")
    T = cfg.get("numerics.T_horizon")
    xis = _floats(cfg.get("numerics.power_xi"), "numerics.power_xi")
    rows = []
    for xi in xis:
        est = evolution.power_estimate(prof, p, xi, T, scheme, L)
        R = float(bloch.r_curve(prof, p, [xi], scheme, L).R[0])
        floor = np.nan if est.floor_time is None else est.floor_time
        rows.append((xi, est.value, R, abs(est.value - R), floor))
        print(f"xi = {xi:.6g}  power = {est.value:.6g}  R_disc = {R:.6g}")
    write_csv(_out(cfg, args, "power.csv"), ("xi", "power_estimate", "R_disc", "abs_diff", "floor_time"),
              rows, cfg.hash())
    return EXIT_OK


def cmd_evolve(cfg, args):
    p = cfg.model
    prof = _load_profile(cfg, args)
    run = evolution.nonlinear_evolve(prof, p, cfg.get("numerics.N"), cfg.get("numerics.perturbation"),
                                     cfg.get("numerics.T_end"), cfg.get("numerics.L_per_period"))
    run.save_history(_out(cfg, args, "history.csv"), cfg.hash())
    _write_kv(_out(cfg, args, "evolve.txt"), {
        "config_hash": cfg.hash(), "T_end": run.final.t, "dt": run.dt,
        "growth_factor": run.growth_factor(), "mass_drift": run.mass_drift,
        "truncation_estimate": run.truncation_estimate, "peak_shift": run.peak_shift,
    })
    print(f"growth factor = {run.growth_factor():.6g}  mass drift = {run.mass_drift:.3e}")
    return EXIT_OK


def _contour(cfg):
    if cfg.get("evans.contour") == "circle":
        return evans.Circle(cfg.get("evans.center"), cfg.get("evans.radius"))
    return evans.Rectangle(cfg.get("evans.lo"), cfg.get("evans.hi"))


def cmd_evans(cfg, args):
    p = cfg.model
    prof = _load_profile(cfg, args)
    try:
        contour = _contour(cfg)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    res = evans.winding_number(prof, p, cfg.get("evans.xi"), contour, cfg.get("evans.n_points"))
    evans.save_contour(res, _out(cfg, args, "contour.csv"), cfg.hash())
    _write_kv(_out(cfg, args, "evans.txt"), {
        "config_hash": cfg.hash(), "xi": res.xi, "winding": res.winding,
        "min_modulus_on_contour": res.min_modulus_on_contour, "n_samples": res.n_samples,
    })
    print(f"winding = {res.winding}")
    return EXIT_OK


def _artifact_hash(path):
    if path.endswith(".csv"):
        return read_csv(path)[0]
    if os.path.basename(path).startswith("profile"):
        return read_table(path)[0].get("config_hash")
    return _read_kv(path).get("config_hash")


ARTIFACTS = ("hopf.txt", "profile.txt", "branch.csv", "spectrum.csv", "power.csv",
             "history.csv", "evolve.txt", "contour.csv", "evans.txt")


def cmd_check(cfg, args):
    p = cfg.model
    h = cfg.hash()
    mismatched = []
    for name in ARTIFACTS:
        path = _out(cfg, args, name)
        if os.path.exists(path) and _artifact_hash(path) != h:
            mismatched.append(name)
    if mismatched:
        print(f"check: artifacts from a different config: {', '.join(mismatched)}", file=sys.stderr)
        return EXIT_CHECK
    prof = _load_profile(cfg, args)
    timings = {}
    t0 = time.perf_counter()
    rep = bloch.assess_stability(prof, p, cfg.get("check.scheme"), cfg.get("check.L"),
                                 d2_window=cfg.get("check.d2_window"), eta=cfg.get("numerics.eta"),
                                 timings=timings)
    bundle = {
        "report": rep.to_dict(),
        "provenance": {
            "config_hash": h,
            "profile_L": prof.L,
            "check_L": bloch.grid_size(cfg.get("check.L"), cfg.get("check.scheme")),
            "scheme": cfg.get("check.scheme"),
            "tolerances": {"newton": cfg.get("numerics.tol"), "eta": cfg.get("numerics.eta"),
                           "d2_window": cfg.get("check.d2_window")},
            "wall_time": {**timings, "total": time.perf_counter() - t0},
        },
    }
    with open(_out(cfg, args, "report.json"), "w") as fh:
        json.dump(bundle, fh, indent=2, sort_keys=True)
    for name in VERDICTS:
        v = getattr(rep, name)
        print(f"{name:11s} {'true' if v.holds else 'false':5s} value = {v.value!r}  {v.note}")
    failed = [r for r in cfg.requirements() if not getattr(rep, r).holds]
    if failed:
        print(f"check: required verdicts failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def load_report(path):
    """Read ``report.json`` back into a StabilityReport and its provenance."""
    with open(path) as fh:
        bundle = json.load(fh)
    return bloch.StabilityReport.from_dict(bundle["report"]), bundle["provenance"]


COMMANDS = {
    "hopf": cmd_hopf, "profile": cmd_profile, "spectrum": cmd_spectrum, "power": cmd_power,
    "evolve": cmd_evolve, "evans": cmd_evans, "check": cmd_check,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="rollwave", description="Roll-wave spectral stability toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        sp.add_argument("--config", required=True, help="key = value configuration file")
        sp.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, RollWaveError) as exc:
        print(f"solver failure [{args.command}]: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
