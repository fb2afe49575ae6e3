"""Command-line entry point.

Every subcommand writes its CSV to ``--out`` and the JSON result envelope
next to it (same path, ``.json`` suffix), then prints the envelope.  Without
``--out`` only the envelope is printed.  Exit codes: 0 success, 2 invalid
input, 3 numerical guard trip.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import basis, estlab, imethod, io
from .basis import ZONAL_S3, S2XS1, ManifoldSpec, canonical_kind
from .errors import NumericalGuardError, ValidationError

COMMANDS = ("evolve", "bilinear", "expsum", "cluster", "lpstri", "ortho", "increments", "thresholds", "selftest")


def _int(v):
    try:
        return int(str(v).strip())
    except ValueError:
        pass
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise ValidationError(f"expected an integer, got {v!r}") from None
    if not math.isfinite(f) or f != int(f):
        raise ValidationError(f"expected an integer, got {v!r}")
    return int(f)


def _float(v):
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise ValidationError(f"expected a number, got {v!r}") from None
    if not math.isfinite(f):
        raise ValidationError(f"expected a finite number, got {v!r}")
    return f


def _int_list(v):
    if isinstance(v, (list, tuple)):
        return [_int(x) for x in v]
    return [_int(x) for x in str(v).split(",") if x.strip()]


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"expected a boolean, got {v!r}")


def _str_list(v):
    if isinstance(v, (list, tuple)):
        return [str(x).strip() for x in v]
    return [x.strip() for x in str(v).split(",") if x.strip()]


# config key -> parser (str -> value)
KEYS = {
    "manifold": canonical_kind,
    "k_max": _int,
    "n_max": _int,
    "m_max": _int,
    "experiment": str,
    "N": _int_list,
    "N1": _int_list,
    "N2": _int_list,
    "p": _float,
    "q": _float,
    "s": _float,
    "big_n": _int,
    "dt": _float,
    "t_end": _float,
    "samples": _int,
    "seed": _int,
    "out": str,
    "checkpoint_in": str,
    "checkpoint_out": str,
    "nt_time": _int,
    "time_rule": str,
    "alpha": _float,
    "k": _int_list,
    "modes": str,
    "mask": _str_list,
    "diag_every": _int,
    "linear": _bool,
    "profile": str,
    "probes": _bool,
    "jobs": _int,
}

FLAG_NAMES = {
    "k_max": "--k-max",
    "n_max": "--n-max",
    "m_max": "--m-max",
    "N": "--n",
    "N1": "--n1",
    "N2": "--n2",
    "big_n": "--big-n",
    "t_end": "--t-end",
    "checkpoint_in": "--checkpoint-in",
    "checkpoint_out": "--checkpoint-out",
    "nt_time": "--nt-time",
    "time_rule": "--time-rule",
    "diag_every": "--diag-every",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mnls", description="Cubic NLS spectral simulator and estimate lab")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    sub.required = True
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", help="key=value config file; flags override it")
        for key in KEYS:
            if key == "experiment":
                continue
            flag = FLAG_NAMES.get(key, "--" + key.replace("_", "-"))
            sp.add_argument(flag, dest=key, default=None)
    return parser


def merge_config(command: str, file_cfg: dict, flags: dict) -> dict:
    raw = dict(file_cfg)
    raw.update({k: v for k, v in flags.items() if v is not None})
    unknown = set(raw) - set(KEYS)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    cfg = {k: KEYS[k](v) for k, v in raw.items()}
    if "experiment" in cfg and cfg["experiment"] != command:
        raise ValidationError(f"config names experiment {cfg['experiment']!r} but subcommand is {command!r}")
    return cfg


# ---------------------------------------------------------------------------
# defaults and validation


def _spec(cfg, zonal_k, s2_n, s2_m) -> ManifoldSpec:
    kind = cfg.get("manifold", ZONAL_S3)
    if kind == ZONAL_S3:
        for key in ("n_max", "m_max"):
            if key in cfg:
                raise ValidationError(f"{key} does not apply to zonal-s3")
        return ManifoldSpec.zonal(cfg.get("k_max", zonal_k))
    if "k_max" in cfg:
        raise ValidationError("k_max does not apply to s2xs1")
    return ManifoldSpec.s2xs1(cfg.get("n_max", s2_n), cfg.get("m_max", s2_m))


def _dyadics(values, name, minimum=1):
    for v in values:
        if v < minimum or (v & (v - 1)):
            raise ValidationError(f"{name} values must be dyadic integers >= {minimum}, got {v}")
    return values


def _tgrid(cfg):
    rule = cfg.get("time_rule", estlab.SPECTRAL)
    n_t = cfg.get("nt_time", 33)
    return estlab.ExperimentGridTime(1.0, n_t, rule)


def _samples(cfg, default=32):
    n = cfg.get("samples", default)
    if n < 1:
        raise ValidationError("samples must be >= 1")
    return n


def _seed(cfg):
    seed = cfg.get("seed", 0)
    if not 0 <= seed < 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    return seed


def _fit(points):
    if len(points) >= 3:
        f = estlab.fit_exponent(points)
        return {"slope": f.slope, "stderr": f.stderr, "intercept": f.intercept}
    return None


def _block_or_empty(spec, N):
    from .fields import dyadic_mask

    if not dyadic_mask(spec, N).any():
        from .errors import EmptySupportError

        raise EmptySupportError(f"dyadic block N={N} is empty for {spec.header()}")


# ---------------------------------------------------------------------------
# commands: each returns (rows, columns, results)


def cmd_thresholds(cfg):
    kind = cfg.get("manifold", ZONAL_S3)
    s = cfg.get("s")
    if s is None:
        raise ValidationError("thresholds needs --s")
    name = "s2xs1" if kind == S2XS1 else "zoll"
    smin = imethod.s_min(name)
    try:
        card = imethod.rate_card(name, s)
    except ValidationError as exc:
        exc.partial = {"s_min": smin, "s": s, "in_regime": False}
        raise
    results = card.as_dict()
    results["in_regime"] = True
    results["discrepancy_flag"] = card.discrepancy is not None
    row = {"experiment": "thresholds", "manifold": kind, "s": s, "value": smin}
    return [row], io.CSV_COLUMNS, results


def cmd_ortho(cfg):
    if "modes" not in cfg:
        raise ValidationError("ortho needs --modes")
    kind = cfg.get("manifold", ZONAL_S3)
    text = cfg["modes"]
    if kind == ZONAL_S3:
        modes = [(_int(x),) for x in text.split(",") if x.strip()]
    else:
        # n/l/m triples separated by commas
        modes = []
        for tok in text.split(","):
            parts = tok.strip().split("/")
            if len(parts) != 3:
                raise ValidationError("s2xs1 modes are written n/l/m, comma separated")
            modes.append(tuple(_int(p) for p in parts))
    if len(modes) != 4:
        raise ValidationError("ortho needs exactly four modes")
    mask = cfg.get("mask", ["i"] * 4)
    if len(mask) != 4 or any(m not in ("c", "i") for m in mask):
        raise ValidationError("mask must be four entries of c or i")
    if kind == ZONAL_S3:
        spec = _spec(cfg, max(m[0] for m in modes), 0, 0)
    else:
        spec = _spec(cfg, 0, max(m[0] for m in modes), max(abs(m[2]) for m in modes))
    for m in modes:
        basis.mode_table(spec).index(m)
    val = estlab.quadruple_integral(spec, modes, tuple(mask))
    degs = [estlab.selection_degree(spec, m) for m in modes]
    results = {
        "real": val.real,
        "imag": val.imag,
        "abs": abs(val),
        "degrees": degs,
        "selection_rule_zero": degs[0] > sum(degs[1:]),
    }
    row = {"experiment": "ortho", "manifold": spec.kind, "value": abs(val)}
    return [row], io.CSV_COLUMNS, results


def cmd_bilinear(cfg):
    N1 = _dyadics(cfg.get("N1", [64]), "N1")
    N2 = _dyadics(cfg.get("N2", [2, 4, 8, 16]), "N2")
    if len(N1) != 1:
        raise ValidationError("bilinear takes a single N1")
    N1 = N1[0]
    if max(N2) > N1:
        raise ValidationError("need N2 <= N1")
    spec = _spec(cfg, 2 * N1 - 2, 4, N1)
    samples, seed, tgrid = _samples(cfg), _seed(cfg), _tgrid(cfg)
    for N in [N1] + N2:
        _block_or_empty(spec, N)
    rows, pts = [], []
    for n2 in N2:
        v = estlab.bilinear_experiment(spec, N1, n2, samples, seed, tgrid, cfg.get("jobs", 1), cfg.get("probes", False))
        rows.append({"experiment": "bilinear", "manifold": spec.kind, "N1": N1, "N2": n2, "seed": seed, "value": v})
        pts.append((n2, v))
    return rows, io.CSV_COLUMNS, {"spec": spec.header(), "samples": samples, "fit": _fit(pts)}


def cmd_expsum(cfg):
    Ns = cfg.get("N", [16, 32, 64, 128, 256])
    p = cfg.get("p", 6.0)
    alpha = cfg.get("alpha", 4.0)
    samples, seed, tgrid = _samples(cfg), _seed(cfg), _tgrid(cfg)
    if not p > 4:
        from .errors import OutsideHypothesisError

        raise OutsideHypothesisError(f"p must exceed 4, got {p}")
    for N in Ns:
        if N < 2:
            raise ValidationError("N must be >= 2")
    estlab._expsum_frequencies(2, alpha)  # validates alpha
    rows, pts = [], []
    for N in Ns:
        v = estlab.expsum_experiment(N, p, alpha, samples, seed, tgrid, cfg.get("jobs", 1))
        rows.append({"experiment": "expsum", "N": N, "p": p, "seed": seed, "value": v})
        pts.append((N, v))
    return rows, io.CSV_COLUMNS, {"alpha": alpha, "samples": samples, "fit": _fit(pts), "target": 0.5 - 2.0 / p}


def cmd_cluster(cfg):
    ks = cfg.get("k", [8, 16, 32, 64, 128])
    q = cfg.get("q", 8.0)
    if any(k < 1 for k in ks):
        raise ValidationError("cluster indices must be >= 1")
    if not q >= 2:
        raise ValidationError("q must be >= 2")
    kmax = max(ks)
    spec = _spec(cfg, kmax, kmax + 1, kmax + 1)
    samples, seed = _samples(cfg), _seed(cfg)
    rows, pts = [], []
    for k in ks:
        v = estlab.cluster_lq(spec, k, q, samples, seed, cfg.get("jobs", 1))
        rows.append({"experiment": "cluster", "manifold": spec.kind, "q": q, "k": k, "seed": seed, "value": v})
        pts.append((k, v))
    return rows, io.CSV_COLUMNS, {"spec": spec.header(), "fit": _fit(pts), "sogge_exponent": estlab.sogge_exponent(q)}


def cmd_lpstri(cfg):
    Ns = _dyadics(cfg.get("N", [4, 8, 16, 32]), "N")
    kind = cfg.get("manifold", ZONAL_S3)
    p = cfg.get("p", 6.0 if kind == ZONAL_S3 else 5.0)
    if not p > 4:
        from .errors import OutsideHypothesisError

        raise OutsideHypothesisError(f"p must exceed 4, got {p}")
    top = max(Ns)
    spec = _spec(cfg, 2 * top - 2, 2, 2 * top - 1)
    samples, seed, tgrid = _samples(cfg), _seed(cfg), _tgrid(cfg)
    for N in Ns:
        _block_or_empty(spec, N)
    rows, pts = [], []
    for N in Ns:
        v = estlab.lp_strichartz_experiment(spec, N, p, samples, seed, tgrid, cfg.get("jobs", 1))
        rows.append({"experiment": "lpstri", "manifold": spec.kind, "N": N, "p": p, "seed": seed, "value": v})
        pts.append((N, v))
    target = estlab.strichartz_exponent(spec.kind, p)
    return rows, io.CSV_COLUMNS, {"spec": spec.header(), "samples": samples, "fit": _fit(pts), "target": target}


def _initial(cfg, spec):
    from .fields import RandomProfile

    if "checkpoint_in" in cfg:
        return io.load_checkpoint(cfg["checkpoint_in"], spec)
    prof = cfg.get("profile", "sobolev")
    seed = _seed(cfg)
    if prof == "sobolev":
        return RandomProfile.sobolev(cfg.get("s", 0.9), seed=seed)
    if prof == "dyadic":
        Ns = _dyadics(cfg.get("N", [4]), "N")
        return RandomProfile.dyadic(Ns[0], seed=seed)
    raise ValidationError(f"unknown profile {prof!r}; expected sobolev or dyadic")


def _evolve_spec(cfg, zonal_k):
    if "checkpoint_in" in cfg and not any(k in cfg for k in ("k_max", "n_max", "m_max")):
        with open(cfg["checkpoint_in"], encoding="utf-8") as fh:
            fh.readline()
            header = fh.readline()
        try:
            return ManifoldSpec.from_header(header)
        except (ValueError, KeyError, TypeError):
            from .errors import CheckpointError

            raise CheckpointError("line 2: malformed manifold header") from None
    return _spec(cfg, zonal_k, 8, 8)


def cmd_evolve(cfg):
    from .dynamics import EvolveConfig, evolve

    spec = _evolve_spec(cfg, 32)
    ecfg = EvolveConfig(
        spec,
        _initial(cfg, spec),
        cfg.get("dt", 1e-3),
        cfg.get("t_end", 1.0),
        cfg.get("diag_every", 100),
        cfg.get("big_n"),
        cfg.get("s", 0.9),
        not cfg.get("linear", False),
    )
    ecfg.n_steps()
    res = evolve(ecfg)
    if "checkpoint_out" in cfg:
        io.save_checkpoint(res.final, cfg["checkpoint_out"])
    rows = [{k: getattr(r, k) for k in io.EVOLVE_COLUMNS} for r in res.records]
    r0, r1 = res.records[0], res.records[-1]

    def rel(a, b):
        return abs(b - a) / abs(a) if a else abs(b - a)

    results = {
        "spec": spec.header(),
        "steps": ecfg.n_steps(),
        "mass_drift": rel(r0.mass, r1.mass),
        "energy_drift": rel(r0.energy, r1.energy),
        "modified_energy_change": r1.modified_energy - r0.modified_energy,
    }
    if ecfg.big_n is not None:
        results["suggested_t_end"] = imethod.local_window(ecfg.big_n, ecfg.s) if ecfg.s > imethod.s_min("zoll") else None
    return rows, io.EVOLVE_COLUMNS, results


INCREMENT_COLUMNS = ("t", "lhs", "i1", "i2", "residual")


def cmd_increments(cfg):
    from .dynamics import initial_field, trajectory

    spec = _evolve_spec(cfg, 24)
    if spec.kind != ZONAL_S3:
        from .errors import UnsupportedManifoldError

        raise UnsupportedManifoldError("increments are implemented on zonal-s3 only")
    if spec.k_max > imethod.MAX_INCREMENT_K:
        from .errors import ResourceLimitError

        raise ResourceLimitError(f"k_max must be <= {imethod.MAX_INCREMENT_K}")
    s = cfg.get("s", 0.9)
    mult = imethod.multiplier(cfg.get("big_n", 8), s, spec)
    dt, t_end = cfg.get("dt", 5e-4), cfg.get("t_end", 0.25)
    if not dt > 0 or not t_end > 0:
        raise ValidationError("dt and t_end must be positive")
    n = int(round(t_end / dt))
    if abs(n * dt - t_end) > 1e-9 * max(1.0, t_end) or n < 2 or n % 2:
        raise ValidationError("t_end must be an even number of steps of dt")
    every = cfg.get("diag_every", 1)
    if every < 1 or n % (2 * every):
        raise ValidationError("diag_every must divide half the number of steps")
    u0 = initial_field(spec, _initial(cfg, spec))
    tr = trajectory(u0, dt, n, every)
    reps = imethod.increment_decomposition(tr, mult)
    rows = [{k: getattr(r, k) for k in INCREMENT_COLUMNS} for r in reps]
    last = reps[-1]
    results = {
        "spec": spec.header(),
        "final": {k: getattr(last, k) for k in INCREMENT_COLUMNS},
        "max_abs_residual": max(abs(r.residual) for r in reps),
    }
    return rows, INCREMENT_COLUMNS, results


def cmd_selftest(cfg):
    """Fast internal consistency battery."""
    from .fields import RandomProfile, random_field

    rows, checks = [], {}

    def check(name, value, tol):
        ok = bool(value <= tol)
        checks[name] = {"value": value, "tol": tol, "pass": ok}
        rows.append({"experiment": "selftest:" + name, "value": value, "stderr": tol})

    for spec in (ManifoldSpec.zonal(16), ManifoldSpec.s2xs1(4, 4)):
        g = basis.make_grid(spec)
        c = random_field(spec, RandomProfile.sobolev(0.5, seed=_seed(cfg))).coeffs
        back = basis.analyze_array(basis.synthesize_array(c, g), g)
        check(f"roundtrip_{spec.kind}", float(np.linalg.norm(back - c) / np.linalg.norm(c)), 1e-10)
        check(f"weights_{spec.kind}", abs(g.weights.sum() / spec.volume - 1.0), 1e-12)
    check("selection_rule", abs(estlab.quadruple_integral(ManifoldSpec.zonal(5), [(5,), (1,), (1,), (1,)])), 1e-12)
    check("eigenrelation_zonal_k3", basis.check_eigenrelation(ManifoldSpec.zonal(3), (3,)), 1e-6)
    check("s_min_zoll", abs(imethod.s_min("zoll") - (math.sqrt(21) - 1) / 4), 1e-12)
    failed = [k for k, v in checks.items() if not v["pass"]]
    if failed:
        raise NumericalGuardError(f"selftest failed: {failed}")
    return rows, io.CSV_COLUMNS, {"checks": checks, "all_pass": True}


HANDLERS = {
    "evolve": cmd_evolve,
    "bilinear": cmd_bilinear,
    "expsum": cmd_expsum,
    "cluster": cmd_cluster,
    "lpstri": cmd_lpstri,
    "ortho": cmd_ortho,
    "increments": cmd_increments,
    "thresholds": cmd_thresholds,
    "selftest": cmd_selftest,
}


def run(command: str, cfg: dict) -> dict:
    """Run one subcommand; writes outputs and returns the envelope."""
    start = time.perf_counter()
    rows, columns, results = HANDLERS[command](cfg)
    env = io.envelope(command, cfg, results, time.perf_counter() - start)
    out = cfg.get("out")
    if out:
        io.write_csv(rows, out, columns)
        io.write_envelope(env, Path(out).with_suffix(".json"))
    return env


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    cfg = {}
    try:
        file_cfg = io.read_config(ns.config) if ns.config else {}
        cfg = merge_config(ns.command, file_cfg, flags)
        env = run(ns.command, cfg)
    except ValidationError as exc:
        payload = {"schema": io.ENVELOPE_SCHEMA, "command": ns.command, "error": str(exc), "kind": type(exc).__name__}
        payload.update(getattr(exc, "partial", {}))
        print(json.dumps(payload, sort_keys=True))
        print(f"mnls: error: {exc}", file=sys.stderr)
        return 2
    except NumericalGuardError as exc:
        print(f"mnls: numerical guard: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(env, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
