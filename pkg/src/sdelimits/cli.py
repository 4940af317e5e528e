"""Command-line experiment runner.

Experiments are described by an INI file::

    [model]
    name = example1
    gamma = 0.5
    x0 = 0

    [schedule]
    k_min = 3
    k_max = 10          ; or: values = 8, 16, 32

    [sim]
    M = 10000
    base_seed = 20170922

    [conditions]
    names = A0, A1, growth, A2

    [stats]
    times = 0.25, 0.5, 1.0

Exit codes: 0 when every requested verdict passes, 1 when one fails, 2 for
usage or configuration errors.  Result files carry the hash of the effective
configuration; the wall-clock time is written only to ``metadata.json``.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .conditions import ALL_CONDITIONS, ConditionConfig, run_conditions
from .errors import ConfigurationError, HypothesisNotMetError, InvalidParameterError, ResolutionError
from .model import CATALOG, ParamSchedule, build_model, schedule_from
from .simulate import SimConfig, simulate_ensemble
from .stats import THEOREM_QUANTITY, convergence_report, moment_suite, run_schedule
from .transform import build_f, build_phi

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

#: Hypotheses audited before each limit theorem is simulated.
THEOREM_CONDITIONS = {
    1: ("A0", "A1", "growth", "A2"),
    2: ("A0", "A1", "growth", "A2", "A3_drift", "A3_diffusion"),
    3: ("A0", "A1", "growth", "A2", "A3_drift", "A3_diffusion", "A3_integrand"),
    4: ("A0", "A1", "growth", "A2", "A3_drift", "A3_diffusion", "A4"),
    5: ("A0", "A1", "growth", "A2", "A3_drift", "A3_diffusion", "theorem5"),
    6: ("A0", "A1", "growth", "A2", "A3_drift", "A3_diffusion", "A3_squared"),
    7: ("A0", "A1", "growth", "A2", "A3_drift", "A3_diffusion", "A3_squared"),
}

EXAMPLE_DEFAULTS = {
    "example1": {"theorem": 2, "psi_C1": math.exp(4.0), "a1_C": 2.0 * math.exp(4.0)},
    "example2": {"theorem": 3, "psi_C1": math.exp(4.0), "a1_C": 2.0 * math.exp(4.0)},
}


# -- configuration ---------------------------------------------------------------


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _sets(text: str) -> tuple:
    """``"0:0.1; -1:-0.5|0.2:0.3"`` -> sets of intervals (``|`` joins intervals of one set)."""
    out = []
    for part in text.split(";"):
        if not part.strip():
            continue
        ivals = []
        for iv in part.split("|"):
            a, b = iv.split(":")
            ivals.append((float(a), float(b)))
        out.append(tuple(ivals))
    return tuple(out)


@dataclass
class ExperimentConfig:
    model_name: str
    model_params: dict
    schedule: ParamSchedule
    sim: SimConfig
    conditions: ConditionConfig
    condition_names: tuple
    times: tuple = (0.25, 0.5, 1.0)
    alpha: float = 0.01
    ks_floor: float = 0.03
    quantile_threshold: float = 0.05
    skip_hypotheses: bool = False
    gaps: tuple = (2.0**-4, 2.0**-6)
    out: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        """Everything that influences results; worker count and output directory excluded."""
        sim = {f.name: getattr(self.sim, f.name) for f in fields(self.sim) if f.name != "workers"}
        cond = {f.name: getattr(self.conditions, f.name) for f in fields(self.conditions)}
        return {
            "model": {"name": self.model_name, **self.model_params},
            "schedule": list(self.schedule.values),
            "sim": sim,
            "conditions": cond,
            "condition_names": list(self.condition_names),
            "stats": {
                "times": list(self.times), "alpha": self.alpha, "ks_floor": self.ks_floor,
                "quantile_threshold": self.quantile_threshold, "skip_hypotheses": self.skip_hypotheses,
                "gaps": list(self.gaps),
            },
        }

    @property
    def hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, default=repr)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _get(sec, key, conv, default):
    if sec is None or key not in sec:
        return default
    try:
        return conv(sec[key])
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key!r}: {sec[key]!r}") from exc


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def parse_config(text: str, seed: Optional[int] = None, workers: Optional[int] = None) -> ExperimentConfig:
    """Parse INI text; ``seed`` and ``workers`` override the file."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config parse error: {exc}") from exc
    sec = lambda name: cp[name] if cp.has_section(name) else None
    m = sec("model")
    if m is None or "name" not in m:
        raise ConfigurationError("config needs [model] name")
    name = m["name"].strip()
    if name not in CATALOG:
        raise ConfigurationError(f"unknown model {name!r}; catalog: {', '.join(CATALOG)}")
    params = {}
    for key, val in m.items():
        if key == "name":
            continue
        try:
            params[key] = float(val)
        except ValueError:
            params[key] = val.strip()
    gamma = float(params.get("gamma", 0.5))

    s = sec("schedule")
    if s is None:
        raise ConfigurationError("config needs a [schedule] section")
    try:
        if "values" in s:
            vals = _floats(s["values"])
            if not vals:
                raise ConfigurationError("schedule is empty")
            schedule = schedule_from(vals, gamma=gamma)
        elif "k_min" in s and "k_max" in s:
            k0, k1 = int(s["k_min"]), int(s["k_max"])
            if k1 < k0:
                raise ConfigurationError("schedule is empty")
            schedule = ParamSchedule.dyadic(k0, k1, gamma)
        else:
            raise ConfigurationError("schedule needs 'values' or 'k_min' and 'k_max'")
    except InvalidParameterError as exc:
        raise ConfigurationError(str(exc)) from exc

    si = sec("sim")
    base_seed = _get(si, "base_seed", int, None)
    if seed is not None:
        base_seed = int(seed)
    if base_seed is None:
        raise ConfigurationError("[sim] base_seed is required (or pass --seed)")
    opt = lambda v: None if v.strip().lower() in ("", "none", "auto") else float(v)
    sim = SimConfig(
        L=_get(si, "L", float, 1.0),
        M=_get(si, "M", int, 10_000),
        base_seed=base_seed,
        crn=_get(si, "crn", _bool, True),
        x_max=_get(si, "x_max", float, 8.0),
        n_record=_get(si, "n_record", int, 256),
        dt=_get(si, "dt", opt, None),
        limit_dt=_get(si, "limit_dt", opt, None),
        allow_coarse=_get(si, "allow_coarse", _bool, False),
        workers=int(workers) if workers is not None else _get(si, "workers", int, 1),
    )

    c = sec("conditions")
    defaults = EXAMPLE_DEFAULTS.get(name, {})
    kw = {}
    for key, conv in (
        ("N", float), ("n_t", int), ("psi_C1", opt), ("m", float), ("alpha", float), ("C", float),
        ("a1_C", opt), ("trend_factor", float), ("final_threshold", float), ("zero_tol", float),
        ("a0_window", opt),
    ):
        v = _get(c, key, conv, defaults.get(key, "__unset__"))
        if v != "__unset__":
            kw[key] = v
    if c is not None and "B_sets" in c:
        kw["B_sets"] = _sets(c["B_sets"])
    kw["L"] = sim.L
    kw["X_max"] = sim.x_max
    cond = ConditionConfig(**kw)
    names = tuple(n.strip() for n in c["names"].split(",")) if c is not None and "names" in c else None
    if names is not None:
        bad = [n for n in names if n not in ALL_CONDITIONS]
        if bad:
            raise ConfigurationError(f"unknown conditions {bad}")

    st = sec("stats")
    return ExperimentConfig(
        model_name=name,
        model_params=params,
        schedule=schedule,
        sim=sim,
        conditions=cond,
        condition_names=names or ("A0", "A1", "growth", "A2"),
        times=_get(st, "times", _floats, (0.25, 0.5, 1.0)),
        alpha=_get(st, "alpha", float, 0.01),
        ks_floor=_get(st, "ks_floor", float, 0.03),
        quantile_threshold=_get(st, "quantile_threshold", float, 0.05),
        skip_hypotheses=_get(st, "skip_hypotheses", _bool, False),
        gaps=_get(st, "gaps", _floats, (2.0**-4, 2.0**-6)),
        out=_get(sec("output"), "dir", str, None),
        extra={"names_given": names is not None},
    )


def load_config(path: str, seed: Optional[int] = None, workers: Optional[int] = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, seed, workers)


def example_config_text(name: str) -> str:
    """Default configuration reproducing one of the built-in examples."""
    if name not in EXAMPLE_DEFAULTS:
        raise ConfigurationError(f"unknown example {name!r}; choose from {sorted(EXAMPLE_DEFAULTS)}")
    return f"""[model]
name = {name}
gamma = 0.5
x0 = 0

[schedule]
k_min = 3
k_max = 10

[sim]
L = 1
M = 10000
base_seed = 20170922
crn = true
x_max = 8

[conditions]
psi_C1 = {math.exp(4.0)!r}
a1_C = {2.0 * math.exp(4.0)!r}
"""


# -- output ------------------------------------------------------------------------


def _write(out: Path, fname: str, body: str, cfg: ExperimentConfig, comment: str = "#") -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / fname).write_text(f"{comment} config_hash={cfg.hash}\n{body}")


def _write_json(out: Path, fname: str, payload: dict, cfg: ExperimentConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    payload = dict(payload, config_hash=cfg.hash)
    (out / fname).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_default) + "\n")


def _default(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return repr(v)


def _metadata(out: Path, cfg: ExperimentConfig, command: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "config_hash": cfg.hash,
        "command": command,
        "version": __version__,
        "workers": cfg.sim.workers,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "config": cfg.canonical(),
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_default) + "\n")


# -- commands ----------------------------------------------------------------------


def _model(cfg: ExperimentConfig):
    return build_model(cfg.model_name, cfg.model_params)


def do_check(cfg: ExperimentConfig, out: Path, names=None, log=print) -> int:
    model, limit = _model(cfg)
    names = tuple(names or cfg.condition_names)
    report = run_conditions(model, limit, cfg.schedule, cfg.conditions, names, header={"config_hash": cfg.hash})
    _write(out, "conditions.csv", report.to_csv(), cfg)
    (out / "conditions.json").write_text(report.to_json() + "\n")
    for r in report.results:
        log(f"{r.name:14s} {r.verdict:5s} final={r.values[-1]:.6g}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def do_verify(cfg: ExperimentConfig, theorem: int, out: Path, log=print) -> int:
    model, limit = _model(cfg)
    if theorem not in THEOREM_CONDITIONS:
        raise ConfigurationError("theorem must be in 1..7")
    if not cfg.skip_hypotheses:
        hyp = run_conditions(
            model, limit, cfg.schedule, cfg.conditions, THEOREM_CONDITIONS[theorem], header={"config_hash": cfg.hash}
        )
        (out.mkdir(parents=True, exist_ok=True), (out / "hypotheses.json").write_text(hyp.to_json() + "\n"))
        if not hyp.passed:
            failed = [r.name for r in hyp.results if r.verdict != "pass"]
            raise HypothesisNotMetError(f"hypotheses failed: {', '.join(failed)}")
    if limit is None:
        raise ConfigurationError(f"model {cfg.model_name!r} has no limit model")
    if theorem == 1:
        run = run_schedule(model, limit, cfg.schedule, cfg.sim, ("zeta",))
        summary = moment_suite(run.b_values, run.samples["zeta"], run.times, cfg.gaps)
        rows = ["T_index,b_T,sup_second,sup_second_se," + ",".join(f"fourth_ratio_{g!r}" for g in cfg.gaps)]
        for i, b in enumerate(run.b_values):
            vals = [repr(summary.sup_second[i]), repr(summary.sup_second_se[i])]
            vals += [repr(summary.fourth_ratio[g][i]) for g in cfg.gaps]
            rows.append(f"{i},{b!r}," + ",".join(vals))
        _write(out, "moments.csv", "\n".join(rows) + "\n", cfg)
        _write_json(out, "moments.json", json.loads(summary.to_json()), cfg)
        log(f"theorem 1: uniformity={summary.uniformity:.3f} fourth_bound={summary.fourth_bound:.3f} "
            f"{'pass' if summary.passed else 'fail'}")
        return EXIT_PASS if summary.passed else EXIT_FAIL
    quantity = THEOREM_QUANTITY[theorem]
    run = run_schedule(model, limit, cfg.schedule, cfg.sim, (quantity,))
    report = convergence_report(
        quantity, run.b_values, run.samples[quantity], run.limit[quantity], run.times, cfg.times,
        cfg.alpha, cfg.ks_floor, cfg.quantile_threshold, n_excluded=run.n_excluded,
        header={"config_hash": cfg.hash, "theorem": theorem},
    )
    _write(out, f"theorem{theorem}.csv", report.to_csv(), cfg)
    (out / f"theorem{theorem}.json").write_text(report.to_json() + "\n")
    log(f"theorem {theorem} ({quantity}, {report.mode}): trend={report.trend} final={report.final_pass} "
        f"-> {report.verdict}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def do_dump_transform(cfg: ExperimentConfig, b: float, out: Path) -> int:
    model, _ = _model(cfg)
    table = build_f(model, b, X_max=cfg.sim.x_max)
    phi = build_phi(table, model, b)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "transform.csv"
    table.to_csv(path, phi)
    text = path.read_text()
    path.write_text(f"# config_hash={cfg.hash} b_T={b!r}\n{text}")
    return EXIT_PASS


def do_simulate(cfg: ExperimentConfig, b: float, out: Path, paths: int) -> int:
    model, _ = _model(cfg)
    s = cfg.sim
    ens = simulate_ensemble(
        model, b, s.dt, s.L, min(s.M, paths), s.base_seed, s.crn, x_max=s.x_max, n_record=s.n_record,
        allow_coarse=s.allow_coarse, workers=s.workers,
    )
    out.mkdir(parents=True, exist_ok=True)
    path = out / "paths.csv"
    ens.to_csv(path)
    text = path.read_text()
    path.write_text(f"# config_hash={cfg.hash} b_T={b!r} exited={ens.n_exited}\n{text}")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdelimits", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment file")
    common.add_argument("--workers", type=int, default=None, help="threads used for path simulation")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override [sim] base_seed")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="audit the conditions")
    v = sub.add_parser("verify", parents=[common], help="simulate and check one limit theorem")
    v.add_argument("--theorem", type=int, required=True, choices=range(1, 8))
    e = sub.add_parser("example", parents=[common], help="run check and verify for a built-in example")
    e.add_argument("name")
    d = sub.add_parser("dump-transform", parents=[common], help="write the scale-function table as CSV")
    d.add_argument("--b", type=float, required=True)
    s = sub.add_parser("simulate", parents=[common], help="write simulated paths as CSV")
    s.add_argument("--b", type=float, required=True)
    s.add_argument("--paths", type=int, default=10)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "example":
            cfg = parse_config(example_config_text(args.name), args.seed, args.workers)
        else:
            if not args.config:
                raise ConfigurationError("--config is required")
            cfg = load_config(args.config, args.seed, args.workers)
        out = Path(args.out or cfg.out or "results")
        _metadata(out, cfg, args.command)
        if args.command == "check":
            return do_check(cfg, out)
        if args.command == "verify":
            return do_verify(cfg, args.theorem, out)
        if args.command == "example":
            theorem = EXAMPLE_DEFAULTS[args.name]["theorem"]
            code = do_check(cfg, out, THEOREM_CONDITIONS[theorem])
            code2 = do_verify(cfg, theorem, out)
            return max(code, code2)
        if args.command == "dump-transform":
            return do_dump_transform(cfg, args.b, out)
        if args.command == "simulate":
            return do_simulate(cfg, args.b, out, args.paths)
    except HypothesisNotMetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ConfigurationError, InvalidParameterError, ResolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
