"""Command-line front end for the reconstruction experiments.

    hivpip run --test test2 --sigma 0.05 --t1 25,50 --out results/
    hivpip forward --test test1 --out truth/
    hivpip gradient-check --out gc/
    hivpip reconstruct --obs truth/observations.csv --states truth/states.csv --out rec/

Configuration files hold flat ``key = value`` lines (``#`` starts a comment)
with dotted keys such as ``model.alpha``, ``noise.sigma`` or
``optimizer.theta``.  Command-line flags override file keys.

Exit codes: 0 success, 1 at least one experiment row failed, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .estimates import EstimateConstants, write_level_csv
from .experiment import TEST1, TEST2, CaseConfig, prepare_case, run_case
from .mesh import TimeMesh
from .model import ModelParams
from .objective import ObservationSet, SmoothnessWeight, write_cell_csv
from .optimizer import OptimizerConfig, Problem, gradient_check, run_acga
from .solvers import NewtonConfig, write_node_csv
from .synthetic import TruthSpec, initial_guess_eta0

log = logging.getLogger(__name__)

PRESETS = {"test1": TEST1, "test2": TEST2, "custom": TEST2}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    test: str = "test2"
    sigmas: tuple = (0.05,)
    t1s: tuple = (25.0,)
    seed: int = 0
    n_seeds: int = 1
    case: CaseConfig = field(default_factory=lambda: TEST2)
    constants: EstimateConstants = field(default_factory=EstimateConstants)
    out: Path = Path("results")

    def __post_init__(self):
        if self.test not in PRESETS:
            raise ConfigError(f"unknown test {self.test!r}; choose from {sorted(PRESETS)}")
        if not self.sigmas or not self.t1s:
            raise ConfigError("sigma and T1 lists must be nonempty")
        for s in self.sigmas:
            if not 0 <= s <= 1:
                raise ConfigError(f"noise level {s} outside [0, 1]")
        for t1 in self.t1s:
            if not 0 <= t1 < self.case.t2:
                raise ConfigError(f"T1 = {t1} must lie in [0, T2)")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be at least 1")

    @property
    def seeds(self) -> list:
        return [self.seed + i for i in range(self.n_seeds)]


def parse_config_text(text: str) -> dict:
    """``key = value`` lines into a dict of strings; later keys win."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _coerce(value: str, like):
    if isinstance(like, bool):
        if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"expected a boolean, got {value!r}")
        return value.lower() in ("true", "1", "yes")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float) or like is None:
        return None if value.lower() == "none" else float(value)
    return value


def _section(obj, prefix: str, items: dict):
    known = {f.name: getattr(obj, f.name) for f in fields(obj)}
    changes = {}
    for key, value in items.items():
        if key not in known:
            raise ConfigError(f"unknown key {prefix}.{key}")
        changes[key] = _coerce(value, known[key])
    return replace(obj, **changes)


_CASE_KEYS = {
    "n_cells", "n_obs", "t2", "t_end", "fine_factor", "fit_degree", "zeta",
    "misfit_scale",
}
_CASE_ALIASES = {
    "tikhonov.gamma": "gamma",
    "tikhonov.mu": "gamma_mu",
    "tikhonov.sigma_floor": "sigma_floor",
}


def build_config(values: dict) -> ExperimentConfig:
    """Turn parsed ``key -> string`` pairs into an ExperimentConfig."""
    values = dict(values)
    try:
        test = values.pop("test", "test2")
        if test not in PRESETS:
            raise ConfigError(f"unknown test {test!r}; choose from {sorted(PRESETS)}")
        case = PRESETS[test]
        sections = {"model": {}, "optimizer": {}, "newton": {}, "truth": {}, "estimates": {}}
        case_changes = {}
        top = {}
        for key, value in values.items():
            if key in _CASE_ALIASES:
                case_changes[_CASE_ALIASES[key]] = value
            elif key == "noise.sigma":
                top["sigma"] = value
            elif key == "noise.seed":
                top["seed"] = value
            elif "." in key:
                head, rest = key.split(".", 1)
                if head not in sections:
                    raise ConfigError(f"unknown section in key {key!r}")
                sections[head][rest] = value
            elif key in _CASE_KEYS:
                case_changes[key] = value
            elif key in ("sigma", "t1", "seed", "n_seeds", "out"):
                top[key] = value
            else:
                raise ConfigError(f"unknown key {key!r}")
        typed = {}
        for key, value in case_changes.items():
            typed[key] = _coerce(value, getattr(case, key))
        case = case.with_(**typed)
        if sections["model"]:
            case = case.with_(params=_section(case.params, "model", sections["model"]))
        if sections["optimizer"]:
            case = case.with_(optimizer=_section(case.optimizer, "optimizer", sections["optimizer"]))
        if sections["newton"]:
            case = case.with_(newton=_section(case.newton, "newton", sections["newton"]))
        if sections["truth"]:
            case = case.with_(truth=_section(case.truth, "truth", sections["truth"]))
        constants = _section(EstimateConstants(), "estimates", sections["estimates"])
        return ExperimentConfig(
            test=test,
            sigmas=_floats(top["sigma"]) if "sigma" in top else (case.sigma,),
            t1s=_floats(top["t1"]) if "t1" in top else (case.t1,),
            seed=int(top.get("seed", 0)),
            n_seeds=int(top.get("n_seeds", 1)),
            case=case,
            constants=constants,
            out=Path(top.get("out", "results")),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------- results


@dataclass
class ResultsTable:
    """(T1, sigma, level) -> e_eta; ``None`` marks a level that was not reached."""

    rows: list = field(default_factory=list)

    def add(self, t1: float, sigma: float, level: int, e_eta) -> None:
        if e_eta is not None and not e_eta >= 0:
            raise ValueError("relative errors are nonnegative")
        self.rows.append((float(t1), float(sigma), int(level), e_eta))

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda r: r[:3])


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def emit_table(tbl: ResultsTable, path) -> None:
    """CSV ``T1,sigma,level,e_eta`` sorted by (T1, sigma, level); blank e_eta for unreached levels."""
    with open(path, "w") as fh:
        fh.write("T1,sigma,level,e_eta\n")
        for t1, sigma, level, e in tbl.sorted_rows():
            fh.write(f"{_fmt(t1)},{_fmt(sigma)},{level},{_fmt(e)}\n")


def emit_summary(per_seed: dict, max_level: int, path) -> None:
    """Mean, min and max of e_eta over seeds; ``n`` counts seeds that reached the level."""
    with open(path, "w") as fh:
        fh.write("T1,sigma,level,n,e_eta_mean,e_eta_min,e_eta_max\n")
        for (t1, sigma) in sorted(per_seed):
            runs = per_seed[(t1, sigma)]
            for level in range(max_level + 1):
                vals = [r[level] for r in runs if level < len(r)]
                if vals:
                    cols = (len(vals), float(np.mean(vals)), min(vals), max(vals))
                else:
                    cols = (0, None, None, None)
                fh.write(f"{_fmt(t1)},{_fmt(sigma)},{level},{cols[0]}," + ",".join(_fmt(c) for c in cols[1:]) + "\n")


def _row_dir(out: Path, t1: float, sigma: float, seed: int) -> Path:
    return out / f"T1_{t1:g}_sigma_{sigma:g}_seed_{seed}"


def _observation_meta(case: CaseConfig, seed: int) -> dict:
    return {
        "sigma": case.sigma,
        "seed": seed,
        "T1": case.t1,
        "T2": case.t2,
        "n_obs": case.n_obs,
        "layout": "uniform on [T1, T2]",
        "truth": case.truth.describe(),
    }


def write_observations(obs: ObservationSet, meta: dict, path: Path) -> None:
    obs.to_csv(path)
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _write_row(result, row_dir: Path, constants: EstimateConstants) -> None:
    row_dir.mkdir(parents=True, exist_ok=True)
    case, inputs, report = result.config, result.inputs, result.report
    write_observations(inputs.observations, _observation_meta(case, case.seed), row_dir / "observations.csv")
    write_level_csv(row_dir / "levels.csv", report, inputs.problem.gamma, constants)
    for lv in report.levels:
        write_cell_csv(row_dir / f"level{lv.level}_eta.csv", lv.mesh, lv.eta, "eta")
        write_cell_csv(row_dir / f"level{lv.level}_residual.csv", lv.mesh, lv.residual, "R")
        lv.state.to_csv(row_dir / f"level{lv.level}_state.csv")
        lv.log.to_csv(row_dir / f"level{lv.level}_cg.csv")


def _jsonable(obj):
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (tuple, list)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    return obj


def run_experiment(cfg: ExperimentConfig) -> tuple[ResultsTable, list]:
    """Run every (T1, sigma, seed) row; returns the table and the failed rows.

    With several seeds the table holds the mean over the seeds that reached
    each level; ``summary.csv`` adds min and max.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    table = ResultsTable()
    failures = []
    rows = []
    per_seed = {}
    max_level = cfg.case.optimizer.max_refinements
    for t1 in cfg.t1s:
        for sigma in cfg.sigmas:
            runs = []
            for seed in cfg.seeds:
                case = cfg.case.with_(t1=t1, sigma=sigma, seed=seed)
                row_dir = _row_dir(out, t1, sigma, seed)
                entry = {"T1": t1, "sigma": sigma, "seed": seed, "dir": row_dir.relative_to(out).as_posix()}
                try:
                    result = run_case(case)
                    _write_row(result, row_dir, cfg.constants)
                except Exception as exc:  # recorded per row; the grid carries on
                    log.error("row T1=%g sigma=%g seed=%d failed: %s", t1, sigma, seed, exc)
                    entry.update(status="failed", error=f"{type(exc).__name__}: {exc}")
                    failures.append(entry)
                else:
                    errs = [float(e) for e in result.errors]
                    runs.append(errs)
                    entry.update(
                        status="ok",
                        errors=errs,
                        stop_reason=result.report.stop_reason,
                        gamma=result.inputs.problem.gamma,
                    )
                rows.append(entry)
            per_seed[(t1, sigma)] = runs
            for level in range(max_level + 1):
                vals = [r[level] for r in runs if level < len(r)]
                table.add(t1, sigma, level, float(np.mean(vals)) if vals else None)
    emit_table(table, out / "results.csv")
    emit_summary(per_seed, max_level, out / "summary.csv")
    manifest = {
        "test": cfg.test,
        "sigmas": list(cfg.sigmas),
        "t1s": list(cfg.t1s),
        "seeds": cfg.seeds,
        "case": _jsonable(asdict(cfg.case)),
        "estimate_constants": asdict(cfg.constants),
        "nominal_constants": cfg.constants.nominal,
        "rows": rows,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return table, failures


# ---------------------------------------------------------------- subcommands


def _cmd_run(cfg: ExperimentConfig, args) -> int:
    table, failures = run_experiment(cfg)
    for t1, sigma, level, e in table.sorted_rows():
        print(f"T1={t1:g} sigma={sigma:g} level={level} e_eta={_fmt(e) or '-'}")
    return 1 if failures else 0


def _cmd_forward(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    case = cfg.case.with_(t1=cfg.t1s[0], sigma=cfg.sigmas[0], seed=cfg.seed)
    inputs = prepare_case(case)
    inputs.data.trajectory.to_csv(out / "trajectory.csv")
    write_observations(inputs.observations, _observation_meta(case, case.seed), out / "observations.csv")
    write_node_csv(out / "states.csv", inputs.mesh, np.column_stack([inputs.u2, inputs.u3]), ("u2", "u3"))
    write_cell_csv(out / "eta0.csv", inputs.mesh, inputs.eta0, "eta0")
    print(f"wrote truth trajectory and observations to {out}")
    return 0


def _cmd_gradient_check(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    case = cfg.case.with_(t1=cfg.t1s[0], sigma=cfg.sigmas[0], seed=cfg.seed)
    inputs = prepare_case(case)
    rng = np.random.default_rng(cfg.seed)
    dirs = rng.standard_normal((args.directions, inputs.mesh.n_cells))
    gc = gradient_check(inputs.problem, inputs.mesh, inputs.eta0, inputs.eta0, dirs)
    gc.to_csv(out / "gradient_check.csv")
    print(f"aggregate relative discrepancy {gc.aggregate_discrepancy:.6g} over {len(dirs)} directions")
    return 0


def _cmd_reconstruct(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    case = cfg.case
    meta_path = Path(str(args.obs) + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    t1 = float(meta.get("T1", cfg.t1s[0]))
    t2 = float(meta.get("T2", case.t2))
    sigma = float(meta.get("sigma", cfg.sigmas[0]))
    case = case.with_(t1=t1, t2=t2, sigma=sigma)
    obs = ObservationSet.from_csv(args.obs, t1, t2)
    scale = case.misfit_scale if case.misfit_scale is not None else float(np.max(np.abs(obs.values)))
    obs = obs.with_scale(scale if scale > 0 else 1.0)
    mesh = TimeMesh.uniform(case.t_end, case.n_cells)
    if args.states is not None:
        data = np.loadtxt(args.states, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[0] != mesh.n_nodes:
            raise ConfigError(f"{args.states} has {data.shape[0]} rows, the initial mesh has {mesh.n_nodes} nodes")
        eta0 = initial_guess_eta0(data[:, 1], data[:, 2], case.params, mesh, case.fit_degree)
    else:
        eta0 = np.full(mesh.n_cells, args.eta0)
    problem = Problem(
        case.params, obs, SmoothnessWeight(t1, t2, case.zeta), case.resolved_gamma, tuple(case.u0), case.newton
    )
    truth = case.truth if args.truth else None
    report = run_acga(problem, mesh, eta0, eta0, case.optimizer, truth=truth)
    write_level_csv(out / "levels.csv", report, problem.gamma, cfg.constants)
    for lv in report.levels:
        write_cell_csv(out / f"level{lv.level}_eta.csv", lv.mesh, lv.eta, "eta")
        write_cell_csv(out / f"level{lv.level}_residual.csv", lv.mesh, lv.residual, "R")
        lv.state.to_csv(out / f"level{lv.level}_state.csv")
    print(f"{len(report.levels)} levels, final |R| = {report.final.residual_norm:.6g} ({report.stop_reason})")
    return 0


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value configuration file")
    common.add_argument("--test", choices=sorted(PRESETS), help="experiment preset")
    common.add_argument("--sigma", help="noise level(s), comma separated")
    common.add_argument("--t1", help="observation start time(s), comma separated")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--n-seeds", type=int, help="number of consecutive seeds to average over")
    common.add_argument("--max-refinements", type=int, help="ACGA refinement limit")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hivpip", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="full experiment grid")
    sub.add_parser("forward", parents=[common], help="truth solve and observations only")
    gc = sub.add_parser("gradient-check", parents=[common], help="adjoint gradient against finite differences")
    gc.add_argument("--directions", type=int, default=10)
    rec = sub.add_parser("reconstruct", parents=[common], help="reconstruct eta from an observation file")
    rec.add_argument("--obs", type=Path, required=True, help="CSV with columns t,g")
    rec.add_argument("--states", type=Path, help="CSV t,u2,u3 on the initial mesh nodes, for the initial guess")
    rec.add_argument("--eta0", type=float, default=0.5, help="constant initial guess when --states is absent")
    rec.add_argument("--truth", action="store_true", help="report errors against the configured truth")
    return parser


def config_from_args(args) -> ExperimentConfig:
    values = {}
    if args.config is not None:
        try:
            values = parse_config_text(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    flags = {
        "test": args.test,
        "sigma": args.sigma,
        "t1": args.t1,
        "seed": None if args.seed is None else str(args.seed),
        "n_seeds": None if args.n_seeds is None else str(args.n_seeds),
        "optimizer.max_refinements": None if args.max_refinements is None else str(args.max_refinements),
        "out": None if args.out is None else str(args.out),
    }
    if args.sigma is not None:
        values.pop("noise.sigma", None)
    if args.seed is not None:
        values.pop("noise.seed", None)
    values.update({k: v for k, v in flags.items() if v is not None})
    return build_config(values)


COMMANDS = {
    "run": _cmd_run,
    "forward": _cmd_forward,
    "gradient-check": _cmd_gradient_check,
    "reconstruct": _cmd_reconstruct,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
