"""Command-line entry point.

Commands: ``solve``, ``sweep``, ``verify``, ``simulate``, ``export-sdpa`` and
``profile``.  Exit status is 0 on success, 1 when a program is infeasible
or a certificate fails verification, and 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import ARTIFACT_VERSION, write_csv, write_json
from .beam_model import BeamParameters, ParameterError, build_model
from .roa_optimizer import (
    BoundError,
    Degrees,
    FeedbackError,
    SearchError,
    SearchOptions,
    build_result,
    certify,
    compute_region_bound,
    optimize_ratio,
    sigma_profile,
    sweep_grid,
)
from .simulator import SimConfig, SimulationError, scaled_datum, simulate_and_fit
from .sos_program import CertificationError, Certificate, PreconditionError, assemble_roa_sdp, export_sdpa

OUTPUT_ENV = "BEAMROA_OUTPUT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("beamroa")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    beam: BeamParameters
    degrees: Degrees = Degrees()
    start: tuple = (1.0, 1.0)
    alpha: float = 0.0
    solver: str = "internal"
    output_dir: Path = Path("out")
    sweep: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)


_TOP_KEYS = {"beam", "degrees", "start", "alpha", "solver", "output_dir", "sweep", "simulation"}


def default_config_path() -> Path:
    return Path(str(resources.files("beamroa") / "data" / "unit_beam.json"))


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError("unknown config key(s): " + ", ".join(unknown))
    if "beam" not in data:
        raise ConfigError("missing config key: beam")
    try:
        beam = BeamParameters.from_dict(data["beam"])
    except ParameterError as exc:
        raise ConfigError(f"beam: {exc}")
    deg = data.get("degrees", {})
    degrees = Degrees(int(deg.get("q", 4)), int(deg.get("s", 4)))
    if degrees.q < 1 or degrees.s < 0:
        raise ConfigError("degrees must be positive")
    start = tuple(float(v) for v in data.get("start", (1.0, 1.0)))
    if len(start) != 2 or not 0 < start[0] <= start[1]:
        raise ConfigError("start must be [gamma, nu] with 0 < gamma <= nu")
    solver = data.get("solver", "internal")
    if solver not in ("internal", "export-only"):
        raise ConfigError("solver must be 'internal' or 'export-only'")
    return RunConfig(
        beam=beam,
        degrees=degrees,
        start=start,
        alpha=float(data.get("alpha", 0.0)),
        solver=solver,
        output_dir=Path(data.get("output_dir", "out")),
        sweep=dict(data.get("sweep", {})),
        simulation=dict(data.get("simulation", {})),
    )


def _parse_grid(text: str):
    try:
        a, b = text.lower().split("x")
        n, m = int(a), int(b)
    except ValueError:
        raise ConfigError(f"--grid expects NxM, got {text!r}")
    if n < 1 or m < 1:
        raise ConfigError("--grid sizes must be positive")
    return n, m


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.alpha is not None:
        cfg.alpha = float(args.alpha)
    if args.degree_q is not None:
        if args.degree_q < 1:
            raise ConfigError("--degree-q must be positive")
        cfg.degrees = Degrees(args.degree_q, cfg.degrees.s)
    if args.export_only:
        cfg.solver = "export-only"
    if args.output_dir is not None:
        cfg.output_dir = Path(args.output_dir)
    elif os.environ.get(OUTPUT_ENV):
        cfg.output_dir = Path(os.environ[OUTPUT_ENV])
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {exc}")
    if not os.access(cfg.output_dir, os.W_OK):
        raise ConfigError(f"output directory not writable: {cfg.output_dir}")
    return cfg


def _load_certificate(path: Path) -> Certificate:
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"certificate not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"certificate is not valid JSON: {exc}")
    payload = data.get("certificate", data)
    try:
        return Certificate.from_dict(payload)
    except KeyError as exc:
        raise ConfigError(f"certificate is missing key {exc}")


def _summary_lines(result) -> list:
    return [
        f"gamma        {result.gamma:.6f}",
        f"nu           {result.nu:.6f}",
        f"C_S (beta)   {result.C_S:.6f}",
        f"C_S sampled  {result.sampled_C_S:.6f}",
        f"C_Q          {result.C_Q:.6f}",
        f"ratio        {result.ratio:.6f}",
        f"kappa_bar    " + " ".join(f"{v:.4f}" for v in np.diag(result.kappa_bar)),
        f"alpha        {result.alpha:.6g}",
        f"delta        {result.delta:.6g}",
        f"eta          {result.eta:.6g}",
        f"epsilon      {result.epsilon:.6g}",
        f"epsilon_up   {result.epsilon_upper:.6g}",
    ]


def _write_bound_curves(out: Path, model, C_S, C_Q, alpha):
    bound = compute_region_bound(model, C_S, C_Q, alpha)
    write_csv(out / "epsilon_delta.csv", ["delta", "epsilon"], bound["curve_delta"].tolist(), "epsilon_vs_delta")
    write_csv(out / "epsilon_alpha.csv", ["alpha", "epsilon"], bound["curve_alpha"].tolist(), "epsilon_vs_alpha")


def cmd_export(cfg: RunConfig, args) -> int:
    model = build_model(cfg.beam)
    gamma, nu = cfg.start
    program = assemble_roa_sdp(model, gamma, nu, cfg.degrees.q, cfg.degrees.s)
    path = cfg.output_dir / "program.dat-s"
    path.write_text(export_sdpa(program))
    (cfg.output_dir / "program_layout.json").write_text(program.layout_json() + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_solve(cfg: RunConfig, args) -> int:
    if cfg.solver == "export-only":
        return cmd_export(cfg, args)
    model = build_model(cfg.beam)
    opts = SearchOptions(alpha=cfg.alpha, seed=args.seed, restarts=args.restarts, workers=args.workers)
    try:
        result = optimize_ratio(model, cfg.start, opts, cfg.degrees)
    except (SearchError, CertificationError, FeedbackError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    write_json(cfg.output_dir / "certificate.json", result.to_dict())
    _write_bound_curves(cfg.output_dir, model, result.C_S, result.C_Q, cfg.alpha)
    lines = _summary_lines(result)
    (cfg.output_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    model = build_model(cfg.beam)
    sw = cfg.sweep
    try:
        g_range = tuple(float(v) for v in sw["gamma_range"])
        n_range = tuple(float(v) for v in sw["nu_range"])
    except KeyError as exc:
        raise ConfigError(f"missing config key: sweep.{exc.args[0]}")
    grid = _parse_grid(args.grid) if args.grid else tuple(sw.get("grid", (20, 20)))
    try:
        rows = sweep_grid(model, g_range, n_range, grid, cfg.degrees, workers=args.workers)
    except ValueError as exc:
        raise ConfigError(str(exc))
    path = write_csv(cfg.output_dir / "sweep.csv", ["gamma", "nu", "beta", "ratio", "status"], rows, "ratio_contour")
    feasible = [r for r in rows if r[4] == "optimal"]
    if feasible:
        best = max(feasible, key=lambda r: r[3])
        print(f"best cell gamma={best[0]:.6f} nu={best[1]:.6f} ratio={best[3]:.6f}")
    print(f"wrote {path} ({len(rows)} rows, {len(rows) - len(feasible)} infeasible)")
    return EXIT_OK if feasible else EXIT_FAIL


def _certificate_path(cfg: RunConfig, args) -> Path:
    return Path(args.certificate) if args.certificate else cfg.output_dir / "certificate.json"


def cmd_verify(cfg: RunConfig, args) -> int:
    model = build_model(cfg.beam)
    cert = _load_certificate(_certificate_path(cfg, args))
    C_S, C_Q, margins = certify(model, cert, raise_on_failure=False)
    lines = [f"# {ARTIFACT_VERSION} certificate verification", f"gamma {cert.gamma!r}", f"nu {cert.nu!r}"]
    lines += [f"{k} {margins[k]:.9e}" for k in ("dissipation", "end", "boundary", "q_min", "q_max", "beta_gap")]
    lines.append(f"C_S {C_S:.9e}")
    lines.append(f"C_Q {C_Q:.9e}")
    for v in margins["violations"]:
        lines.append(f"FAIL {v}")
    lines.append("PASS" if not margins["violations"] else "FAIL")
    report = "\n".join(lines) + "\n"
    (cfg.output_dir / "verify_report.txt").write_text(report)
    sys.stdout.write(report)
    return EXIT_OK if not margins["violations"] else EXIT_FAIL


def _result_from_certificate(cfg: RunConfig, args):
    model = build_model(cfg.beam)
    cert = _load_certificate(_certificate_path(cfg, args))
    return model, build_result(model, cert, alpha=cfg.alpha)


def cmd_simulate(cfg: RunConfig, args) -> int:
    try:
        model, result = _result_from_certificate(cfg, args)
    except (CertificationError, FeedbackError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    sim = cfg.simulation
    frac = float(sim.get("radius_fraction", 0.5))
    n_cells = int(sim.get("n_cells", 200))
    try:
        config = SimConfig(
            n_cells=n_cells,
            cfl=float(sim.get("cfl", 0.9)),
            t_final=float(sim.get("t_final", 20.0)),
            initial_datum=scaled_datum(model, frac * result.epsilon, n_cells),
        )
    except SimulationError as exc:
        raise ConfigError(f"simulation: {exc}")
    traj, alpha_obs = simulate_and_fit(model, result, config)
    path = write_csv(cfg.output_dir / "trajectory.csv", traj.columns(), traj.rows(), "closed_loop_trajectory")
    print(f"alpha_observed {alpha_obs:.6g}")
    print(f"wrote {path}")
    if traj.blew_up:
        print("instability: norm grew beyond the blow-up threshold", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_profile(cfg: RunConfig, args) -> int:
    model = build_model(cfg.beam)
    cert = _load_certificate(_certificate_path(cfg, args))
    xs, q, sig = sigma_profile(model, cert)
    cols = ["x"] + [f"q{i + 1}_minus" for i in range(6)] + [f"q{i + 1}_plus" for i in range(6)] + ["sigma_min_S"]
    rows = [[xs[k], *q[k], sig[k]] for k in range(len(xs))]
    path = write_csv(cfg.output_dir / "profile.csv", cols, rows, "q_profile_and_sigma_min")
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "export-sdpa": cmd_export,
    "profile": cmd_profile,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beamroa", description="Boundary-feedback certificates for the IGEB beam.")
    p.add_argument("--version", action="version", version=f"beamroa {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration (default: bundled unit beam)")
    p.add_argument("--grid", help="sweep grid size NxM")
    p.add_argument("--alpha", type=float, help="decay rate for the region bound")
    p.add_argument("--degree-q", type=int, help="degree of the Lyapunov weight entries")
    p.add_argument("--seed", type=int, default=0, help="seed for optimizer restart points")
    p.add_argument("--restarts", type=int, default=0, help="extra randomized Nelder-Mead starts")
    p.add_argument("--export-only", action="store_true", help="write SDPA files instead of solving")
    p.add_argument("--certificate", help="certificate JSON (default: <output_dir>/certificate.json)")
    p.add_argument("--output-dir", help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
    p.add_argument("--workers", type=int, default=1, help="parallel processes for sweeps")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config or default_config_path())
        cfg = _apply_overrides(cfg, args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, PreconditionError, BoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
