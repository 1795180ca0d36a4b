"""Command line entry point.

    shearflow <command> --config run.yaml [--out DIR] [--seed N] [--no-timestamp]

Commands: ``verify-operators``, ``verify-potential``, ``simulate``,
``attractor`` and ``constants-audit``.  Exit status is 0 on success, 1 when
an invariant or estimate is violated (or a module raises), and 2 on
configuration errors.  Errors are also written as ``error.json``.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attractor import ensemble_sections, fb_norm, gronwall_check, lemma41_check
from .config import RunConfig, dump_config, parse_config
from .errors import ConfigError, ShearflowError
from .io import write_csv, write_json
from .problem import Problem, build_problem, flow_parameters
from .simulate import energy_monitor, run, vprime_monitor
from .suites import operator_suite, potential_suite, suite_passed

__all__ = ["main", "dispatch", "COMMANDS"]

log = logging.getLogger("shearflow")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


class _Context:
    def __init__(self, cfg: RunConfig, out: Path, timestamp: bool):
        self.cfg, self.out, self.timestamp = cfg, out, timestamp
        self.written: list[str] = []

    def comment(self) -> str | None:
        if not self.timestamp:
            return None
        return f"generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}"

    def csv(self, name, header, rows):
        self.written.append(name)
        return write_csv(self.out / name, header, rows, self.comment())

    def json(self, name, obj):
        self.written.append(name)
        return write_json(self.out / name, obj)


def _checks_record(checks) -> list:
    return [c.to_dict() for c in checks]


def cmd_verify_operators(ctx: _Context, problem: Problem) -> int:
    checks = operator_suite(problem, rng=problem.seeds["verification"])
    ok = suite_passed(checks)
    ctx.json("verify_operators.json", {"passed": ok, "checks": _checks_record(checks)})
    for c in checks:
        log.info("%-28s %-5s %.3e", c.name, "ok" if c.passed else "FAIL", c.value)
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_verify_potential(ctx: _Context, problem: Problem) -> int:
    checks, record = potential_suite(problem)
    ok = suite_passed(checks)
    ctx.json("verify_potential.json", {"passed": ok, "checks": _checks_record(checks), **record})
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_constants_audit(ctx: _Context, problem: Problem) -> int:
    ctx.json("audit.json", problem.audit.to_dict())
    return EXIT_OK


def _plot_norms(path: Path, traj, title: str):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not installed; skipping %s", path.name)
        return
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(traj.t, np.maximum(traj.norm_H, 1e-300), label="|v|_H")
    ax.semilogy(traj.t, np.maximum(traj.norm_V, 1e-300), label="|v|_V")
    ax.semilogy(traj.t, np.maximum(traj.vprime, 1e-300), label="|v'|_V*")
    ax.set_xlabel("t")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def cmd_simulate(ctx: _Context, problem: Problem) -> int:
    cfg = ctx.cfg
    ckdir = ctx.out / "checkpoints" if cfg["integration"]["checkpoint_every"] else None
    params = flow_parameters(cfg, problem.seeds, ckdir)
    traj = run(params, problem.basis, problem.ops, problem.audit, jn=problem.jn, config_hash=problem.hash)
    audit = problem.audit
    energy = energy_monitor(traj, audit, cfg["integration"]["energy_c_tol"])
    vprime = vprime_monitor(traj, audit)
    ctx.csv("trajectory.csv", ["t", "norm_H", "norm_V", "vprime_dual", "energy_slack"], traj.rows())
    steps = np.arange(1, traj.n_samples)
    ctx.csv("energy.csv", ["step", "t", "slack", "tol", "integrated_excess", "integrated_budget"],
            np.column_stack([steps, traj.t[1:], energy.slack, energy.tol, energy.integrated_excess,
                             energy.integrated_budget]) if steps.size else [])
    ctx.json("audit.json", audit.to_dict())
    report = {"energy": energy.to_dict(), "vprime": vprime.to_dict(), "flags": traj.flags,
              "final_norm_H": float(traj.norm_H[-1])}
    ok = energy.violations == 0 and vprime.violations == 0
    if traj.horizon >= 1.0:
        g = gronwall_check(traj, audit, cfg["attractor"]["gronwall_tol"])
        report["gronwall"] = g.to_dict()
        report["fb_norm"] = fb_norm(traj, cfg["attractor"]["dh"]).value
        report["lemma41"] = lemma41_check(traj, audit, cfg["attractor"]["dh"]).to_dict()
        ok = ok and g.holds and report["lemma41"]["violations"] == 0
    report["passed"] = ok
    ctx.json("monitors.json", report)
    if "npz" in cfg["output"]["formats"]:
        ctx.written.append("trajectory.npz")
        np.savez(ctx.out / "trajectory.npz", t=traj.t, a=traj.a)
    if cfg["output"]["plot"]:
        _plot_norms(ctx.out / "norms.png", traj, "norm channels")
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_attractor(ctx: _Context, problem: Problem) -> int:
    cfg = ctx.cfg
    at = cfg["attractor"]
    params = flow_parameters(cfg, problem.seeds)
    rep = ensemble_sections(params, problem.seeds["ensemble"], at["t_section"], at["count"], problem.basis,
                            problem.ops, problem.audit, jn=problem.jn, n_points=at["n_points"],
                            spacing=at["spacing"], dh=at["dh"], workers=at["workers"],
                            gronwall_tol=at["gronwall_tol"])
    N = problem.basis.size
    ctx.csv("sections.csv", ["member", "t", "norm_H", "norm_V"] + [f"a{i}" for i in range(N)],
            rep.section_rows())
    data = rep.to_dict()
    ok = (rep.fraction_inside(at["gronwall_tol"]) == 1.0
          and all(c["gronwall"]["violations"] == 0 and c["absorbing"]["absorbed_violations"] == 0
                  and c["lemma41"]["violations"] == 0 for c in rep.checks))
    data["passed"] = ok
    ctx.json("attractor.json", data)
    if cfg["output"]["plot"]:
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt

            fig, ax = plt.subplots(figsize=(4.5, 4))
            ax.scatter(rep.cloud_H, rep.cloud_V, s=10)
            ax.axvline(rep.gronwall_radius, color="k", ls="--", lw=1)
            ax.set_xlabel("|v|_H")
            ax.set_ylabel("|v|_V")
            fig.tight_layout()
            fig.savefig(ctx.out / "sections.png", dpi=120, metadata={"Software": None})
            plt.close(fig)
        except ImportError:
            log.warning("matplotlib not installed; skipping sections.png")
    return EXIT_OK if ok else EXIT_VIOLATION


COMMANDS = {
    "verify-operators": cmd_verify_operators,
    "verify-potential": cmd_verify_potential,
    "simulate": cmd_simulate,
    "attractor": cmd_attractor,
    "constants-audit": cmd_constants_audit,
}


def _error(out: Path | None, record: dict) -> None:
    text = json.dumps(record, default=str)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n")
        except OSError:
            pass


def dispatch(command: str, cfg: RunConfig, out: Path, timestamp: bool = True) -> int:
    """Run ``command`` on a parsed configuration, writing artifacts to ``out``."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(dump_config(cfg))
    ctx = _Context(cfg, out, timestamp)
    try:
        problem = build_problem(cfg)
        status = COMMANDS[command](ctx, problem)
    except ConfigError as exc:
        _error(out, exc.to_record())
        return EXIT_CONFIG
    except ShearflowError as exc:
        _error(out, exc.to_record())
        return EXIT_VIOLATION
    log.info("%s finished with status %d; wrote %s", command, status, ", ".join(ctx.written))
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shearflow", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.add_argument("--seed", type=int, help="override integration.seed (unsigned 64-bit)")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp header from CSV files")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out) if args.out else None
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}", args.seed)
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        _error(out, exc.to_record())
        return EXIT_CONFIG
    except (OSError, UnicodeDecodeError) as exc:
        _error(out, {"code": type(exc).__name__, "module": "cli", "message": str(exc), "witness": args.config})
        return EXIT_CONFIG
    if out is None:
        out = Path(cfg["output"]["directory"] or "shearflow_out")
    return dispatch(args.command, cfg, out, timestamp=not args.no_timestamp)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
