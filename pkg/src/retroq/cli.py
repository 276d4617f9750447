"""``retroq`` command line: run or validate a scenario config.

Exit status is 0 when every check of the scenario passes, 1 when a check
fails and 2 on any error (bad config, I/O, library errors).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Callable

import numpy as np

from . import bell, bohmtraj, factorize, qcore, qgrid, tsvf
from .config import ScenarioConfig, load_config
from .errors import RetroqError, ValidationError

log = logging.getLogger("retroq")

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class Outcome:
    """Metrics, artifacts and check results collected while a scenario runs."""

    def __init__(self, out: Path):
        self.out = out
        self.metrics: dict = {}
        self.artifacts: list[str] = []
        self.checks: dict[str, bool] = {}

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def check(self, name: str, ok: bool) -> None:
        self.checks[name] = bool(ok)
        log.info("check %s: %s", name, "pass" if ok else "FAIL")

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _grid(p) -> qgrid.Grid1D:
    g = p["grid"]
    return qgrid.Grid1D.span(g["x_min"], g["x_max"], g["n"])


def _pair(p) -> tsvf.TwoStateVector:
    return tsvf.gaussian_pair(_grid(p), p["dt"], initial=p["initial"], final=p["final"],
                              mass=p["mass"], t_i=p["t_i"], t_f=p["t_f"])


# Scenarios ------------------------------------------------------------------------------

def _run_factorize(p, seed, res: Outcome) -> None:
    rng = np.random.default_rng(seed)
    n, d = p["parties"], p["dim"]
    if p["state"] == "singlet":
        n, d, joint = 2, 2, qcore.singlet()
    elif p["state"] == "ghz":
        d, joint = 2, qcore.ghz(n)
    else:
        joint = qcore.random_state(d**n, rng)
    idx = qcore.ProductIndex((d,) * n)
    if p["observables"] == "random":
        ops = [qcore.random_hermitian(d, rng) for _ in range(n)]
    else:
        if d != 2 or len(p["observables"]) != n:
            raise ValueError("named Pauli observables need qubits and one name per party")
        ops = [qcore.pauli(name) for name in p["observables"]]
    table = factorize.reconstruct_statistics(joint, idx, ops)
    table.to_csv(res.path("correlation_table.csv"))
    res.metrics.update(max_table_diff=table.max_abs_diff, parties=n, dim=d,
                       n_outcomes=len(table.outcomes))
    res.check("max_table_diff", table.max_abs_diff <= p["tol"])


def _run_weakfield(p, seed, res: Outcome) -> None:
    tsv = _pair(p)
    field = tsvf.weak_density(tsv, p["kind"], p["t"])
    field.to_csv(res.path("weak_field.csv"))
    tsvf.log_negativity(field)
    ov = tsv.overlap(p["t"])
    res.metrics.update(min_value=field.min_value, x_at_min=field.x_at_min,
                       integral=field.integral(), overlap_abs=abs(ov))
    res.check("finite", bool(np.all(np.isfinite(field.values))))
    if p["expect_negative"]:
        res.check("negative", field.min_value < -1e-3)


def _run_average(p, seed, res: Outcome) -> None:
    grid = _grid(p)
    h = qgrid.Hamiltonian1D(grid, p["mass"])
    w = qgrid.make_gaussian(grid, **p["initial"])
    w = qgrid.Wave1P(grid, w.amps, p["t_i"])
    basis = tsvf.box_modes(grid) if p["basis"] == "box" else tsvf.basis_containing(w)
    avg = tsvf.average_over_final(w, basis, p["kind"], p["t"], h=h, t_i=p["t_i"],
                                  t_f=p["t_f"], dt=p["dt"])
    steps = tsvf._lattice_steps(p["t_i"], p["t"], p["dt"])
    w_t = qgrid.evolve(w, h, p["dt"], steps)
    std = tsvf.standard_density(w_t, h, p["kind"])
    avg.to_csv(res.path("average_field.csv"))
    std.to_csv(res.path("standard_field.csv"))
    diff = float(np.max(np.abs(avg.values - std.values)))
    res.metrics.update(max_pointwise_diff=diff, basis_size=int(np.shape(basis)[0]))
    res.check("max_pointwise_diff", diff <= p["tol"])


def _bell_records(settings_1, settings_2, n, seed, planted) -> bell.RecordBatch:
    records = bell.sample_settings(settings_1, settings_2, n, seed)
    if planted:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1 << 20]))
        records = bell.plant_violation(records, rng)
    return records


def _run_bell(p, seed, res: Outcome) -> None:
    a_list = list(np.atleast_1d(p["a"]).astype(float))
    b_list = list(np.atleast_1d(p["b"]).astype(float))
    records = _bell_records(a_list, b_list, p["samples"], seed, p["planted_violation"])
    records.to_csv(res.path("records.csv"))
    worst = 0.0
    corr = []
    for a in a_list:
        for b in b_list:
            e, se = bell.empirical_correlation(records, a, b)
            e0 = bell.singlet_correlation(a, b)
            worst = max(worst, abs(e - e0) / se)
            corr.append({"a": a, "b": b, "empirical": e, "stderr": se, "analytic": e0})
    res.metrics.update(correlations=corr, max_correlation_z=worst)
    res.check("correlations", worst <= p["sigma"])
    if len(a_list) >= 2:
        rep = bell.locality_check(records, sigma=p["sigma"])
        rep.write(res.path("locality.json"))
        res.metrics.update(max_cond_discrepancy=rep.max_cond_discrepancy,
                           lambda_distance=rep.lambda_distance)
        res.check("locality", rep.passed)


def _run_chsh(p, seed, res: Outcome) -> None:
    a, a2, b, b2 = p["settings"]
    records = _bell_records([a, a2], [b, b2], p["samples"], seed, p["planted_violation"])
    records.to_csv(res.path("records.csv"))
    s_emp, s_se = bell.empirical_chsh(records, a, a2, b, b2)
    s_th = bell.chsh(a, a2, b, b2)
    rep = bell.locality_check(records, sigma=p["sigma"])
    rep.chsh = s_emp
    rep.write(res.path("locality.json"))
    res.metrics.update(chsh=s_emp, chsh_stderr=s_se, chsh_analytic=s_th,
                       max_cond_discrepancy=rep.max_cond_discrepancy,
                       lambda_dependence_z=rep.lambda_dependence_z,
                       lambda_distance=rep.lambda_distance)
    res.check("chsh", abs(s_emp - s_th) <= p["sigma"] * s_se)
    res.check("locality", rep.passed)


def _run_trajectories(p, seed, res: Outcome) -> None:
    grid = _grid(p)
    h = qgrid.Hamiltonian1D(grid, p["mass"])
    w = qgrid.make_gaussian(grid, **p["initial"])
    w = qgrid.Wave1P(grid, w.amps, p["t_i"])
    steps = tsvf._lattice_steps(p["t_i"], p["t_f"], p["dt"])
    w_f = qgrid.Wave1P(grid, qgrid.evolve(w, h, p["dt"], steps).amps, p["t_f"])
    # "containing" puts psi(t_f) in the final basis: the f = i case
    basis = tsvf.box_modes(grid) if p["basis"] == "box" else tsvf.basis_containing(w_f)
    spec = bohmtraj.EnsembleSpec(p["n_traj"], p["sampler"], seed, p["bins"])
    rep = bohmtraj.ensemble_density(spec, w, basis, h, p["t_probe"], t_i=p["t_i"],
                                    t_f=p["t_f"], dt=p["dt"])
    rep.write(res.path("ensemble.json"))

    if p["n_write"]:
        # sample paths for f = i, the equivariant case
        tsv = tsvf.TwoStateVector(w, w_f, h, p["t_i"], p["t_f"], p["dt"])
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        x0 = np.sort(bohmtraj.sample_positions(grid, w.density(), p["n_write"], rng))
        times, pos, sing = bohmtraj.integrate_batch(tsv, x0, p["dt"], stop=p["t_probe"])
        bohmtraj.write_trajectories(res.path("trajectories.csv"), times, pos, sing)

    res.metrics.update(chi2=rep.chi2, dof=rep.dof, p_value=rep.p_value,
                       neg_mass_fraction=rep.neg_mass_fraction, n_singular=rep.n_singular)
    res.check("p_value", rep.p_value > p["alpha"])


def _run_continuity(p, seed, res: Outcome) -> None:
    coarse = _pair(p)
    g = coarse.grid
    fine = _pair(dict(p, grid={"x_min": g.x_min, "x_max": g.x_max, "n": 2 * g.n - 1}))
    r1 = tsvf.continuity_residual(coarse, p["t"], p["dt_probe"])
    r2 = tsvf.continuity_residual(fine, p["t"], p["dt_probe"] / 2)
    rate = tsvf.density_rate(coarse, p["t"], p["dt_probe"])
    rho = tsvf.weak_density(coarse, "density", p["t"])
    r1.to_csv(res.path("continuity_residual.csv"))
    rho.to_csv(res.path("weak_density.csv"))
    tsvf.log_negativity(rho)
    m1 = float(np.max(np.abs(r1.values)))
    m2 = float(np.max(np.abs(r2.values)))
    ratio = m1 / m2 if m2 > 0 else float("inf")
    res.metrics.update(residual=m1, residual_refined=m2, reduction=ratio,
                       rate_integral=rate.integral(), min_value=rho.min_value,
                       x_at_min=rho.x_at_min)
    res.check("reduction", ratio >= p["min_ratio"])
    res.check("rate_integral", abs(rate.integral()) <= p["integral_tol"])


RUNNERS: dict[str, Callable[[dict, int, Outcome], None]] = {
    "factorize": _run_factorize,
    "weakfield": _run_weakfield,
    "average": _run_average,
    "bell": _run_bell,
    "chsh": _run_chsh,
    "trajectories": _run_trajectories,
    "continuity": _run_continuity,
}


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> int:
    """Run one scenario, write its artifacts and ``report.json``; return the exit status."""
    out = Path(out_dir or cfg.out or Path("out") / cfg.scenario)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    root = logging.getLogger()
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    try:
        log.info("scenario %s seed %d", cfg.scenario, cfg.seed)
        res = Outcome(out)
        start = time.perf_counter()
        RUNNERS[cfg.scenario](cfg.params, cfg.seed, res)
        elapsed = time.perf_counter() - start
        report = {
            "scenario": cfg.scenario,
            "seed": cfg.seed,
            "elapsed_s": elapsed,
            "metrics": res.metrics,
            "checks": res.checks,
            "pass": res.passed,
            "artifacts": res.artifacts + ["run.log"],
        }
        _write_json(out / "report.json", report)
        log.info("result %s", "pass" if res.passed else "FAIL")
        return EXIT_PASS if res.passed else EXIT_FAIL
    finally:
        root.removeHandler(handler)
        handler.close()


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="retroq", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario")
    run.add_argument("--config", required=True, help="JSON scenario config")
    run.add_argument("--out", help="output directory (default: config 'out' or out/<scenario>)")
    run.add_argument("--seed", type=int, help="override the config seed")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--config", required=True)
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            print(f"ok: {cfg.scenario} (seed {cfg.seed})")
            return EXIT_PASS
        if args.seed is not None:
            if args.seed < 0:
                raise ValueError("--seed must be non-negative")
            cfg = cfg.with_seed(args.seed)
        status = run_scenario(cfg, args.out)
        print(f"{cfg.scenario}: {'pass' if status == EXIT_PASS else 'FAIL'}")
        return status
    except ValidationError as exc:
        for path, msg in exc.errors:
            print(f"invalid config: {path}: {msg}", file=sys.stderr)
        return EXIT_ERROR
    except (RetroqError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - any crash maps to the error status
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
