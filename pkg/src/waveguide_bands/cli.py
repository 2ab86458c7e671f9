"""Command line entry point: ``waveguide-bands <command> --config run.toml``.

Every command writes its tables (CSV, 17 significant digits) and a
``manifest.json`` into ``--out``.  Exit status: 0 ok, 2 invalid input,
3 solver failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .cross_section import mask_from_config, rasterize_section, shape_from_config, solve_section
from .effective1d import (EffectivePotential, compute_bands, compute_gaps, effective_potential,
                          gap_slope_fit, locate_gap_by_fourier)
from .fiber3d import fiber_sweep, spectrum_union, validate_reduction
from .geometry import PeriodicProfile, build_geometry
from .numerics import SolverError

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "nan"
    return f"{float(x):.16e}"


def write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, command, cfg: RunConfig, out: Path, seed: int, workers: int):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.workers = workers
        self.files = []
        self.tolerances = {}
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name, header, rows):
        write_csv(self.out / name, header, rows)
        self.files.append(name)

    def json(self, name, obj):
        write_json(self.out / name, obj)
        self.files.append(name)

    def manifest(self):
        outputs = {f: hashlib.sha256((self.out / f).read_bytes()).hexdigest()
                   for f in sorted(self.files)}
        write_json(self.out / "manifest.json", {
            "command": self.command,
            "config_sha256": self.cfg.digest(),
            "config": self.cfg.raw,
            "seed": self.seed,
            "versions": {"waveguide_bands": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
            "tolerances": self.tolerances,
            "outputs": outputs,
        })


def _section_spectrum(cfg: RunConfig, seed):
    block = cfg.section
    return solve_section(mask_from_config(block), seed=seed)


def _twist_constant(cfg: RunConfig, seed):
    """Explicit ``twist_constant`` in [section] wins over solving the section."""
    if "twist_constant" in cfg.section:
        c = float(cfg.section["twist_constant"])
        if c < 0:
            raise ConfigError(f"twist_constant must be nonnegative, got {c}")
        return c
    return _section_spectrum(cfg, seed).twist_constant


def _potential(cfg: RunConfig, seed):
    g = build_geometry(cfg.geometry)
    return g, effective_potential(g, _twist_constant(cfg, seed), int(cfg.solver["n_samples"]))


def cmd_section(run: Run):
    cfg = run.cfg
    spec = _section_spectrum(cfg, run.seed)
    summary = {
        "h": spec.mask.h,
        "n_interior": spec.mask.n_interior,
        "lambda0": spec.lambda0,
        "lambda1": spec.lambda1,
        "twist_constant": spec.twist_constant,
        "twist_constant_discrete": spec.twist_constant_discrete,
    }
    rows = [(spec.mask.h, spec.mask.n_interior, spec.lambda0, spec.lambda1,
             spec.twist_constant, spec.twist_constant_discrete)]
    shape = shape_from_config(cfg.section)
    h = spec.mask.h
    for _ in range(int(cfg.solver["refinements"])):
        h /= 2
        s = solve_section(rasterize_section(shape, h, cfg.section.get("origin")), seed=run.seed)
        rows.append((h, s.mask.n_interior, s.lambda0, s.lambda1, s.twist_constant,
                     s.twist_constant_discrete))
    run.csv("section_convergence.csv",
            ["h", "n_interior", "lambda0", "lambda1", "twist_constant", "twist_constant_discrete"],
            rows)
    run.json("section.json", summary)
    spec.to_table(run.out / "ground_state.txt")
    run.files.append("ground_state.txt")
    print(f"lambda0 = {spec.lambda0:.10g}  lambda1 = {spec.lambda1:.10g}  "
          f"C(S) = {spec.twist_constant:.6g}")


def _gap_rows(report):
    rows = []
    for n, (b, g, w) in enumerate(zip(report.bands, report.gaps, report.widths), start=1):
        rows.append((n, b[0], b[1], None if g is None else g[0], None if g is None else g[1], w))
    return rows


GAP_HEADER = ["n", "band_lo", "band_hi", "gap_lo", "gap_hi", "width"]


def cmd_bands(run: Run):
    s = run.cfg.solver
    _, v = _potential(run.cfg, run.seed)
    bs = compute_bands(v, int(s["theta_count"]), int(s["n_max"]), int(s["half_width"]),
                       workers=run.workers)
    thetas, kappa = bs.full_zone()
    run.csv("bands.csv", ["theta"] + [f"kappa_{n}" for n in range(1, bs.n_max + 1)],
            [(th, *row) for th, row in zip(thetas, kappa)])
    report = compute_gaps(v, int(s["n_max"]), int(s["half_width"]), float(s["split_tol"]))
    out = report.to_dict()
    out["monotone"] = [bool(x) for x in bs.monotone()]
    run.json("gaps.json", out)
    run.tolerances["split_tol"] = float(s["split_tol"])
    opened = report.open_gaps()
    print(f"{bs.n_max} bands on {bs.thetas.size} quasimomenta; open gaps: "
          + (", ".join(f"n={n} width={w:.3e}" for n, w in
                       ((n, report.widths[n - 1]) for n, _ in opened)) or "none"))


def cmd_gaps(run: Run):
    s = run.cfg.solver
    _, v = _potential(run.cfg, run.seed)
    report = compute_gaps(v, int(s["n_max"]), int(s["half_width"]), float(s["split_tol"]))
    run.csv("gaps.csv", GAP_HEADER, _gap_rows(report))
    run.json("gaps.json", report.to_dict())
    run.tolerances["split_tol"] = float(s["split_tol"])
    for row in _gap_rows(report):
        state = "closed" if row[3] is None else f"open  width={row[5]:.6e}"
        print(f"gap {row[0]}: {state}")


def _perturbation(cfg: RunConfig, seed) -> EffectivePotential:
    block = cfg.gap_asymptotics["w"]
    n = int(cfg.solver["n_samples"])
    if block is None:
        _, v = _potential(cfg, seed)
        return v.without_mean()
    if not isinstance(block, dict):
        raise ConfigError("[gap_asymptotics] w must be a table with 'period' and 'modes' or 'samples'")
    unknown = set(block) - {"period", "modes", "samples"}
    if unknown or "period" not in block or ("modes" in block) == ("samples" in block):
        raise ConfigError("[gap_asymptotics] w needs 'period' and exactly one of 'modes' or 'samples'")
    period = float(block["period"])
    prof = (PeriodicProfile.from_modes(block["modes"], period) if "modes" in block
            else PeriodicProfile.from_samples(block["samples"], period))
    return EffectivePotential.from_function(prof, period, n)


def cmd_gap_asymptotics(run: Run):
    cfg = run.cfg
    ga = cfg.gap_asymptotics
    hw = int(cfg.solver["half_width"])
    if ga["mu"] is None:
        raise ConfigError("[gap_asymptotics] needs a 'mu' list")
    w = _perturbation(cfg, run.seed)
    fit_rows, width_rows = [], []
    for n in ga["gaps"]:
        fit = gap_slope_fit(w, int(n), ga["mu"], hw)
        fit_rows.append((fit.n, fit.fitted_slope, fit.predicted_slope, fit.relative_deviation,
                         fit.second_order))
        width_rows += [(fit.n, m, d, d / m) for m, d in zip(fit.mu, fit.delta)]
        tag = ("second-order gap (omega_n = 0)" if fit.second_order
               else f"relative deviation {fit.relative_deviation:.3e}")
        print(f"gap {fit.n}: fitted slope {fit.fitted_slope:.6e}, predicted "
              f"{fit.predicted_slope:.6e}, {tag}")
    run.csv("slope_fit.csv", ["n", "fitted_slope", "predicted_slope", "relative_deviation",
                              "second_order"], fit_rows)
    run.csv("gap_widths.csv", ["n", "mu", "delta", "delta_over_mu"], width_rows)
    if ga["gammas"]:
        cfg.require("bands")
        g = build_geometry(cfg.geometry)
        c = _twist_constant(cfg, run.seed)
        rows = []
        for n in ga["gaps"]:
            for gamma in ga["gammas"]:
                loc = locate_gap_by_fourier(g, c, int(n), float(gamma),
                                            int(cfg.solver["n_samples"]), hw)
                rows.append((loc.n, loc.gamma, loc.predicted, loc.measured, loc.ratio,
                             loc.relative_deviation))
                print(f"gap {loc.n}, gamma {loc.gamma:g}: measured/predicted = {loc.ratio:.6f}")
        run.csv("gap_scaling.csv", ["n", "gamma", "predicted", "measured", "ratio",
                                    "relative_deviation"], rows)


def reduction_verdict(report, bracket, exact_tol):
    """``("PASS" | "FAIL" | "INCOMPLETE", note)`` for a reduction sweep."""
    if report.max_deviation() <= exact_tol:
        return "PASS", f"all deviations <= {exact_tol:g} (separable case)"
    ratios = report.decay_ratios(1)
    if ratios is None:
        return "INCOMPLETE", "insufficient epsilon points for a decay estimate"
    lo, hi = bracket
    ok = bool(np.all((ratios >= lo) & (ratios <= hi)))
    note = f"d_1 decay ratios {np.round(ratios, 4).tolist()} vs bracket [{lo}, {hi}]"
    return ("PASS" if ok else "FAIL"), note


def cmd_validate_reduction(run: Run):
    cfg = run.cfg
    red = cfg.reduction
    if red["epsilons"] is None:
        raise ConfigError("[reduction] needs an 'epsilons' list")
    g = build_geometry(cfg.geometry)
    mask = mask_from_config(cfg.section)
    section = solve_section(mask, seed=run.seed)
    L = g.period
    thetas = red["thetas"] if red["thetas"] is not None else [0.0, np.pi / (2 * L), np.pi / L]
    report = validate_reduction(
        g, mask, red["epsilons"], thetas, int(red["n_max"]), int(cfg.solver["n_s"]),
        section=section, include_ablation=bool(red["include_ablation"]), seed=run.seed,
        workers=run.workers, tol=float(cfg.solver["tol"]), half_width=int(cfg.solver["half_width"]))
    run.csv("reduction.csv", ["epsilon", "theta", "n", "E", "reference", "deviation"],
            report.rows())
    if report.deviation_ablation is not None:
        rows = [(r[0], r[1], r[2], report.reference_ablation[e, t, n],
                 report.deviation_ablation[e, t, n])
                for r, (e, t, n) in zip(report.rows(), np.ndindex(report.deviation.shape))]
        run.csv("reduction_ablation.csv",
                ["epsilon", "theta", "n", "reference", "deviation"], rows)
    verdict, note = reduction_verdict(report, red["decay_bracket"], float(red["exact_tol"]))
    slopes = report.slopes()
    ratios = report.decay_ratios(1)
    summary = {
        "verdict": verdict,
        "note": note,
        "lambda0": report.lambda0,
        "twist_constant_discrete": report.twist_constant,
        "slopes": None if slopes is None else slopes.tolist(),
        "decay_ratios_n1": None if ratios is None else ratios.tolist(),
        "decay_bracket": list(red["decay_bracket"]),
    }
    if report.deviation_ablation is not None:
        summary["ablation_deviation_n1"] = report.deviation_ablation[:, :, 0].tolist()
    run.json("reduction_summary.json", summary)
    run.tolerances.update(solver_tol=float(cfg.solver["tol"]), exact_tol=float(red["exact_tol"]))
    print(f"{verdict}: {note}")


def cmd_spectrum_union(run: Run):
    cfg = run.cfg
    su = cfg.spectrum_union
    g = build_geometry(cfg.geometry)
    mask = mask_from_config(cfg.section)
    section = solve_section(mask, seed=run.seed)
    thetas = np.linspace(0.0, np.pi / g.period, int(su["theta_count"]))
    e = fiber_sweep(g, mask, thetas, int(su["n_max"]), int(cfg.solver["n_s"]), section,
                    seed=run.seed, workers=run.workers, tol=float(cfg.solver["tol"]))
    union = spectrum_union(e, float(su["merge_tol"]))
    run.csv("fiber_bands.csv", ["theta", "n", "E"],
            [(th, n + 1, e[i, n]) for i, th in enumerate(thetas) for n in range(e.shape[1])])
    run.json("spectrum.json", {
        "epsilon": g.epsilon,
        "lambda0_over_eps2": section.lambda0 / g.epsilon ** 2,
        "bands": union.bands.tolist(),
        "intervals": union.intervals,
        "gaps": union.gaps,
    })
    run.tolerances.update(merge_tol=float(su["merge_tol"]), solver_tol=float(cfg.solver["tol"]))
    print(f"{len(union.intervals)} spectral intervals, {len(union.gaps)} gaps")


COMMANDS = {
    "section": cmd_section,
    "bands": cmd_bands,
    "gaps": cmd_gaps,
    "gap-asymptotics": cmd_gap_asymptotics,
    "validate-reduction": cmd_validate_reduction,
    "spectrum-union": cmd_spectrum_union,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="waveguide-bands",
        description="Spectra of thin periodic twisted waveguides and their 1D limit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="TOML run configuration")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                       help="parallel fiber solves (default: available cores)")
        p.add_argument("--seed", type=int, default=0, help="seed for Lanczos start vectors")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = load_config(args.config)
        cfg.require(args.command)
        run = Run(args.command, cfg, args.out, args.seed, args.workers)
        COMMANDS[args.command](run)
        run.manifest()
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, KeyError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
