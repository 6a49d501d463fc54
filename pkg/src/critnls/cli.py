"""Command-line entry point: ``critnls <subcommand> [--config F] [--out D] ...``.

Every run writes its artifacts plus ``manifest.json`` (config hash, library
versions, wall time, tolerances, exit status) into the output directory.
The exit status is 0 exactly when every invariant checked by the run held.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import (Experiment, RunConfig, config_hash, dump_toml, from_tree, get_path, load,
                     set_path)
from .errors import ConfigError, CritNLSError, SingularTime
from .evolution import (data_size, evolve, scale_to_epsilon, track_weighted_growth,
                        trend_slope_log)
from .nonlinearity import classify_threshold, eval_F, power_decay
from .oscillator import (SigmaKind, asymptotic_coeffs, matching_residuals, solve_fundamental, verify_asymptotics,
                         wronskian, write_zeta_csv)
from .scattering import (PhaseConvention, build_record, extract_W, final_residual,
                         profile_compare, write_record)
from .spectral import (auto_out_grid, box_size, dispersive_fit, gaussian, leibniz_corpus,
                       leibniz_ratio, mdfm_propagate, write_field)

TOLERANCES = {
    "wronskian": 1e-8,
    "matching": 1e-10,
    "unitarity": 1e-8,
    "l2_drift": 1e-9,
    "escape_abort": 1e-6,
    "spectral_tail_abort": 1e-8,
    "dilation_escape": 1e-8,
}


@dataclass
class RunReport:
    experiment: str
    ok: bool
    out: Path
    summary: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def status(self) -> int:
        return 0 if self.ok else 1


def _initial(cfg: RunConfig, grid=None):
    ini = cfg.sections["initial"]
    g = grid or cfg.grid
    u0 = gaussian(g, width=float(ini["width"]), center=ini["center"], k0=ini["k0"],
                  amplitude=ini.get("amplitude"))
    if ini.get("amplitude") is None:
        u0 = scale_to_epsilon(u0, cfg.solver.epsilon_prime, cfg.solver.gamma)
    return u0


def _pair(cfg: RunConfig, t_max: float):
    return solve_fundamental(cfg.model, t_max=max(t_max, 10 * cfg.model.r0), tol=1e-10)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_default))


def _default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    return str(o)


# ----------------------------------------------------------------------------
# experiments


def exp_zeta(cfg: RunConfig, out: Path) -> RunReport:
    z = cfg.sections["zeta"]
    pair = solve_fundamental(cfg.model, t_max=float(z["t_max"]), tol=float(z["tol"]))
    times = np.linspace(-float(z["t_max"]), float(z["t_max"]), int(z["points"]))
    write_zeta_csv(out / "zeta.csv", pair, times)
    werr = float(np.max(np.abs(wronskian(pair, times) - 1)))
    summary = {"wronskian_max_err": werr, "r_assume": pair.r_assume,
               "lower_bound_c": pair.lower_bound_c, "zeros": list(pair.zeros)}
    violations = []
    if werr > TOLERANCES["wronskian"]:
        violations.append(f"wronskian error {werr:.3g}")
    if cfg.model.critical:
        mres = float(np.max(np.abs(matching_residuals(pair)))) if cfg.model.kind is SigmaKind.MATCHED else 0.0
        summary.update(alpha=cfg.model.alpha, coeffs={str(k): v for k, v in pair.coeffs.items()},
                       matching_max_residual=mres)
        if mres > TOLERANCES["matching"]:
            violations.append(f"matching residual {mres:.3g}")
        try:
            fit = asymptotic_coeffs(pair)
            summary["fitted_coeffs"] = {str(k): v for k, v in fit.coeffs.items()}
        except CritNLSError as exc:
            summary["fitted_coeffs"] = f"unavailable: {exc}"
    rep = verify_asymptotics(pair)
    summary["asymptotics"] = {"passed": rep.passed, "entries": rep.entries}
    _write_json(out / "matching.json", summary)
    return RunReport("zeta", not violations, out, summary, violations)


def exp_propagate(cfg: RunConfig, out: Path) -> RunReport:
    p = cfg.sections["propagate"]
    pair = _pair(cfg, float(p["t_max"]))
    u0 = _initial(cfg, cfg.profile_grid)
    times = np.geomspace(float(p["t_min"]), float(p["t_max"]), int(p["count"]))
    rows, violations = [], []
    for t in times:
        try:
            og = auto_out_grid(u0, pair, t)
            u = mdfm_propagate(u0, pair, t, out_grid=og)
        except SingularTime as exc:
            rows.append([t, math.nan, math.nan, math.nan, f"skipped: {exc}"])
            continue
        drift = abs(u.norm() / u0.norm() - 1)
        if drift > TOLERANCES["unitarity"]:
            violations.append(f"unitarity {drift:.3g} at t={t:g}")
        rows.append([t, float(pair.zeta2(t)), u.norm(), u.linf(), ""])
    with open(out / "propagate.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "zeta2", "l2", "linf", "note"])
        w.writerows(rows)
    summary = {}
    good = [r for r in rows if not r[4]]
    try:
        fit = dispersive_fit([r[0] for r in good], [r[3] for r in good], pair, n=cfg.params.n)
        summary = {"slope_vs_zeta2": fit.slope_vs_zeta2, "slope_vs_t": fit.slope_vs_t,
                   "log_exponent": fit.log_exponent}
    except CritNLSError as exc:
        summary = {"fit": f"unavailable: {exc}"}
    _write_json(out / "dispersive_fit.json", summary)
    return RunReport("propagate", not violations, out, summary, violations)


def _evolve(cfg: RunConfig, out: Path):
    pair = _pair(cfg, cfg.solver.t_max)
    u0 = _initial(cfg)
    need = box_size(_initial(cfg, cfg.profile_grid), pair, cfg.solver.t_max)
    print(f"box half-width {cfg.grid.L:g} (sizing rule asks for {need:.4g})", file=sys.stderr)
    tr = evolve(u0, cfg.solver, cfg.model, cfg.params, pair=pair, profile_grid=cfg.profile_grid,
                check_data_size=cfg.sections["initial"].get("amplitude") is None)
    tr.write_csv(out / "diagnostics.csv")
    write_field(out / "final.bin", tr.u_last)
    if cfg.solver.store_fields:
        snapdir = out / "snapshots"
        snapdir.mkdir(exist_ok=True)
        for k, u in enumerate(tr.snapshots):
            if u is not None:
                write_field(snapdir / f"u_{k:04d}.bin", u)
    drift = tr.l2_drift()
    summary = {"box_half_width_needed": need, "box_half_width": cfg.grid.L,
               "l2_drift": drift, "steps": len(tr.steps), "t_last": tr.t_last,
               "data_size": data_size(u0, cfg.solver.gamma)}
    t = np.asarray(tr.times)
    m = t >= cfg.model.r0
    if m.sum() >= 3:
        z = np.abs(pair.zeta2(t[m]))
        ns = tr.diag("linf")[m] * (1 + z) ** (cfg.params.n / 2)
        slope, se = trend_slope_log(t[m], ns)
        summary.update(normalized_sup_slope=slope, normalized_sup_slope_se=se,
                       normalized_sup_ratio=float(ns.max() / ns.min()))
    try:
        summary["growth_coefficient"] = track_weighted_growth(tr, t_min=pair.r_assume).coefficient
    except CritNLSError as exc:
        summary["growth_coefficient"] = None
        summary["growth_note"] = str(exc)
    violations = [] if drift <= TOLERANCES["l2_drift"] else [f"L2 drift {drift:.3g}"]
    if need > cfg.grid.L:
        summary["box_warning"] = f"box half-width {cfg.grid.L:g} below the sizing rule {need:.4g}"
    return pair, tr, summary, violations


def exp_evolve(cfg: RunConfig, out: Path) -> RunReport:
    _, _, summary, violations = _evolve(cfg, out)
    _write_json(out / "summary.json", summary)
    return RunReport("evolve", not violations, out, summary, violations)


def exp_scatter(cfg: RunConfig, out: Path) -> RunReport:
    pair, tr, summary, violations = _evolve(cfg, out)
    sc = cfg.sections["scatter"]
    results = {}
    for conv in PhaseConvention:
        rec = build_record(tr, pair, cfg.params, conv)
        res = extract_W(rec)
        entry = {"alpha_fit": res.alpha, "alpha_stderr": res.alpha_stderr,
                 "final_residual": final_residual(res)}
        if sc.get("ablation", True):
            ab = extract_W(rec, ablate=True)
            entry["final_residual_ablated"] = final_residual(ab)
            entry["ablated_alpha_fit"] = ab.alpha
        try:
            cmp = profile_compare(rec, mode=sc.get("compare_mode", "loglog"))
            entry["profile_compare_slope"] = cmp.slope
            entry["profile_compare_decreasing"] = cmp.decreasing
        except CritNLSError as exc:
            entry["profile_compare"] = f"not applicable: {exc}"
        write_record(out / f"record_{conv.value}", rec, {"config_hash": cfg.hash()})
        results[conv.value] = entry
    summary["scattering"] = results
    _write_json(out / "summary.json", summary)
    return RunReport("scatter", not violations, out, summary, violations)


def exp_classify(cfg: RunConfig, out: Path) -> RunReport:
    c = cfg.sections["classify"]
    n = cfg.params.n
    rows = []
    for th in c["theta3"]:
        F = lambda a, th=th: a ** float(th)
        rep = classify_threshold(power_decay(n), F, (float(c["s0"]), float(c["S_max"])),
                                 float(c["divergence_bound"]))
        rows.append({"F": f"|u|^{th}", "verdict": rep.verdict.value, "tail_fit": rep.tail_fit,
                     "tail_estimate": rep.tail_estimate if math.isfinite(rep.tail_estimate) else None})
    for label, params in (("F", cfg.params),):
        rep = classify_threshold(power_decay(n), lambda a: float(eval_F(a, params)),
                                 (float(c["s0"]), float(c["S_max"])), float(c["divergence_bound"]))
        rows.append({"F": label, "verdict": rep.verdict.value, "tail_fit": rep.tail_fit,
                     "tail_estimate": rep.tail_estimate if math.isfinite(rep.tail_estimate) else None})
    _write_json(out / "verdicts.json", rows)
    return RunReport("classify", True, out, {"verdicts": rows}, [])


def exp_leibniz(cfg: RunConfig, out: Path) -> RunReport:
    lz = cfg.sections["leibniz"]
    from .spectral import Grid

    g = Grid(cfg.params.n, int(lz["N"]), float(lz["L"]))
    corpus = leibniz_corpus(g, int(lz["corpus"]), cfg.seed)
    rows, maxima, violations = [], {}, []
    for gam in lz["gammas"]:
        for which in ("L", "S"):
            vals = [leibniz_ratio(f, float(gam), cfg.params, which) for f in corpus]
            maxima[f"{which}_{gam}"] = float(np.max(vals))
            if not np.all(np.isfinite(vals)):
                violations.append(f"non-finite ratio for gamma={gam}, {which}")
            rows.extend([[k, gam, which, v] for k, v in enumerate(vals)])
    with open(out / "leibniz.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["function", "gamma", "term", "ratio"])
        w.writerows(rows)
    _write_json(out / "leibniz_summary.json", maxima)
    return RunReport("leibniz", not violations, out, {"corpus_max": maxima}, violations)


def exp_acceptance(cfg: RunConfig, out: Path) -> RunReport:
    from .acceptance import run_suite

    only = cfg.sections["acceptance"].get("only") or None
    results = run_suite(only)
    _write_json(out / "acceptance.json", [r.to_dict() for r in results])
    failed = [f"criterion {r.number}" for r in results if not r.passed]
    return RunReport("acceptance", not failed, out,
                     {"passed": sum(r.passed for r in results), "total": len(results)}, failed)


HEADLINE = ("slope_vs_zeta2", "log_exponent", "normalized_sup_slope", "growth_coefficient",
            "l2_drift")


def _sweep_job(args):
    raw, out = args
    try:
        cfg = from_tree(raw)
        rep = run(cfg, Path(out))
        return rep.status, rep.summary, None
    except CritNLSError as exc:
        return 1, {}, f"{type(exc).__name__}: {exc}"


def exp_sweep(cfg: RunConfig, out: Path, jobs: int = 1) -> RunReport:
    sw = cfg.sections["sweep"]
    values = sw["values"]
    if not values:
        raise ConfigError("sweep.values", "must be a non-empty list")
    base = set_path(cfg.raw, "experiment", sw.get("experiment", "evolve"))
    tasks = []
    for k, v in enumerate(values):
        raw = set_path(base, sw["axis"], v)
        raw = set_path(raw, "out", str(out / f"job_{k:03d}"))
        tasks.append((raw, str(out / f"job_{k:03d}")))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_job, tasks))
    else:
        results = [_sweep_job(t) for t in tasks]
    failed = []
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([sw["axis"], "status", *HEADLINE, "alpha_fit_single"])
        for v, (status, summary, err) in zip(values, results):
            if err is not None:
                failed.append({"value": v, "error": err})
                continue
            alpha = summary.get("scattering", {}).get("single", {}).get("alpha_fit")
            w.writerow([v, status, *[summary.get(h) for h in HEADLINE], alpha])
    if failed:
        _write_json(out / "failures.json", failed)
    return RunReport("sweep", not failed and all(r[0] == 0 for r in results), out,
                     {"values": values, "failed": failed}, [f["error"] for f in failed])


RUNNERS = {
    Experiment.ZETA: exp_zeta,
    Experiment.PROPAGATE: exp_propagate,
    Experiment.EVOLVE: exp_evolve,
    Experiment.SCATTER: exp_scatter,
    Experiment.CLASSIFY: exp_classify,
    Experiment.LEIBNIZ: exp_leibniz,
    Experiment.ACCEPTANCE: exp_acceptance,
}


def manifest(cfg: RunConfig, report: RunReport) -> dict:
    return {
        "experiment": report.experiment,
        "config_hash": cfg.hash(),
        "config": cfg.raw,
        "status": report.status,
        "violations": report.violations,
        "wall_time_s": report.wall_time,
        "tolerances": TOLERANCES,
        "versions": {"critnls": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "reproducibility": "CSV/JSON outputs are deterministic for a fixed config and seed; "
                           "binary fields may differ in the last bits across FFT backends",
    }


def run(cfg: RunConfig, out: Path | None = None, jobs: int = 1) -> RunReport:
    """Execute the configured experiment and write artifacts plus manifest."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dump_toml(cfg.raw))
    t0 = time.perf_counter()
    if cfg.experiment is Experiment.SWEEP:
        rep = exp_sweep(cfg, out, jobs)
    else:
        rep = RUNNERS[cfg.experiment](cfg, out)
    rep.wall_time = time.perf_counter() - t0
    _write_json(out / "manifest.json", manifest(cfg, rep))
    return rep


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="critnls", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for e in Experiment:
        p = sub.add_parser(e.value, help=f"run the {e.value} experiment")
        p.add_argument("--config", type=Path, help="TOML run configuration")
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
        p.add_argument("--jobs", type=int, default=1, help="parallel jobs for sweeps")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a config field, e.g. solver.t_max=1e4 (repeatable)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = [f"experiment={json.dumps(args.command)}", *args.override]
    try:
        cfg = load(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = args.out or cfg.out
    try:
        rep = run(cfg, out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CritNLSError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"experiment": rep.experiment, "status": rep.status, "out": str(rep.out),
                      "violations": rep.violations}, indent=2))
    return rep.status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
