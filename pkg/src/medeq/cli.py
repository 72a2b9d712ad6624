"""Command-line front end: ``medeq <kind> [config] [--set section.key=value] [--quiet]``.

Each run writes CSV artifacts and a ``manifest.json`` (config echo, versions,
timings, every gate with its measured values) into the configured output
directory. The exit status is 0 exactly when every gate passes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
import traceback
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import KINDS, STANDARD_TEXT, ScenarioConfig, parse_config, with_kind
from .errors import ConfigError

FLOAT_FMT = "{:.17g}"


def _threads() -> int:
    raw = os.environ.get("MEDEQ_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class Gate:
    name: str
    passed: bool
    measured: dict
    threshold: dict


@dataclass
class RunRecord:
    config: ScenarioConfig
    out: Path
    quiet: bool = False
    gates: list[Gate] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def say(self, text: str):
        if not self.quiet:
            print(text, flush=True)

    def gate(self, name: str, passed: bool, measured: dict, threshold: dict):
        g = Gate(name, bool(passed), _plain(measured), _plain(threshold))
        self.gates.append(g)
        status = "PASS" if g.passed else "FAIL"
        vals = ", ".join(f"{k}={_short(v)}" for k, v in g.measured.items())
        self.say(f"[{status}] {name}: {vals}")

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
        path = self.out / name
        path.write_text(buf.getvalue())
        self.artifacts.append(name)
        return path


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.3e}"
    if isinstance(v, list):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def _plain(d):
    if isinstance(d, dict):
        return {str(k): _plain(v) for k, v in d.items()}
    if isinstance(d, (list, tuple, np.ndarray)):
        return [_plain(v) for v in d]
    if isinstance(d, (bool, np.bool_)):
        return bool(d)
    if isinstance(d, np.integer):
        return int(d)
    if isinstance(d, (float, np.floating)):
        v = float(d)
        return v if math.isfinite(v) else str(v)
    return d


# ----- pipelines ---------------------------------------------------------------


def _discretization(cfg: ScenarioConfig):
    from .scenarios import Discretization

    return Discretization(cfg.stack(), cfg.n, cfg.k, cfg.lam_max, cfg.units)


def run_dispersion(cfg: ScenarioConfig, rec: RunRecord):
    from .dispersion import bath_spectral, epsilon_of_omega, kramers_kronig_residual
    from .errors import GridError
    from .lattice import build_grids

    p = cfg.section("dispersion")
    omega = np.linspace(0.0, p["omega_max"], p["count"])
    stack = cfg.stack()
    for i, layer in enumerate(stack.layers, 1):
        model = layer.model
        eps = epsilon_of_omega(model, omega)
        rec.write_csv(f"eps_layer{i}.csv", ["omega", "eps_re", "eps_im"], zip(omega, eps.real, eps.imag))
        if model.is_vacuum:
            continue
        pole_only = type(model)(model.poles, 0.0)
        try:
            kk = kramers_kronig_residual(omega, epsilon_of_omega(pole_only, omega))
            rec.gate(f"kramers-kronig layer {i}", kk.residual < 1e-3, {"residual": kk.residual}, {"residual": 1e-3})
        except GridError as exc:
            rec.gate(f"kramers-kronig layer {i}", False, {"error": str(exc)}, {"residual": 1e-3})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        grids = build_grids(stack, cfg.n, cfg.k, cfg.lam_max)
    bath = bath_spectral(grids.cell_models, grids.spectral.nodes)
    for i in bath.coupled_cells[:1]:
        rec.write_csv("bath.csv", ["lambda", "nu", "sigma"], zip(bath.lambdas, bath.nu[i], bath.sigma[i]))


def run_green(cfg: ScenarioConfig, rec: RunRecord):
    from .ln_solver import assemble_and_invert, green_identity_residual

    disc = _discretization(cfg)
    p = cfg.section("green")
    omegas = np.linspace(p["omega_min"], p["omega_max"], p["count"])

    def one(w):
        g = assemble_and_invert(disc.cell_models, disc.h0, w)
        res, ok = green_identity_residual(g, cfg.units.c)
        return g, res, ok

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(one, omegas))
    rows = [(w, g.residual, res, g.reciprocity_defect()) for w, (g, res, _) in zip(omegas, results)]
    rec.write_csv("green_identity.csv", ["omega", "solve_residual", "identity_residual", "reciprocity"], rows)
    x = disc.grids.spatial.x
    for j, (w, (g, _, _)) in enumerate(zip(omegas[: p["dump"]], results)):
        rec.write_csv(f"green_{j:03d}.csv", ["x", "xp", "re", "im"],
                      ((x[a], x[b], g.G[a, b].real, g.G[a, b].imag) for a in range(x.size) for b in range(x.size)))
    applicable = [r for r in results if r[2]]
    worst = max((r[1] for r in applicable), default=0.0)
    rec.gate("green identity", worst < 1e-12 if applicable else True,
             {"max_residual": worst, "applicable": bool(applicable)}, {"max_residual": 1e-12})
    solve = max(r[0].residual for r in results)
    rec.gate("green solve residual", solve < 1e-11, {"max_residual": solve}, {"max_residual": 1e-11})


def _initial_state(cfg, disc, section):
    from .af_dynamics import FieldState
    from .scenarios import pulse_state

    p = cfg.section(section)
    if p.get("initial", "pulse") == "random":
        rng = np.random.default_rng(cfg.seed)
        lay = disc.generator.layout
        return FieldState.from_flat(lay, rng.standard_normal(lay.size))
    return pulse_state(disc, p["x0"], p["width"], p["wavenumber"])


def run_evolve(cfg: ScenarioConfig, rec: RunRecord):
    from .af_dynamics import em_energy, energy, evolve

    disc = _discretization(cfg)
    gen = disc.generator
    p = cfg.section("evolve")
    st = _initial_state(cfg, disc, "evolve")
    e0 = energy(st, gen)
    times = np.linspace(0.0, p["t"], p["samples"])
    x = disc.grids.spatial.x
    rows_e = []
    cur, t_prev = st, 0.0
    for j, t in enumerate(times):
        if t > t_prev:
            cur = evolve(cur, gen, t - t_prev, method=p["method"], dt=p["dt"])
            t_prev = t
        e, em = energy(cur, gen), em_energy(cur, gen)
        rows_e.append((t, em, e - em, e))
        # B is stored on faces; the snapshot reports its centre average
        b_c = 0.5 * (cur.F3[:-1] + cur.F3[1:])
        rec.write_csv(f"snapshot_{j:03d}.csv", ["x", "E", "B"], zip(x, cur.F1, b_c))
    rec.write_csv("energy.csv", ["t", "E_energy", "bath_energy", "total_energy"], rows_e)
    drift = max(abs(r[3] - e0) / e0 for r in rows_e)
    tol = 1e-12 if p["method"] == "exact" else 1e-6
    rec.gate("energy drift", drift < tol, {"max_rel_drift": drift}, {"max_rel_drift": tol})


def run_eigen(cfg: ScenarioConfig, rec: RunRecord):
    from .af_dynamics import assemble_He, he_eigen

    disc = _discretization(cfg)
    spec = he_eigen(assemble_He(disc.generator), refine=cfg.section("eigen")["refine"])
    rec.write_csv("spectrum.csv", ["index", "omega2"], enumerate(spec.all_omega2))
    rec.write_csv("eigen_residuals.csv", ["index", "omega2", "residual"],
                  ((j, w2, r) for j, (w2, r) in enumerate(zip(spec.omega2, spec.residuals))))
    worst = spec.max_residual()
    rec.gate("eigen residual", worst < 1e-10, {"max_residual": worst, "pairs": int(spec.omega2.size)},
             {"max_residual": 1e-10})


def run_extract(cfg: ScenarioConfig, rec: RunRecord):
    from .scattering import (f0_extract_integral, f0_extract_limit, moller, relative_difference,
                             sample_f1_history)

    disc = _discretization(cfg)
    gen = disc.generator
    p = cfg.section("extract")
    y0 = _initial_state(cfg, disc, "extract").flat()
    T = p["horizon"]
    lim = f0_extract_limit(y0, gen, T)
    itg = f0_extract_integral(sample_f1_history(y0, gen, T, p["dt"]), gen, y0)
    mo = moller(gen, "past", T).primed(y0)
    lam = gen.lambdas
    rows = []
    for a, cell in enumerate(itg.cells):
        for k in range(lam.size):
            v = itg.F0p[a, k]
            rows.append((int(cell), k, lam[k], v.real, v.imag))
    rec.write_csv("primed_F0.csv", ["cell", "k", "lambda", "re", "im"], rows)
    d1 = relative_difference(lim.F0p, itg.F0p)
    d2 = relative_difference(mo.F0p, itg.F0p)
    rec.gate("two-route agreement", d1 < 1e-3, {"rel_diff": d1}, {"rel_diff": 1e-3})
    rec.gate("moller vs quadrature", d2 < 1e-3, {"rel_diff": d2}, {"rel_diff": 1e-3})


def run_equiv(cfg: ScenarioConfig, rec: RunRecord):
    from .dispersion import OscillatorModel, epsilon_of_omega
    from .phasespace import CanonicalBasis
    from .scattering import identify_langevin, primed_observables_integral

    disc = _discretization(cfg)
    gen = disc.generator
    p = cfg.section("equiv")
    cells = gen.coupled_cells
    if cells.size == 0:
        rec.gate("langevin identification", True, {"coupled_cells": 0}, {})
        return
    basis = CanonicalBasis(gen, cells)
    primed = primed_observables_integral(basis, p["horizon"], p["dt"])
    eps_i = np.array([epsilon_of_omega(OscillatorModel(disc.cell_models[c].poles, 0.0), gen.lambdas).imag
                      for c in cells])
    rep = identify_langevin(primed, gen, eps_imag=eps_i)
    for line in rep.lines():
        rec.say(line)
    rows = []
    for a, c in enumerate(cells):
        for k in range(gen.lambdas.size):
            af, ln = rep.af_diag[a, k], rep.ln_diag[a, k]
            rows.append((int(c), k, gen.lambdas[k], af.real, af.imag, ln, abs(af - ln) / ln if ln > 0 else abs(af)))
    rec.write_csv("equivalence.csv", ["cell", "k", "lambda", "af_re", "af_im", "ln", "rel_dev"], rows)
    rec.gate("langevin identification", rep.max_rel_dev < 1e-3 and rep.symbolic_ok,
             {"max_rel_dev": rep.max_rel_dev, "offdiag_rel": rep.offdiag_rel, "symbolic_ok": rep.symbolic_ok},
             {"max_rel_dev": 1e-3})


def run_oracle(cfg: ScenarioConfig, rec: RunRecord):
    from .af_dynamics import evolve
    from .reference_maxwell import simulate
    from .scenarios import gaussian_pulse, pulse_state

    p = cfg.section("oracle")
    disc = _discretization(replace(cfg, k=p["k"]))
    sp = disc.grids.spatial
    e0, b0 = gaussian_pulse(sp.x, p["x0"]), gaussian_pulse(sp.faces, p["x0"])
    _, s1 = simulate(disc.h0, disc.cell_models, e0, b0, p["t"], p["dt"])
    _, s2 = simulate(disc.h0, disc.cell_models, e0, b0, p["t"], p["dt"] / 2)
    ref = (4.0 * s2.E - s1.E) / 3.0
    af = evolve(pulse_state(disc, p["x0"]), disc.generator, p["t"]).F1
    rec.write_csv("oracle.csv", ["x", "E_af", "E_reference"], zip(sp.x, af, ref))
    err = float(np.linalg.norm(af - ref) / np.linalg.norm(ref))
    rec.gate("AF vs convolution reference", err < 1e-4, {"rel_l2": err}, {"rel_l2": 1e-4})


def run_accept(cfg: ScenarioConfig, rec: RunRecord):
    from .acceptance import run_gate

    rows = []
    for n in cfg.section("accept")["gates"]:
        r = run_gate(n)
        rec.gate(f"{r.number:2d} {r.name}", r.passed, r.measured, r.thresholds)
        rec.timings[f"gate_{n}"] = r.runtime
        rows.append((r.number, r.name, "pass" if r.passed else "fail", json.dumps(_plain(r.measured), sort_keys=True)))
    rec.write_csv("acceptance.csv", ["gate", "name", "status", "measured"], rows)


PIPELINES = {
    "dispersion": run_dispersion,
    "green": run_green,
    "evolve": run_evolve,
    "eigen": run_eigen,
    "extract": run_extract,
    "equiv": run_equiv,
    "oracle": run_oracle,
    "accept": run_accept,
}


def _versions() -> dict:
    import scipy
    import sympy

    return {"medeq": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "sympy": sympy.__version__}


def run(cfg: ScenarioConfig, quiet: bool = False, out: str | None = None) -> int:
    """Execute one configured run; always writes the manifest."""
    outdir = Path(out or cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    rec = RunRecord(cfg, outdir, quiet)
    if cfg.defaults_applied:
        rec.say("defaults: " + "; ".join(cfg.defaults_applied))
    t0 = time.perf_counter()
    failure = None
    try:
        PIPELINES[cfg.kind](cfg, rec)
    except Exception as exc:  # recorded in the manifest, reflected in the exit status
        failure = {"type": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()}
        rec.say(f"[ERROR] {type(exc).__name__}: {exc}")
    rec.timings["total"] = time.perf_counter() - t0
    ok = failure is None and all(g.passed for g in rec.gates)
    manifest = {
        "kind": cfg.kind,
        "status": "pass" if ok else "fail",
        "config": cfg.to_text(),
        "defaults_applied": list(cfg.defaults_applied),
        "seed": cfg.seed,
        "threads": _threads(),
        "versions": _versions(),
        "timings_s": rec.timings,
        "gates": [{"name": g.name, "passed": g.passed, "measured": g.measured, "threshold": g.threshold}
                  for g in rec.gates],
        "artifacts": rec.artifacts,
        "error": failure,
    }
    (outdir / "manifest.json").write_text(json.dumps(_plain(manifest), indent=2, sort_keys=True) + "\n")
    rec.say(f"{'all gates passed' if ok else 'FAILED'}; manifest at {outdir / 'manifest.json'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="medeq", description=__doc__.splitlines()[0])
    ap.add_argument("kind", choices=KINDS, help="pipeline to run")
    ap.add_argument("config", nargs="?", help="scenario file (default: the standard slab scenario)")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override one config value (repeatable)")
    ap.add_argument("--quiet", action="store_true", help="suppress progress text")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    text = Path(args.config).read_text() if args.config else STANDARD_TEXT
    try:
        cfg = with_kind(parse_config(text, [f"run.kind={args.kind}"] + args.overrides), args.kind)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    return run(cfg, quiet=args.quiet)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
