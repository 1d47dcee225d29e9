"""Command-line entry point: wires a model file to every analysis and writes reports."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import numpy as np

from . import lindstedt, selfenergy, smalldiv, trees, verify
from .model import SpecError, load_spec, sample_model, spec_to_dict, zero_mode

SCHEMA_VERSION = 1
OUTPUT_ENV = "QPRESONANCE_OUTPUT_DIR"
CAPS = {"K": 8, "K_tree": 3, "k_max": 3, "N_profile": 12, "sweep_K": 8}
DEFAULT_EPS = (1e-4, 3e-4, 1e-3, 3e-3)

EXIT_OK, EXIT_VIOLATION, EXIT_IO, EXIT_MODULE = 0, 1, 3, 4


@dataclass
class RunConfig:
    spec: str | None
    command: str
    K: int = 4
    K_tree: int = 3
    k_max: int = 2
    N_profile: int = 8
    eps_list: tuple = DEFAULT_EPS
    output_dir: str = "reports"
    output_format: str = "json"
    allow_large: bool = False
    T_end: float = 50.0
    dt: float = 0.01
    melnikov_grid: int = 0
    sweep_K: int = 2

    def check_caps(self) -> None:
        if self.allow_large:
            return
        for name, cap in CAPS.items():
            if getattr(self, name) > cap:
                raise click.UsageError(f"{name}={getattr(self, name)} exceeds the cap {cap}; "
                                       "pass --allow-large to override")


@dataclass
class Outcome:
    name: str
    results: dict
    violations: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)     # file name -> rows (first row header)


# ---------------------------------------------------------------------------
# serialisation helpers
# ---------------------------------------------------------------------------

def _num(z):
    """JSON-friendly number: floats stay floats, complex becomes [re, im]."""
    if isinstance(z, (bool, np.bool_)):
        return bool(z)
    if isinstance(z, (complex, np.complexfloating)):
        return [float(z.real), float(z.imag)]
    if isinstance(z, (np.floating, float)):
        return float(z)
    if isinstance(z, (np.integer, int)):
        return int(z)
    return z


def _poly(p, tol: float = 0.0) -> dict:
    return {str(m): _num(c) for m, c in sorted(p.as_dict(tol).items())}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return _num(obj)


def _dump(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, rows: list) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    path.write_text(buf.getvalue())


# ---------------------------------------------------------------------------
# individual analyses
# ---------------------------------------------------------------------------

class Context:
    def __init__(self, cfg: RunConfig, spec, digest: str):
        self.cfg = cfg
        self.spec = spec
        self.digest = digest
        self._series = None
        self._profile = None

    @property
    def series(self):
        if self._series is None:
            self._series = lindstedt.compute_series(self.spec, self.cfg.K)
        return self._series

    @property
    def profile(self):
        if self._profile is None:
            self._profile = smalldiv.build_profile(self.spec.omega, self.cfg.N_profile)
        return self._profile


def run_profile(ctx: Context) -> Outcome:
    prof = ctx.profile
    rows = [["n", "alpha_n", "m_n", "p_n", "bryuno_partial"]] + [list(r) for r in prof.rows()]
    cut = smalldiv.Cutoffs(prof)
    a0 = float(prof.alphas[0])
    x = np.linspace(-a0, a0, 1001)
    x = x[x != 0.0]
    worst = 0.0
    max_active = 0
    for p in range(min(3, prof.N)):
        worst = max(worst, float(np.max(np.abs(cut.partition(p, x) - 1.0))))
    for xi in x:
        max_active = max(max_active, len(cut.active_scales(xi)))
    viol = []
    if worst >= 1e-12:
        viol.append(f"partition of unity defect {worst:.3e}")
    if max_active > 2:
        viol.append(f"{max_active} active scales at one point")
    res = {"N_profile": prof.N, "partition_defect": worst, "max_active_scales": max_active,
           "m_seq": [int(m) for m in prof.m_seq], "p_seq": [int(p) for p in prof.p_seq]}
    return Outcome("profile", res, viol, {"profile.csv": rows})


def run_series(ctx: Context) -> Outcome:
    s = ctx.series
    coeffs = []
    for k in range(1, s.K + 1):
        for comp, tab in (("beta", s.b[k]), ("B", s.B[k]), ("Phi", s.coefficient_table(k, "Phi")),
                          ("Gamma", s.gamma[k])):
            for nu in sorted(tab):
                coeffs.append({"order": k, "mode": list(nu), "component": comp,
                               "harmonics": _poly(tab[nu])})
    rr = lindstedt.range_residuals(s)
    rd = s.reality_defect()
    viol = []
    if rr >= 1e-12:
        viol.append(f"range residual {rr:.3e}")
    if rd >= 1e-12:
        viol.append(f"reality defect {rd:.3e}")
    return Outcome("series", {"K": s.K, "range_residual": rr, "reality_defect": rd,
                              "flagged_divisors": [list(f) if isinstance(f, tuple) else f
                                                   for f in s.flagged],
                              "coefficients": coeffs}, viol)


def run_melnikov(ctx: Context) -> Outcome:
    rep = lindstedt.melnikov(ctx.series)
    grad = lindstedt.gradient_structure_check(ctx.series, rep.k0)
    res = {"k0": rep.k0, "all_zero": rep.all_zero, "slope": rep.slope,
           "gamma_k0": _poly(rep.gamma_k0) if rep.gamma_k0 is not None else None,
           "zeros": [{"beta": z.beta, "order": z.order, "leading_derivative": z.leading_derivative,
                      "eps_signs": list(z.eps_signs), "odd": z.odd,
                      "satisfies_hypothesis": z.satisfies_hypothesis} for z in rep.zeros],
           "gradient_mean_defect": grad.mean_defect, "gradient_ok": grad.ok}
    tables = {}
    if ctx.cfg.melnikov_grid and rep.gamma_k0 is not None:
        b = np.linspace(0.0, 2 * np.pi, ctx.cfg.melnikov_grid, endpoint=False)
        v = np.real(rep.gamma_k0(b))
        tables["melnikov_grid.csv"] = [["beta0", "gamma_k0"]] + [[x, y] for x, y in zip(b, v)]
    viol = [] if grad.ok or rep.k0 is None else [f"Melnikov mean {grad.mean_defect:.3e}"]
    return Outcome("melnikov", res, viol, tables)


def run_trees(ctx: Context) -> Outcome:
    K = ctx.cfg.K_tree
    ser = lindstedt.compute_series(ctx.spec, max(K, 1))
    orc = trees.oracle_check(ctx.spec, K, ser)
    en = trees.TreeEnumerator(ctx.spec, trees.HAMILTONIAN)
    entries = []
    for k in range(1, K + 1):
        for role in trees.ROOT_ROLES:
            groups: dict = {}
            for t in en.trees(k, role):
                groups.setdefault(t.momentum, []).append(t)
            for nu in sorted(groups):
                total = None
                for t in groups[nu]:
                    v = en.value(t)
                    total = v if total is None else total + v
                entries.append({"k": k, "mode": list(nu), "h": role, "count": len(groups[nu]),
                                "value": _poly(total)})
    sweeps = {}
    viol = []
    if not orc.ok:
        viol.append(f"tree oracle error {orc.max_rel_error:.3e} at {orc.worst}")
    for name, fw, ren in (("hamiltonian", trees.HAMILTONIAN, False),
                          ("general_renormalised", trees.GENERAL, True)):
        rep = trees.counting_sweep(ctx.spec, K, ctx.profile, framework=fw, renormalised=ren)
        sweeps[name] = {"trees": rep.trees, "assignments": rep.assignments,
                        "violations": len(rep.violations),
                        "self_energy_clusters": rep.self_energy_clusters, "chains": rep.chains,
                        "max_scale": rep.max_scale}
        viol += [f"{name}: {v.rule} {v.detail}" for _, _, v in rep.violations[:20]]
    res = {"K_tree": K, "oracle_max_rel_error": orc.max_rel_error,
           "oracle_worst": list(orc.worst) if orc.worst else [],
           "counts": [{"k": k, "h": h, "count": c} for (k, h), c in sorted(orc.counts.items())],
           "sums": entries, "counting": sweeps}
    return Outcome("trees", res, viol)


def run_selfenergy(ctx: Context, eps: float = 1e-2, beta0: float = 0.7) -> Outcome:
    spec, kmax = ctx.spec, ctx.cfg.k_max
    viol = []
    jets = selfenergy.self_energy_jets(spec, kmax)
    names = ("beta", "B")
    mats = {str(k): {f"{names[u]},{names[e]}": {"value": _poly(jets[k][u, e, 0], 1e-15),
                                                  "slope": _poly(jets[k][u, e, 1], 1e-15)}
                     for u in range(2) for e in range(2)} for k in jets}
    ids = selfenergy.identity_suite(spec, k_max=kmax)
    for key in ("gamma_chain", "phi_chain"):
        if ids.defects[key] >= 1e-11:
            viol.append(f"{key} defect {ids.defects[key]:.3e}")
    if ids.precondition:
        for key in ("trace", "offdiag_slope", "diag_slope"):
            if ids.defects[key] >= 1e-11:
                viol.append(f"{key} defect {ids.defects[key]:.3e}")
    jac = selfenergy.jacobian_identity(spec, kmax, 0.1)
    if max(jac.values()) >= 1e-10:
        viol.append(f"Jacobian identity defect {max(jac.values()):.3e}")
    eng = selfenergy.SelfEnergy(spec, ctx.profile, eps, beta0, k_max=kmax,
                                framework=trees.HAMILTONIAN)
    xs = np.logspace(-4, -0.5, 25)
    sym = struct = 0.0
    for n in range(-1, min(3, ctx.profile.N - 1) + 1):
        for x in xs:
            a, b = eng.matrix(n, x), eng.matrix(n, -x)
            sym = max(sym, float(np.abs(b.value - a.value.conj()).max()))
        z = eng.matrix(n, 0.0)
        struct = max(struct, z.real_defect(), z.imaginary_defect())
    if sym >= 1e-11:
        viol.append(f"conjugation symmetry defect {sym:.3e}")
    if struct >= 1e-11:
        viol.append(f"real/imaginary structure defect {struct:.3e}")
    res = {"k_max": kmax, "eps": eps, "beta0": beta0,
           "lowest_scale": [[_num(v) for v in row]
                            for row in selfenergy.m_minus1(spec, eps, beta0, spec.B0bar)],
           "series": mats, "identities": ids.defects, "identity_precondition": ids.precondition,
           "jacobian_defects": jac, "symmetry_defect": sym, "structure_defect": struct,
           "singular_flags": len(eng.flags)}
    return Outcome("selfenergy", res, viol)


def _seeds(series):
    rep = lindstedt.melnikov(series)
    return [z for z in rep.zeros if z.odd]


def run_solve(ctx: Context) -> Outcome:
    K = min(ctx.cfg.K, ctx.series.K)
    rows = []
    viol = []
    for z in _seeds(ctx.series):
        for eps in ctx.cfg.eps_list:
            if not z.eps_signs or np.sign(eps) not in z.eps_signs:
                continue
            sol = verify.solve_bifurcation(ctx.series, eps, z, K)
            ts = verify.assemble(ctx.series, eps, sol.beta0, K, provenance={"seed": z.beta})
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", verify.AliasingWarning)
                r = verify.residual(ts)
            rows.append({"seed": z.beta, "eps": eps, "beta0": sol.beta0, "B0": ts.B0,
                         "gamma_residual": sol.gamma_residual, "phi_residual": sol.phi_residual,
                         "method": sol.method, "hypothesis_status": sol.hypothesis_status,
                         "sup_residual": r.sup_residual})
            if sol.gamma_residual >= 1e-12 or sol.phi_residual >= 1e-12:
                viol.append(f"bifurcation residual at seed {z.beta:.6f}, eps {eps}")
    return Outcome("solve", {"K": K, "solutions": rows}, viol)


def run_sweep(ctx: Context) -> Outcome:
    K = ctx.cfg.sweep_K
    seeds = [z for z in _seeds(ctx.series) if 1 in z.eps_signs]
    if not seeds:
        return Outcome("sweep", {"K": K, "rows": [], "note": "no seed for eps > 0"}, [])
    series = lindstedt.compute_series(ctx.spec, K)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", verify.AliasingWarning)
        rep = verify.sweep(ctx.spec, list(ctx.cfg.eps_list), K, seed=seeds[0],
                           T_end=ctx.cfg.T_end, dt=ctx.cfg.dt, series=series)
    rows = [["eps", "beta0", "sup_residual", "deviation"]]
    rows += [[r.eps, r.beta0, r.sup_residual, r.deviation] for r in rep.rows]
    viol = []
    if np.isfinite(rep.residual_slope) and abs(rep.residual_slope - (K + 1)) > 0.2:
        viol.append(f"residual slope {rep.residual_slope:.3f}, expected {K + 1}")
    if np.isfinite(rep.deviation_constant) and not rep.deviation_ok():
        viol.append("integration deviation exceeds ten times the fitted bound")
    exact = all(r.sup_residual == 0.0 for r in rep.rows)
    res = {"K": K, "residual_slope": rep.residual_slope,
           "residual_constant": rep.residual_constant,
           "deviation_constant": rep.deviation_constant, "T_end": rep.T_end,
           "exact_solution": exact, "rows": [asdict(r) for r in rep.rows]}
    return Outcome("sweep", res, viol, {"sweep.csv": rows})


COMMANDS = {
    "profile": run_profile, "series": run_series, "melnikov": run_melnikov,
    "trees": run_trees, "selfenergy": run_selfenergy, "solve": run_solve, "sweep": run_sweep,
}
ORDER = ("profile", "series", "melnikov", "trees", "selfenergy", "solve", "sweep")


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _resolve_spec(path: str | None):
    if path is None:
        spec = sample_model()
        text = json.dumps(spec_to_dict(spec), sort_keys=True).encode()
        return spec, hashlib.sha256(text).hexdigest()
    p = Path(path)
    data = p.read_bytes()          # raises OSError with the path
    return load_spec(p), hashlib.sha256(data).hexdigest()


def _header(cfg: RunConfig, digest: str, name: str) -> dict:
    conf = asdict(cfg)
    conf.pop("output_dir")   # the location must not change the bytes
    return {"schema_version": SCHEMA_VERSION, "command": name, "config": conf,
            "spec_sha256": digest}


def execute(cfg: RunConfig) -> int:
    """Run one command (or all of them) and write the report files."""
    out = Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        spec, digest = _resolve_spec(cfg.spec)
    except (OSError, SpecError, ValueError) as exc:
        kind = "io" if isinstance(exc, OSError) else "spec"
        record = {"schema_version": SCHEMA_VERSION, "error": kind, "message": str(exc),
                  "path": cfg.spec}
        click.echo(json.dumps(record, sort_keys=True), err=True)
        try:
            _dump(out / "error.json", record)
        except OSError:
            pass
        return EXIT_IO if kind == "io" else EXIT_MODULE
    ctx = Context(cfg, spec, digest)
    names = ORDER if cfg.command == "all" else (cfg.command,)
    verdicts = {}
    status = EXIT_OK
    for name in names:
        try:
            oc = COMMANDS[name](ctx)
        except Exception as exc:     # any module error becomes an error record
            record = {**_header(cfg, digest, name), "error": type(exc).__name__,
                      "message": str(exc)}
            _dump(out / f"{name}.error.json", record)
            click.echo(json.dumps(_clean(record), sort_keys=True), err=True)
            verdicts[name] = "error"
            status = max(status, EXIT_MODULE)
            continue
        payload = {**_header(cfg, digest, name), "results": oc.results,
                   "violations": oc.violations, "ok": not oc.violations}
        if cfg.output_format == "json" or not oc.tables:
            _dump(out / f"{name}.json", payload)
        for fname, rows in oc.tables.items():
            _write_csv(out / fname, rows)
        verdicts[name] = "pass" if not oc.violations else "violation"
        if oc.violations:
            status = max(status, EXIT_VIOLATION)
        click.echo(f"{name}: {verdicts[name]}")
    if cfg.command == "all":
        _dump(out / "summary.json", {**_header(cfg, digest, "all"), "verdicts": verdicts,
                                     "ok": status == EXIT_OK})
    return status


def _eps_list(ctx, param, value):
    if value is None:
        return DEFAULT_EPS
    try:
        return tuple(float(v) for v in value.split(","))
    except ValueError as exc:
        raise click.BadParameter("comma-separated numbers expected") from exc


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("command", type=click.Choice(list(ORDER) + ["all"]))
@click.option("--spec", "spec", type=str, default=None,
              help="Model file (JSON); the built-in sample model when omitted.")
@click.option("--K", "K", type=int, default=4, show_default=True, help="Series order.")
@click.option("--K-tree", "K_tree", type=int, default=3, show_default=True,
              help="Largest tree order.")
@click.option("--k-max", "k_max", type=int, default=2, show_default=True,
              help="Largest self-energy order.")
@click.option("--N-profile", "N_profile", type=int, default=8, show_default=True,
              help="Number of scales in the profile.")
@click.option("--eps-list", "eps_list", type=str, default=None, callback=_eps_list,
              help="Comma-separated perturbation sizes.")
@click.option("--output-dir", "output_dir", type=str, default="reports", show_default=True,
              help=f"Report directory (overridden by ${OUTPUT_ENV}).")
@click.option("--output-format", "output_format", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--T-end", "T_end", type=float, default=50.0, show_default=True)
@click.option("--dt", "dt", type=float, default=0.01, show_default=True)
@click.option("--melnikov-grid", "melnikov_grid", type=int, default=0,
              help="Also write the Melnikov function on this many grid points.")
@click.option("--sweep-K", "sweep_K", type=int, default=2, show_default=True,
              help="Truncation order used by the residual sweep.")
@click.option("--allow-large", is_flag=True, help="Lift the default size caps.")
def main(command, **opts):
    """Run an analysis on a model file and write machine-readable reports."""
    cfg = RunConfig(command=command, **opts)
    cfg.check_caps()
    sys.exit(execute(cfg))


if __name__ == "__main__":
    main()
