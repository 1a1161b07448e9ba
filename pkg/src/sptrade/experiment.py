"""Experiment modes behind the CLI: single solve, parameter sweeps, convergence traces."""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path

from .allocator import Instance, dinkelbach
from .config import ExperimentConfig
from .model import InfeasibleError
from .scenario import generate_scenario, parallel_map, summarize, trial_seed
from .selection import SCHEMES, run_schemes, trading_ee

log = logging.getLogger(__name__)

RAW_COLUMNS = (
    "seed", "scheme", "param_value", "ee_bits_per_joule", "rate_bps", "power_w",
    "psi_size", "dinkelbach_iters", "feasible",
)
AGGREGATE_COLUMNS = (
    "scheme", "param_value", "mean_ee_bits_per_joule", "stderr_ee_bits_per_joule", "n_feasible", "n_infeasible",
)
CONVERGENCE_COLUMNS = ("param_value", "psi_size", "iter", "q", "t_value")

PARAM_NAMES = {
    "solve": "p_max_dbm",
    "sweep-pmax": "p_max_dbm",
    "sweep-pc": "p_circuit_w",
    "convergence": "r_mu_min_kbps",
}


def fmt(x) -> str:
    """Locale-free shortest round-trip float text; NaN becomes an empty field."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if x != x:
        return ""
    return repr(x)


def _params_for(cfg: ExperimentConfig, value: float):
    if cfg.mode in ("solve", "sweep-pmax"):
        return cfg.system_params(p_max_dbm=value)
    if cfg.mode == "sweep-pc":
        return cfg.system_params(p_circuit_w=value)
    raise ValueError(cfg.mode)


def _trial(args):
    cfg, seed, grid = args
    ch = generate_scenario(cfg.geometry(seed), cfg.channel())
    trading = None
    rows = []
    for value in grid:
        sp = _params_for(cfg, value)
        if trading is None:
            trading = [trading_ee(k, sp, ch) for k in range(sp.n_mu)]
        results = run_schemes(cfg.schemes, sp, ch, trading)
        for scheme in cfg.schemes:
            res = results[scheme]
            o = res.outcome
            rows.append({
                "seed": seed, "scheme": scheme, "param_value": float(value),
                "ee_bits_per_joule": o.ee, "rate_bps": o.rate_total, "power_w": o.power_total,
                "psi_size": len(res.psi), "dinkelbach_iters": o.dinkelbach_iters, "feasible": o.feasible,
            })
    return rows


def sweep_rows(cfg: ExperimentConfig, workers: int | None = None) -> list:
    """Per-trial rows sorted by (seed, scheme, param_value)."""
    if cfg.mode == "solve":
        seeds = [cfg.seed]
        grid = (cfg.p_max_dbm,)
    else:
        seeds = [trial_seed(cfg.seed, i) for i in range(cfg.seeds)]
        grid = cfg.sweep_grid
    chunks = parallel_map(_trial, [(cfg, s, grid) for s in seeds], workers)
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r["seed"], r["scheme"], r["param_value"]))
    return rows


def aggregate_rows(rows: list) -> list:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["scheme"], r["param_value"]), []).append(r)
    out = []
    for (scheme, value), members in sorted(groups.items()):
        ees = [m["ee_bits_per_joule"] for m in members if m["feasible"]]
        s = summarize(ees, sum(1 for m in members if not m["feasible"]))
        out.append({
            "scheme": scheme, "param_value": value, "mean_ee_bits_per_joule": s["mean"],
            "stderr_ee_bits_per_joule": s["stderr"], "n_feasible": s["n"], "n_infeasible": s["n_infeasible"],
        })
    return out


def servable_selection(sp, ch) -> frozenset:
    """All MUs, dropping the most power-hungry ones until the selection solves."""
    psi = set(range(sp.n_mu))
    while True:
        try:
            dinkelbach(Instance.build(psi, sp, ch))
            return frozenset(psi)
        except InfeasibleError:
            if not psi:
                raise
            inst = Instance.build(psi, sp, ch)
            costs = {t[0]: inst.mu_power(t[1], t[2], t[3]) for t in inst.traded}
            psi.remove(max(sorted(costs), key=lambda k: costs[k]))


def convergence_rows(cfg: ExperimentConfig) -> list:
    """Dinkelbach traces on the scenario of ``cfg.seed`` for each MU rate floor in the grid."""
    ch = generate_scenario(cfg.geometry(cfg.seed), cfg.channel())
    rows = []
    for value in cfg.sweep_grid:
        sp = cfg.system_params(r_mu_min_kbps=value)
        try:
            psi = servable_selection(sp, ch)
        except InfeasibleError:
            log.warning("rate floor %s kbit/s: no feasible selection", value)
            continue
        _, _, _, trace, _ = dinkelbach(Instance.build(psi, sp, ch))
        for st in trace:
            rows.append({"param_value": float(value), "psi_size": len(psi), "iter": st.iters, "q": st.q,
                         "t_value": st.t_value})
    return rows


def write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) if not isinstance(r[c], str) else r[c] for c in columns])
    path.write_bytes(buf.getvalue().encode("utf-8"))


def render_report(cfg: ExperimentConfig, agg: list) -> str:
    pname = PARAM_NAMES[cfg.mode]
    schemes = list(cfg.schemes)
    values = sorted({a["param_value"] for a in agg})
    table = {(a["scheme"], a["param_value"]): a for a in agg}
    head = f"{pname:>14} " + " ".join(f"{s:>22}" for s in schemes)
    lines = [f"mode={cfg.mode} seeds={1 if cfg.mode == 'solve' else cfg.seeds} base_seed={cfg.seed}",
             "mean EE in Mbit/J (+- standard error) [infeasible trials]", head]
    for v in values:
        cells = []
        for s in schemes:
            a = table[(s, v)]
            mean, se = a["mean_ee_bits_per_joule"] / 1e6, a["stderr_ee_bits_per_joule"] / 1e6
            cell = f"{mean:.4f}+-{se:.4f}" if mean == mean else "n/a"
            if a["n_infeasible"]:
                cell += f" [{a['n_infeasible']}]"
            cells.append(f"{cell:>22}")
        lines.append(f"{v:>14g} " + " ".join(cells))
    return "\n".join(lines) + "\n"


def render_convergence(rows: list) -> str:
    lines = ["Dinkelbach traces: EE estimate q (Mbit/J) per outer iteration"]
    for v in sorted({r["param_value"] for r in rows}):
        qs = [r["q"] / 1e6 for r in rows if r["param_value"] == v]
        lines.append(f"R_MC={v:g} kbit/s: " + " ".join(f"{q:.4f}" for q in qs) + f"  ({len(qs)} iterations)")
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> tuple[int, dict]:
    """Execute ``cfg`` and write its CSVs into ``cfg.out``.

    Returns ``(exit_status, {name: path})`` plus the human-readable report
    under the ``"report"`` key. Infeasible trials are rows with
    ``feasible=false`` and do not fail the run.
    """
    unknown = [s for s in cfg.schemes if s not in SCHEMES]
    if unknown:
        raise ValueError(f"unknown scheme(s): {unknown}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    if cfg.mode == "convergence":
        rows = convergence_rows(cfg)
        files["convergence.csv"] = out / "convergence.csv"
        write_csv(files["convergence.csv"], CONVERGENCE_COLUMNS, rows)
        report = render_convergence(rows)
    else:
        rows = sweep_rows(cfg, workers)
        agg = aggregate_rows(rows)
        files["raw.csv"] = out / "raw.csv"
        files["aggregate.csv"] = out / "aggregate.csv"
        write_csv(files["raw.csv"], RAW_COLUMNS, rows)
        write_csv(files["aggregate.csv"], AGGREGATE_COLUMNS, agg)
        report = render_report(cfg, agg)
    files["report.txt"] = out / "report.txt"
    files["report.txt"].write_text(report, encoding="utf-8")
    return 0, {**files, "report": report}


__all__ = ["run_experiment", "sweep_rows", "aggregate_rows", "convergence_rows", "servable_selection",
           "RAW_COLUMNS", "AGGREGATE_COLUMNS", "CONVERGENCE_COLUMNS"]
