"""Plot-ready data and figures from a finished experiment directory."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


@dataclass(frozen=True)
class PlotSpec:
    """One figure: which table to read, which columns to keep and how to draw them."""

    stem: str
    table: str
    columns: tuple
    x: str
    y: tuple
    group: tuple = ()
    xscale: str = "linear"
    yscale: str = "linear"
    title: str = ""
    hint: str = ""


PLOTS: dict[str, list[PlotSpec]] = {
    "lp_calculus_suite": [
        PlotSpec("lp_error", "lp_integral", ("mass", "error", "tail"), "mass", ("error", "tail"),
                 xscale="log", yscale="log", title="LP integral error vs truncation tail",
                 hint="error should track the tail"),
    ],
    "operator_bounds": [
        PlotSpec("contraction_ratio", "contraction", ("delta", "operator", "eps", "ratio"), "delta", ("ratio",),
                 ("operator", "eps"), xscale="log", title="||out||_C / ||G||_C", hint="all points at or below 1"),
        PlotSpec("generator_residual", "generator", ("delta", "which", "sample", "residual", "bound"), "delta",
                 ("residual", "bound"), ("which", "sample"), "log", "log", "generator residual vs 3 delta ||G||_2C",
                 "log-log slope 1"),
    ],
    "semigroup_convergence": [
        PlotSpec("gap_vs_eps", "gap", ("eps", "t", "gap", "bound"), "eps", ("gap", "bound"), ("t",), "log", "log",
                 "||T_ren(t)G - T_V(t)G||_C", "log-log slope 1 in eps"),
    ],
    "dual_convergence": [
        PlotSpec("one_step_ratio", "one_step", ("eps", "delta", "sample", "ratio"), "eps", ("ratio",),
                 ("sample", "delta"), xscale="log", title="one-step dual gap / (eps delta ||k||)",
                 hint="flat lines: eps- and delta-independent constant"),
        PlotSpec("evolved_gap", "evolved", ("eps", "t", "gap"), "eps", ("gap",), ("t",), "log", "log",
                 "evolved dual gap", "log-log slope 1 in eps"),
        PlotSpec("scaled_exponent", "example", ("eps", "measured", "bound"), "eps", ("measured", "bound"),
                 xscale="log", yscale="log", title="||k0^eps - k0||_K_C"),
    ],
    "chaos_preservation": [
        PlotSpec("distance_by_level", "distance", ("delta", "level", "distance", "eps", "n_steps"), "level",
                 ("distance",), ("n_steps", "eps"), yscale="log", title="K_C distance to e_lambda(rho_t) by level"),
    ],
    "vlasov_solve": [
        PlotSpec("density_profiles", "trajectory", ("t", "x", "rho"), "x", ("rho",), ("t",),
                 title="rho_t(x)"),
    ],
    "kirkwood_monroe": [
        PlotSpec("km_density", "density", ("x", "rho"), "x", ("rho",), title="Kirkwood-Monroe fixed point"),
        PlotSpec("km_drift", "drift", ("t", "drift"), "t", ("drift",), title="sup |rho_t - rho*|"),
    ],
    "scaling_limit": [
        PlotSpec("limit_distance", "limit", ("eps", "sup_distance", "ci_halfwidth", "chaos_gap"), "eps",
                 ("sup_distance", "ci_halfwidth", "chaos_gap"), xscale="log", yscale="log",
                 title="empirical density vs kinetic solution", hint="all decreasing as eps decreases"),
        PlotSpec("density_vs_rho", "density", ("eps", "x", "density", "ci", "rho"), "x", ("density", "rho"),
                 ("eps",), title="eps k1 vs rho_t"),
        PlotSpec("baselines", "baselines", ("case", "t", "mean", "sigma", "expected"), "t", ("mean", "expected"),
                 ("case",), title="mean population vs closed form"),
        PlotSpec("pair_correlation", "pair", ("eps", "r", "pair", "ci"), "r", ("pair",), ("eps",),
                 title="eps^2 k2(r) / rho^2", hint="flattens toward 1 as eps decreases"),
    ],
}


def _read_table(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(v: str):
    try:
        return float(v)
    except ValueError:
        return v


def emit_plot_data(artifact_dir) -> list[Path]:
    """Write tidy plot CSVs, PNG figures and a manifest for a completed run.

    Reads ``summary.json`` to find the experiment, then the table CSVs it
    produced. Raises FileNotFoundError for a missing or empty directory or
    missing artifacts.
    """
    root = Path(artifact_dir)
    if not root.is_dir() or not any(root.iterdir()):
        raise FileNotFoundError(f"{root}: no artifacts (directory missing or empty)")
    summary_path = root / "summary.json"
    if not summary_path.exists():
        raise FileNotFoundError(f"{root}: summary.json not found; run an experiment first")
    experiment = json.loads(summary_path.read_text())["experiment"]
    data_dir, fig_dir = root / "plot_data", root / "figures"
    data_dir.mkdir(exist_ok=True)
    fig_dir.mkdir(exist_ok=True)
    written, entries = [], []
    for spec in PLOTS.get(experiment, []):
        src = root / f"{spec.table}.csv"
        if not src.exists():
            raise FileNotFoundError(f"{src} missing for plot {spec.stem}")
        rows = _read_table(src)
        out = data_dir / f"{spec.stem}.csv"
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(spec.columns)
            for r in rows:
                w.writerow([r[c] for c in spec.columns])
        fig = fig_dir / f"{spec.stem}.png"
        render(spec, rows, fig)
        written += [out, fig]
        entry = asdict(spec)
        entry.update(file=str(out.relative_to(root)), figure=str(fig.relative_to(root)))
        entries.append(entry)
    manifest = data_dir / "manifest.json"
    manifest.write_text(json.dumps({"experiment": experiment, "plots": entries}, indent=2) + "\n")
    written.append(manifest)
    return written


def render(spec: PlotSpec, rows: list[dict], path) -> Path:
    """Draw one figure; each (group, y-column) pair becomes a line."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[g] for g in spec.group), []).append(r)
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for key, members in groups.items():
        members = sorted(members, key=lambda r: _num(r[spec.x]))
        xs = [_num(r[spec.x]) for r in members]
        for col in spec.y:
            ys = [_num(r[col]) for r in members]
            label = ", ".join([f"{g}={v}" for g, v in zip(spec.group, key)] + ([col] if len(spec.y) > 1 else []))
            ax.plot(xs, ys, marker="o", ms=3, lw=1, label=label or col)
    ax.set_xscale(spec.xscale)
    ax.set_yscale(spec.yscale)
    ax.set_xlabel(spec.x)
    ax.set_ylabel(spec.y[0] if len(spec.y) == 1 else "value")
    ax.set_title(spec.title, fontsize=10)
    if len(groups) * len(spec.y) <= 12:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return Path(path)
