"""Built-in experiment setups and published reference values.

Reference values are Monte-Carlo outcomes from the original study; they are
shipped as targets for comparison reports, not as exact oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import BernoulliChannel, GilbertElliottChannel
from .model import SystemModel
from .simulation import (SimConfig, aggregate, rows_to_csv, run_paths, solver_time_reduction,
                         sweep, trace_rows)

ROTATION = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


def four_state_model(u_max: float = 5.0) -> SystemModel:
    """Rotation block plus a stable mode at 0.9, one input entering both parts."""
    A = np.zeros((4, 4))
    A[:3, :3] = ROTATION
    A[3, 3] = 0.9
    I4 = np.eye(4)
    return SystemModel(
        A=A, B=np.array([[1.0], [0.0], [1.0], [0.0]]), C=I4,
        Sigma_w=10 * I4, Sigma_v=10 * I4, Sigma_x0=I4,
        Q=I4, Q_N=I4, R=np.eye(1), u_max=u_max, N=5, N_r=3, orthogonal_dim=3)


def three_state_model(N_r: int = 3) -> SystemModel:
    """Orthogonal 3x3 plant with a single input."""
    A = np.array([[0.0, -0.8, -0.6], [0.8, -0.36, 0.48], [0.6, 0.48, -0.64]])
    I3 = np.eye(3)
    Q_N = np.array([[12.0, -0.1, -0.4], [-0.1, 19.0, -0.2], [-0.4, -0.2, 2.0]])
    return SystemModel(
        A=A, B=np.array([[0.16], [0.12], [0.14]]), C=I3,
        Sigma_w=2 * I3, Sigma_v=10 * I3, Sigma_x0=I3,
        Q=I3, Q_N=Q_N, R=2 * np.eye(1), u_max=15.0, N=4, N_r=N_r, orthogonal_dim=3)


def ge_channel(p_good: float) -> GilbertElliottChannel:
    return GilbertElliottChannel(p_gb=0.2, p_bg=0.9, p_good=p_good, p_bad=0.0)


GRID_P = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
GRID_UMAX = [2.0, 3.0, 4.0, 5.0, 10.0]
CURVES = ["full", "zero", "diagonal", "full-nostab"]

# published curves: {figure: {curve: values over the figure's grid}}
REFERENCE = {
    "fig2": {  # MSB vs u_max
        "full": [1170.96, 856.80, 733.91, 673.59, 628.59],
        "zero": [1196.12, 886.72, 771.33, 714.83, 685.79],
        "diagonal": [1172.39, 861.89, 738.39, 681.08, 645.59],
        "full-nostab": [1093.04, 822.51, 717.75, 670.88, 626.47],
    },
    "fig3": {  # MSB vs p_c
        "full": [888.82, 785.01, 719.88, 673.59, 634.42, 605.69],
        "zero": [919.83, 818.51, 759.87, 714.83, 678.72, 652.57],
        "diagonal": [895.41, 791.50, 727.93, 681.08, 642.21, 613.86],
        "full-nostab": [880.97, 779.99, 716.48, 670.88, 632.82, 603.50],
    },
    "fig4": {  # MSB vs p_s
        "full": [793.34, 730.71, 693.80, 673.59, 653.49, 634.65],
        "zero": [819.07, 760.89, 729.20, 714.83, 702.14, 687.99],
        "diagonal": [798.06, 737.51, 702.14, 681.08, 659.73, 644.08],
        "full-nostab": [789.39, 727.51, 691.97, 670.88, 650.16, 633.00],
    },
    "fig5": {  # MAE vs u_max
        "full": [2.394, 4.546, 6.470, 7.759, 11.025],
        "zero": [2.491, 4.845, 6.975, 8.395, 11.569],
        "diagonal": [2.421, 4.619, 6.612, 8.000, 11.473],
        "full-nostab": [2.625, 4.660, 6.393, 7.706, 10.338],
    },
    "fig6": {  # MAE vs p_c
        "full": [6.834, 7.261, 7.513, 7.759, 7.941, 8.114],
        "zero": [7.190, 7.716, 8.064, 8.395, 8.674, 8.940],
        "diagonal": [6.994, 7.442, 7.725, 8.000, 8.231, 8.450],
        "full-nostab": [6.806, 7.221, 7.471, 7.706, 7.894, 8.067],
    },
    "fig7": {  # MAE vs p_s
        "full": [7.671, 7.706, 7.759, 7.759, 7.675, 7.633],
        "zero": [8.007, 8.176, 8.320, 8.395, 8.386, 8.415],
        "diagonal": [7.838, 7.913, 7.978, 8.000, 7.956, 7.957],
        "full-nostab": [7.633, 7.664, 7.710, 7.706, 7.629, 7.583],
    },
    "fig8": {  # solver-time reduction (%) against full with drift rows, vs u_max
        "zero": [64.36, 63.15, 63.00, 64.25, 64.53],
        "diagonal": [43.63, 41.83, 41.88, 41.63, 43.09],
        "full-nostab": [3.24, 0.34, 1.09, 1.29, -0.39],
    },
    "fig10": {  # MSB under Gilbert-Elliott channels
        "p_gc": [987.41, 877.09, 810.92, 734.01, 706.03, 666.03],
        "p_gs": [848.26, 792.49, 772.72, 734.01, 708.24, 699.55],
    },
    "fig11": {  # MAE under Gilbert-Elliott channels
        "p_gc": [6.505, 6.958, 7.276, 7.452, 7.721, 7.914],
        "p_gs": [7.398, 7.407, 7.488, 7.452, 7.467, 7.470],
    },
    "fig12": {  # mean |x_t| at selected t
        "unconstrained_N_r1": {0: 1.647, 30: 20.108, 60: 27.034, 120: 42.938},
        "drift_N_r3": {0: 1.647, 30: 17.606, 60: 19.663, 120: 22.189},
    },
}


@dataclass
class FigurePreset:
    figure: str
    description: str
    base: SimConfig
    param: str | None = None
    values: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    metric: str = "msb"


def base_config(paths: int = 1000, seed: int = 2024, u_max: float = 5.0,
                p_c: float = 0.8, p_s: float = 0.8, **kw) -> SimConfig:
    return SimConfig(model=four_state_model(u_max), sensor=BernoulliChannel(p_s),
                     control=BernoulliChannel(p_c), T=120, paths=paths, seed=seed, **kw)


def three_state_config(N_r: int, stability: bool, paths: int = 500, seed: int = 2024, **kw) -> SimConfig:
    return SimConfig(model=three_state_model(N_r), sensor=BernoulliChannel(0.8),
                     control=BernoulliChannel(0.8), T=120, paths=paths, seed=seed,
                     stability=stability, **kw)


def figure_preset(figure: str, paths: int | None = None, seed: int = 2024) -> list[FigurePreset]:
    """Presets for one published figure (``correlated`` covers both GE sweeps)."""
    p = paths or 1000
    if figure in ("fig2", "fig5"):
        return [FigurePreset(figure, "MSB/MAE vs input bound", base_config(p, seed), "u_max",
                             GRID_UMAX, CURVES, "msb" if figure == "fig2" else "mae")]
    if figure in ("fig3", "fig6"):
        return [FigurePreset(figure, "MSB/MAE vs control-channel success", base_config(p, seed),
                             "p_c", GRID_P, CURVES, "msb" if figure == "fig3" else "mae")]
    if figure in ("fig4", "fig7"):
        return [FigurePreset(figure, "MSB/MAE vs sensor-channel success", base_config(p, seed),
                             "p_s", GRID_P, CURVES, "msb" if figure == "fig4" else "mae")]
    if figure == "fig8":
        return [FigurePreset(figure, "solver time vs input bound", base_config(paths or 1, seed),
                             "u_max", GRID_UMAX, CURVES, "solver_time")]
    if figure in ("fig10", "fig11", "correlated"):
        ge = base_config(p, seed).with_(sensor=ge_channel(0.8), control=ge_channel(0.8))
        metric = {"fig10": "msb", "fig11": "mae", "correlated": "msb"}[figure]
        return [FigurePreset(figure, "Gilbert-Elliott, control good-state success", ge, "p_gc",
                             GRID_P, ["full"], metric),
                FigurePreset(figure, "Gilbert-Elliott, sensor good-state success", ge, "p_gs",
                             GRID_P, ["full"], metric)]
    if figure == "fig12":
        return [FigurePreset(figure, "unconstrained, recalculation every step",
                             three_state_config(1, False, paths or 500, seed), None, [], ["full"], "trace"),
                FigurePreset(figure, "drift rows, recalculation every 3 steps",
                             three_state_config(3, True, paths or 500, seed), None, [], ["full"], "trace")]
    raise ValueError(f"unknown figure id {figure!r}")


FIGURES = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig10", "fig11", "fig12",
           "correlated")


# which published table each figure id is compared against, and on which metric
_COMPARE = {
    "fig2": [("fig2", "msb")], "fig3": [("fig3", "msb")], "fig4": [("fig4", "msb")],
    "fig5": [("fig5", "mae")], "fig6": [("fig6", "mae")], "fig7": [("fig7", "mae")],
    "fig10": [("fig10", "msb")], "fig11": [("fig11", "mae")],
    "correlated": [("fig10", "msb"), ("fig11", "mae")],
}
FIG12_TIMES = (0, 30, 60, 120)


@dataclass
class Reproduction:
    figure: str
    csvs: dict            # file name -> CSV text
    comparison: list      # dicts with curve, value, metric, ours, reference, rel_dev


def _compare_row(curve, value, metric, ours, reference):
    rel = (ours - reference) / abs(reference) if reference else float("nan")
    return {"curve": curve, "value": value, "metric": metric, "ours": ours, "reference": reference,
            "rel_dev": rel}


def reproduce(figure: str, paths: int | None = None, seed: int = 2024, threads: int = 1,
              progress=None) -> Reproduction:
    """Run every curve of a published figure and compare against the shipped values."""
    presets = figure_preset(figure, paths, seed)
    csvs, comparison = {}, []
    if figure == "fig12":
        labels = ["unconstrained_N_r1", "drift_N_r3"]
        for label, fp in zip(labels, presets):
            res = run_paths(fp.base.with_(threads=threads))
            csvs[f"fig12_{label}.csv"] = rows_to_csv(trace_rows(res),
                                                     ("t", "mean_norm", "mean_sq_norm", "mean_u_sq"))
            trace = aggregate(res).mean_norm_trace
            for t in FIG12_TIMES:
                if t < trace.size:
                    comparison.append(_compare_row(label, t, "mean_norm", float(trace[t]),
                                                   REFERENCE["fig12"][label][t]))
            if progress:
                progress(label)
        return Reproduction(figure, csvs, comparison)

    if figure == "fig8":
        fp = presets[0]
        rows = []
        for i, value in enumerate(fp.values):
            cfg = fp.base.with_(model=fp.base.model.replace(u_max=float(value)), threads=threads)
            red = solver_time_reduction(cfg, [c for c in fp.curves if c != "full"])
            for curve, pct in red.items():
                rows.append({"param": "u_max", "value": float(value), "variant": curve,
                             "reduction_pct": pct})
                comparison.append(_compare_row(curve, float(value), "reduction_pct", pct,
                                               REFERENCE["fig8"][curve][i]))
            if progress:
                progress(value)
        csvs["fig8_solver_time.csv"] = rows_to_csv(rows, ("param", "value", "variant", "reduction_pct"))
        return Reproduction(figure, csvs, comparison)

    for fp in presets:
        rows, _ = sweep(fp.base.with_(threads=threads), fp.param, fp.values, fp.curves, progress)
        ge = figure in ("fig10", "fig11", "correlated")
        for curve in fp.curves:
            name = f"{figure}_{fp.param}.csv" if ge else f"{figure}_{curve}.csv"
            csvs[name] = rows_to_csv([r for r in rows if r["variant"] == curve])
        for table, metric in _COMPARE[figure]:
            for r in rows:
                key = fp.param if ge else r["variant"]
                ref = REFERENCE[table].get(key)
                if ref is None:
                    continue
                i = list(fp.values).index(r["value"])
                comparison.append(_compare_row(f"{r['variant']}/{fp.param}" if ge else r["variant"],
                                               r["value"], metric, r[metric], ref[i]))
    return Reproduction(figure, csvs, comparison)


def format_comparison(rows) -> str:
    """Plain-text table of reproduced against published values."""
    head = f"{'curve':<22}{'value':>8}{'metric':>15}{'ours':>12}{'reference':>12}{'rel.dev':>10}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['curve']:<22}{r['value']:>8g}{r['metric']:>15}{r['ours']:>12.4g}"
                     f"{r['reference']:>12.4g}{100 * r['rel_dev']:>9.1f}%")
    return "\n".join(lines)
