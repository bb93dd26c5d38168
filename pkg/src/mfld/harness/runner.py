"""Build objects from a RunConfig, run, and write the output files."""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..datasets import finite_sum_quadratic, load_dataset, two_gaussians
from ..diagnostics import lsi_bounds, moment_bound, theory_constants
from ..dynamics import TRACE_COLUMNS, DiagnosticsSet, DynamicsParams, TraceRecord, run
from ..ensemble import GaussianInit, NonFiniteError, PointCloudInit, init_ensemble, second_moment
from ..estimators import EstimatorConfig
from ..functionals import Regularizer, check_assumptions, effective_bounds
from ..models import GaussianTarget, KsdModel, LinearModel, MmdModel, TwoLayerNetModel
from ..models.network import xor_dataset
from .config import RunConfig

__all__ = ["build_model", "build_run", "run_experiment", "emit_plot_data", "write_trace", "read_trace", "format_bounds"]


def build_model(cfg: RunConfig):
    kind = cfg["model"]
    dim = cfg.get("dim")
    if kind == "linear_quadratic":
        d = dim or 2
        shift = np.full(d, cfg["shift"]) if cfg["shift"] else None
        return LinearModel.isotropic(d, cfg["curvature"], shift)
    if kind == "linear_finite_sum":
        d = dim or 2
        centers, curv = finite_sum_quadratic(
            cfg["n_terms"], d, cfg["data_seed"], cfg["center_std"], (cfg["curvature_min"], cfg["curvature_max"])
        )
        return LinearModel.finite_sum(centers, curv)
    if kind == "two_layer_net":
        if cfg.get("data"):
            Z, y = load_dataset(cfg.resolve_path(cfg["data"]), supervised=True)
        elif cfg.get("dataset", "xor") == "xor":
            Z, y = xor_dataset(cfg["label_scale"])
        else:
            raise ValueError("two_layer_net needs supervised data: set 'data' or dataset = xor")
        return TwoLayerNetModel(Z, y, neuron=cfg["neuron"], loss=cfg["loss"])
    if kind == "mmd":
        if cfg.get("data"):
            data = load_dataset(cfg.resolve_path(cfg["data"]))
        elif cfg.get("dataset", "two_gaussians") == "two_gaussians":
            data = two_gaussians(cfg["n_data"], cfg["data_seed"], dim or 1)
        else:
            raise ValueError("mmd needs unlabelled data: set 'data' or dataset = two_gaussians")
        return MmdModel(data, cfg["bandwidth"], cfg["parameterization"], cfg["mixture_std"])
    if kind == "ksd":
        target = GaussianTarget(cfg["target_mean"], cfg["target_std"], dim or 1)
        return KsdModel(target, cfg["bandwidth"])
    raise ValueError(f"unknown model {kind!r}")


def build_run(cfg: RunConfig):
    """(model, reg, estimator config, dynamics params, initial ensemble)."""
    model = build_model(cfg)
    reg = Regularizer(cfg["reg_weight"])
    est = EstimatorConfig(cfg["kind"], cfg["batch_size"], cfg["refresh_period"])
    est.validate_for(model)
    eta = cfg["eta_sequence"] if cfg.get("eta_sequence") is not None else cfg["eta"]
    params = DynamicsParams(cfg["lambda"], eta, cfg["K"], cfg["seed"])
    N, d = cfg["N"], model.dim
    if cfg.get("init_file"):
        pts = load_dataset(cfg.resolve_path(cfg["init_file"]))
        e0 = init_ensemble(N, d, PointCloudInit(pts), cfg["seed"])
    else:
        e0 = init_ensemble(N, d, GaussianInit(cfg["init_mean"], cfg["init_std"]), cfg["seed"])
    return model, reg, est, params, e0


def diagnostics_of(cfg: RunConfig) -> DiagnosticsSet:
    return DiagnosticsSet(cfg["entropy"], cfg["sigma_v_probe"], cfg["probe_trials"], cfg["wall_time"])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_trace(trace: list[TraceRecord], path) -> None:
    lines = [",".join(TRACE_COLUMNS)]
    lines += [",".join(_fmt(v) for v in rec.as_row()) for rec in trace]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_positions(e, path) -> None:
    X = e.positions
    header = ",".join(f"x{j}" for j in range(X.shape[1]))
    rows = [",".join(repr(float(v)) for v in row) for row in X]
    Path(path).write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")


def bounds_report(cfg: RunConfig, model, reg, e0) -> list[tuple[str, object]]:
    """Constants, LSI bounds, theory constants and moment bound as (key, value)."""
    lam = cfg["lambda"]
    eta = cfg["eta"] if cfg.get("eta") is not None else max(cfg["eta_sequence"])
    c = model.constants()
    b = effective_bounds(model, reg)
    lsi = lsi_bounds(model, reg, lam, constants=c)
    m0 = second_moment(e0)
    out: list[tuple[str, object]] = [
        ("model.R", c.R),
        ("model.L", c.L),
        ("model.c_L", c.c_L),
        ("model.value_bound", c.value_bound),
        ("model.notes", c.notes or None),
        ("reg.lam1", b.lam1),
        ("reg.lam2", b.lam2),
        ("reg.c_r", b.c_r),
        ("lsi.alpha_lipschitz", lsi.alpha_lipschitz),
        ("lsi.alpha_bounded", lsi.alpha_bounded),
        ("lsi.alpha", lsi.alpha),
        ("init.second_moment", m0),
    ]
    if c.curvature is not None:
        out.append(("model.folded_curvature", f"{c.curvature[0]!r} {c.curvature[1]!r}"))
    if b.lam1 > 0 and math.isfinite(c.R):
        out.append(("moment_bound", moment_bound(m0, b.lam1, b.lam2, b.c_r, c.R, lam, model.dim)))
        th = theory_constants(
            c, b, lam, eta, model.dim, m0, alpha=lsi.alpha, estimator=cfg["kind"],
            batch_size=cfg["batch_size"], n_data=model.n_data(), refresh_period=cfg["refresh_period"],
        )
        out += [(f"theory.{k}", v) for k, v in th.as_dict().items()]
        if cfg.get("delta0") is not None:
            out.append(("theory.rhs_at_K", th.theorem42_rhs(cfg["K"], cfg["delta0"], cfg["N"])))
    else:
        out.append(("theory", "not available (no finite gradient bound or no strong convexity)"))
    return out


def format_bounds(items) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in items)


def _meta(cfg: RunConfig, model, reg, e0) -> str:
    parts = [f"# mfld {__version__}\n", "version = " + __version__ + "\n", "\n# config\n", cfg.to_text()]
    parts.append("\n# constants\n")
    parts.append(format_bounds(bounds_report(cfg, model, reg, e0)))
    if isinstance(model, MmdModel):
        parts.append(f"mmd.data_constant = {model.data_constant()!r}\n")
    c = model.constants()
    if math.isfinite(c.R) or math.isfinite(c.L):
        rep = check_assumptions(model, reg, probes=200, seed=cfg["seed"], constants=c)
        parts.append("\n# assumption probe\n")
        parts.append(f"assumptions.conforming = {rep.conforming}\n")
        parts.append(f"assumptions.max_grad_ratio = {rep.max_grad_ratio!r}\n")
        parts.append(f"assumptions.max_lipschitz_ratio = {rep.max_lipschitz_ratio!r}\n")
        for v in rep.violations:
            parts.append(f"assumptions.violation = {v}\n")
    return "".join(parts)


def run_experiment(cfg: RunConfig, out_dir=None, threads=None, quiet: bool = True) -> int:
    """Run one configured experiment; 0 on success, 1 on numeric or I/O failure."""
    out = Path(out_dir) if out_dir is not None else cfg.resolve_path(cfg["out_dir"])
    try:
        model, reg, est, params, e0 = build_run(cfg)
        out.mkdir(parents=True, exist_ok=True)
        (out / "meta.txt").write_text(_meta(cfg, model, reg, e0), encoding="utf-8")
        cb = None
        if not quiet:
            cb = lambda r: print(f"step {r.step}: energy={r.energy:.6g} metric={r.model_metric:.6g}", file=sys.stderr)
        trace, final = run(
            e0, model, reg, est, params, log_every=cfg["log_every"], diagnostics=diagnostics_of(cfg),
            threads=threads if threads is not None else cfg["threads"], callback=cb,
        )
        write_trace(trace, out / "trace.csv")
        write_positions(final, out / "final_positions.csv")
    except NonFiniteError as exc:
        print(f"mfld: aborted: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"mfld: I/O error: {exc}", file=sys.stderr)
        return 1
    return 0


def emit_plot_data(trace: list[TraceRecord], columns) -> str:
    """Gnuplot data blocks, one per requested column, each ``step value``.

    Blocks are separated by two blank lines (select with ``index``).
    """
    columns = list(columns)
    for c in columns:
        if c not in TRACE_COLUMNS:
            raise KeyError(f"unknown trace column {c!r}")
    ys = [c for c in columns if c != "step"] or ["step"]
    toggles = {"sigma_v_probe": "sigma_v_probe", "entropy_estimate": "entropy", "objective_estimate": "entropy",
               "wall_time": "wall_time"}
    blocks = []
    for col in ys:
        vals = [getattr(r, col) for r in trace]
        if trace and all(v is None for v in vals) and col in toggles:
            raise ValueError(f"column {col!r} was not recorded; enable '{toggles[col]}' in [output]")
        lines = [f"# step {col}"]
        lines += [f"{r.step} {_fmt(v)}" for r, v in zip(trace, vals) if v is not None]
        blocks.append("\n".join(lines))
    return "\n\n\n".join(blocks) + "\n"


def read_trace(path) -> list[TraceRecord]:
    """Inverse of ``write_trace``."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].split(",") != list(TRACE_COLUMNS):
        raise ValueError(f"{path}: not a trace file (unexpected header)")
    out = []
    for lineno, line in enumerate(lines[1:], 2):
        cells = line.split(",")
        if len(cells) != len(TRACE_COLUMNS):
            raise ValueError(f"{path}:{lineno}: expected {len(TRACE_COLUMNS)} fields, got {len(cells)}")
        vals = [int(cells[0])] + [float(c) if c else None for c in cells[1:]]
        out.append(TraceRecord(*vals))
    return out
