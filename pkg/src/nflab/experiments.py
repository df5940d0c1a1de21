"""Runnable experiments behind the ``nflab`` subcommands.

Every experiment writes CSV tables (and optionally PNG figures) into the
output directory and returns an :class:`Outcome` whose checks decide the
exit status.  All randomness flows from the configuration, so identical
configurations give byte-identical CSV files.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig
from .dynamics import Variant, run_d0_1d, simulate
from .elliptic import (_full_cumulative, cumulative_source, dirichlet_flux_constant,
                       poincare_constant, solve_pressure, solve_pressure_mollified)
from .energy import cumulative_dissipation, decay_rate_estimate, dissipation_residual
from .grid import Grid, integrate, l2_norm, linf_norm, node_norm, write_snapshot
from .mollifier import heat_kernel
from .rng import Prng
from .spectra import (admissible_perturbation, classify_zero_state, construct_pattern_d0,
                      growth_trace, one_step_drift, sigma1, stationarity_residual,
                      steady_amplitude_1d, verify_pattern_stability)

MONOTONE_SLACK = 1e-12


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool


@dataclass
class Outcome:
    experiment: str
    checks: list = field(default_factory=list)
    files: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name, value, threshold, passed):
        self.checks.append(Check(name, float(value), float(threshold), bool(passed)))


def _plot():
    # deferred so CSV-only runs never import matplotlib
    from . import plotting
    return plotting


def _finish(outcome: Outcome, out: Path, cfg: RunConfig, summary: dict) -> Outcome:
    rows = [("experiment", cfg.experiment), ("subcommand", outcome.experiment)]
    rows += [(k, v) for k, v in summary.items()]
    outcome.files.append(io.write_csv(out / "summary.csv", ("key", "value"), rows))
    outcome.files.append(io.write_csv(
        out / "checks.csv", ("check", "value", "threshold", "passed"),
        [(c.name, c.value, c.threshold, c.passed) for c in outcome.checks]))
    return outcome


def _coords_columns(grid: Grid):
    names = ("x", "y")[:grid.dim]
    return names, [x.ravel() for x in grid.coords()]


def _field_table(path, grid, columns: dict):
    names, coords = _coords_columns(grid)
    header = list(names) + list(columns)
    data = coords + [np.asarray(v, dtype=float).ravel() for v in columns.values()]
    return io.write_csv(path, header, list(zip(*data)))


def energy_increase(trace) -> float:
    """Largest accepted-step energy increase relative to the initial energy."""
    e = trace.column("total")
    if len(e) < 2:
        return 0.0
    return float(np.max(np.diff(e))) / max(abs(e[0]), np.finfo(float).tiny)


def _norm_increase(values) -> float:
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return 0.0
    return float(np.max(np.diff(v))) / max(abs(v[0]), np.finfo(float).tiny)


# -- simulate -----------------------------------------------------------------
def run_simulate(cfg: RunConfig, out: Path, figures: bool = True) -> Outcome:
    """Standard run with energy trace, final snapshots and dissipation checks."""
    grid, prm = cfg.grid, cfg.params
    S, mI = cfg.source_field(), cfg.initial_field()
    trace, state = simulate(grid, mI, S, prm)
    res = Outcome("simulate")
    res.files.append(io.write_trace(out / "trace.csv", trace))
    res.files.append(write_snapshot(out / "m_final.nfs", grid, state.m))
    res.files.append(write_snapshot(out / "p_final.nfs", grid, state.pressure.p))
    comps = {f"m{a}": state.m[a] for a in range(grid.dim)}
    res.files.append(_field_table(out / "final.csv", grid, {**comps, "p": state.pressure.p}))
    rise = energy_increase(trace)
    res.check("energy_nonincreasing", rise, MONOTONE_SLACK, rise <= MONOTONE_SLACK)
    drop, diss = cumulative_dissipation(trace)
    accepted = trace.accepted()
    summary = {
        "t_final": state.t, "steps": len(accepted) - 1,
        "rejected": len(trace.rows) - len(accepted),
        "energy_initial": accepted[0].energy.total, "energy_final": state.energy.total,
        "energy_drop": drop, "integrated_dissipation": diss,
        "dissipation_residual": dissipation_residual(trace) if len(accepted) > 1 else 0.0,
        "m_l2_final": l2_norm(grid, state.m), "dtm_l2_final": state.dtm_l2,
    }
    if figures:
        plot = _plot()
        res.files.append(plot.plot_trace(out / "trace.png", trace))
        res.files.append(plot.plot_field(out / "m_final.png", grid, state.m, title="m(T)"))
    return _finish(res, out, cfg, summary)


# -- decay --------------------------------------------------------------------
def run_decay(cfg: RunConfig, out: Path, figures: bool = True) -> Outcome:
    """Sign-flipped run; the fitted decay rate is compared with ``-D^2 / C^2``."""
    grid, prm = cfg.grid, cfg.params
    trace, state = simulate(grid, cfg.initial_field(), cfg.source_field(), prm,
                            Variant.SIGN_FLIPPED)
    res = Outcome("decay")
    res.files.append(io.write_trace(out / "trace.csv", trace))
    rate = decay_rate_estimate(trace)
    bound = -0.95 * prm.D ** 2 / poincare_constant(grid.dim) ** 2
    res.check("decay_rate", rate, bound, rate <= bound)
    rise = _norm_increase(trace.column("m_l2"))
    res.check("norm_nonincreasing", rise, MONOTONE_SLACK, rise <= MONOTONE_SLACK)
    if figures:
        plot = _plot()
        res.files.append(plot.plot_series(out / "decay.png", trace.column("t"),
                                          {"||m||_2": trace.column("m_l2")},
                                          xlabel="t", logy=True))
    return _finish(res, out, cfg, {"t_final": state.t, "fitted_rate": rate,
                                   "rate_bound": bound, "m_l2_final": l2_norm(grid, state.m)})


# -- steady1d -----------------------------------------------------------------
def steady_prediction(grid: Grid, m_final, S, params, bc: str):
    """Signed steady amplitude predicted from the flux seen by ``m_final``."""
    B = cumulative_source(grid, S).B
    if bc == "dirichlet":
        B = B - dirichlet_flux_constant(grid, m_final.ravel(), _full_cumulative(grid, S))
    return B, steady_amplitude_1d(B, params)


def support_band(grid: Grid, B, params) -> np.ndarray:
    """Nodes within one cell of an edge of ``{c|B| > 1}`` (``gamma = 1`` only).

    An edge lies between two nodes where ``c|B| - 1`` changes sign, or on a
    node where it vanishes.
    """
    f = params.c * np.abs(B) - 1.0
    band = np.zeros(f.shape, dtype=bool)
    cross = f[:-1] * f[1:] < 0
    band[:-1] |= cross
    band[1:] |= cross
    on = f == 0
    band |= on
    band[:-1] |= on[1:]
    band[1:] |= on[:-1]
    return band


def run_steady1d(cfg: RunConfig, out: Path, figures: bool = True) -> Outcome:
    """``D = 0`` nodal dynamics in 1D against the closed-form steady amplitude."""
    grid, prm = cfg.grid, cfg.params
    if grid.dim != 1:
        raise ValueError("steady1d needs dim = 1")
    S, mI = cfg.source_field(), cfg.initial_field()
    m_final = run_d0_1d(grid, mI, S, prm.with_(D=0.0), prm.t_end, cfg.bc)[0]
    B, ms = steady_prediction(grid, m_final, S, prm, cfg.bc)
    predicted = ms * np.sign(mI[0])
    err = np.abs(m_final - predicted)
    res = Outcome("steady1d")
    res.files.append(_field_table(out / "comparison.csv", grid, {
        "B": B, "m_initial": mI[0], "m_final": m_final, "m_steady": predicted, "abs_err": err}))
    summary = {"t_final": prm.t_end, "max_abs_err": float(np.max(err))}
    if prm.gamma == 1:
        band = support_band(grid, B, prm)
        worst = float(np.max(err[~band])) if np.any(~band) else 0.0
        summary["band_nodes"] = int(np.sum(band))
        summary["max_abs_err_outside_band"] = worst
        res.check("max_abs_err_outside_band", worst, cfg.check_tol, worst <= cfg.check_tol)
    else:
        worst = float(np.max(err))
        res.check("max_abs_err", worst, cfg.check_tol, worst <= cfg.check_tol)
    if figures:
        res.files.append(_plot().plot_field(out / "steady1d.png", grid, m_final, title="m(T)",
                                            overlays={"m_s sign(m_I)": predicted}))
    return _finish(res, out, cfg, summary)


# -- pattern ------------------------------------------------------------------
def run_pattern(cfg: RunConfig, out: Path, figures: bool = True) -> Outcome:
    """Construct a ``D = 0`` pattern, check stationarity and linear stability."""
    grid, prm = cfg.grid, cfg.params.with_(D=0.0)
    S = cfg.source_field()
    pat = construct_pattern_d0(cfg.pattern_spec(), prm, S)
    resid = stationarity_residual(grid, pat.m0, pat.pressure, prm)
    drift = one_step_drift(pat, prm, S)
    nI = admissible_perturbation(pat, cfg.seed)
    rep = verify_pattern_stability(pat, nI, prm, cfg.horizon)
    res = Outcome("pattern")
    comps = {f"m0_{a}": pat.m0[a] for a in range(grid.dim)}
    res.files.append(_field_table(out / "pattern.csv", grid, {
        "sign": pat.pattern.signs, "p0": pat.pressure.p, **comps,
        "grad_p0": node_norm(pat.pressure.gradp)}))
    res.files.append(io.write_csv(out / "stability.csv", ("t", "n_l2sq", "gradq_l2sq"),
                                  list(zip(rep.times, rep.n_l2sq, rep.gradq_l2sq))))
    res.files.append(io.write_csv(
        out / "minimizer.csv", ("iteration", "functional", "grad_norm"),
        list(zip(range(len(pat.solve.functional)), pat.solve.functional,
                 pat.solve.grad_norms))))
    res.check("stationarity_residual", resid, 1e-6, resid <= 1e-6)
    res.check("one_step_drift", drift, 1e-6, drift <= 1e-6)
    res.check("ratio_n", rep.ratio_n, 0.01, rep.ratio_n < 0.01)
    res.check("ratio_gradq", rep.ratio_gradq, 0.01, rep.ratio_gradq < 0.01)
    summary = {"functional": pat.solve.functional[-1], "minimizer_iterations": pat.solve.iterations,
               "identity_defect": rep.identity_defect, "linear_dt": rep.dt,
               "horizon": cfg.horizon}
    if figures:
        plot = _plot()
        res.files.append(plot.plot_field(out / "pattern.png", grid, pat.m0, title="m0"))
        res.files.append(plot.plot_series(out / "stability.png", rep.times,
                                          {"||n||^2": rep.n_l2sq, "||grad q||^2": rep.gradq_l2sq},
                                          xlabel="t", logy=True))
    return _finish(res, out, cfg, summary)


# -- spectrum -----------------------------------------------------------------
NEAR_ZERO_AMPLITUDE = 1e-4


def run_spectrum(cfg: RunConfig, out: Path, figures: bool = True) -> Outcome:
    """Leading eigenvalue, threshold, growth-rate scan and a nonlinear run at twice the threshold."""
    grid, prm = cfg.grid, cfg.params
    if prm.D <= 0:
        raise ValueError("spectrum needs D > 0")
    p0 = solve_pressure(grid, grid.zeros(vector=True), cfg.source_field(), tol=prm.cg_tol)
    sr = sigma1(p0, seed=cfg.seed)
    res = Outcome("spectrum")
    factors = list(cfg.beta_factors)

    def member(f):
        times, norms = growth_trace(f * sr.beta_star, p0, prm, cfg.horizon, seed=cfg.seed)
        return times, norms, decay_rate_estimate(times, norms)

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        runs = list(pool.map(member, factors))
    rows = []
    for f, (_, _, rate) in zip(factors, runs):
        beta = f * sr.beta_star
        label = classify_zero_state(beta, sr)
        rows.append((f, beta, label, rate))
        if label != "neutral":
            ok = rate > 0 if label == "unstable" else rate < 0
            res.check(f"growth_sign_{f!r}", rate, 0.0, ok)
    res.files.append(io.write_csv(out / "spectrum.csv",
                                  ("beta_factor", "beta", "classification", "growth_rate"), rows))
    res.files.append(_field_table(out / "eigenfield.csv", grid,
                                  {f"n{a}": sr.eigenfield[a] for a in range(grid.dim)}))
    # nonlinear run from near-zero data with c chosen so that beta = 2 beta_star
    c_nl = prm.D * np.sqrt(2.0 * sr.beta_star)
    prm_nl = prm.with_(c=float(c_nl), t_end=cfg.horizon, steady_tol=0.0)
    mI = Prng(cfg.seed).uniform((grid.dim,) + grid.shape, NEAR_ZERO_AMPLITUDE)
    trace, _ = simulate(grid, mI, cfg.source_field(), prm_nl)
    res.files.append(io.write_trace(out / "growth_trace.csv", trace))
    norms = trace.column("m_l2")
    k = int(np.argmin(norms))
    growth = float(np.max(norms[k:]) / norms[k]) if norms[k] > 0 else 0.0
    res.check("nonlinear_norm_growth", growth, 1.0, growth > 1.0)
    summary = {"sigma1": sr.sigma1, "beta_star": sr.beta_star,
               "power_iterations": sr.iterations, "power_residual": sr.residual,
               "nonlinear_c": c_nl, "nonlinear_growth_factor": growth}
    if figures:
        plot = _plot()
        series = {f"{f:g} beta*": n / n[0] for f, (_, n, _) in zip(factors, runs)}
        res.files.append(plot.plot_series(out / "growth.png", runs[0][0], series,
                                          xlabel="t", ylabel="||n|| / ||n(0)||", logy=True))
        res.files.append(plot.plot_field(out / "eigenfield.png", grid, sr.eigenfield,
                                         title="leading eigenfield"))
        res.files.append(plot.plot_trace(out / "growth_trace.png", trace))
    return _finish(res, out, cfg, summary)


# -- limits -------------------------------------------------------------------
def smooth_field(grid: Grid) -> np.ndarray:
    """Fixed smooth conductance used by the mollifier sweep."""
    xs = grid.coords()
    m = np.zeros((grid.dim,) + grid.shape)
    for a in range(grid.dim):
        m[a] = (1.0 + 0.5 * np.cos(2 * np.pi * xs[a])) * np.sin(np.pi * xs[-1 - a])
    return m


def large_d_threshold(grid: Grid, S, c: float) -> float:
    """``2 c ||S||_1 / pi``, above which 1D patterns cannot persist."""
    return 2.0 * c * integrate(grid, np.abs(S)) / np.pi


def _tv_max(trace) -> float:
    return float(np.nanmax(trace.column("tv")))


def run_limits(cfg: RunConfig, out: Path, figures: bool = True) -> Outcome:
    """Vanishing-diffusion, large-diffusion and mollifier sweeps."""
    grid, prm = cfg.grid, cfg.params
    S, mI = cfg.source_field(), cfg.initial_field()
    res = Outcome("limits")
    pool = ThreadPoolExecutor(max_workers=cfg.workers)
    summary = {}
    try:
        # vanishing diffusion: every member against the D = 0 run
        d_values = sorted(set(cfg.D_list), reverse=True)
        runs = list(pool.map(lambda d: simulate(grid, mI, S, prm.with_(D=d, steady_tol=0.0)),
                             [0.0] + d_values))
        (tr0, st0), members = runs[0], runs[1:]
        rows, diffs = [], []
        tv0 = _tv_max(tr0) if grid.dim == 1 else float("nan")
        for d, (tr, st) in zip(d_values, members):
            diff = l2_norm(grid, st.m - st0.m)
            diffs.append(diff)
            tv = _tv_max(tr) if grid.dim == 1 else float("nan")
            rows.append((d, tv, tv / tv0 if grid.dim == 1 else float("nan"), diff))
            if grid.dim == 1:
                ratio = tv / tv0
                res.check(f"tv_within_factor2_D={d!r}", ratio, 2.0, 0.5 <= ratio <= 2.0)
        rows.append((0.0, tv0, 1.0, 0.0))
        res.files.append(io.write_csv(out / "limits_diffusion.csv",
                                      ("D", "tv_max", "tv_ratio", "l2_diff_to_D0"), rows))
        steps = np.diff(diffs)
        worst = float(np.max(steps)) if len(steps) else -1.0
        res.check("l2_diff_decreasing_in_D", worst, 0.0, worst < 0)

        # large diffusion, 1D only
        if grid.dim == 1:
            d0 = large_d_threshold(grid, S, prm.c)
            summary["large_D_threshold"] = d0
            big = [f * d0 for f in cfg.large_D_factors]
            big_runs = list(pool.map(
                lambda d: simulate(grid, mI, S, prm.with_(D=d, t_end=cfg.large_D_t_end,
                                                          steady_tol=0.0)), big))
            big_rows = []
            for f, d, (_, st) in zip(cfg.large_D_factors, big, big_runs):
                sup = linf_norm(grid, st.m)
                big_rows.append((f, d, st.t, sup))
                res.check(f"large_D_dies_factor={f!r}", sup, 1e-8, sup <= 1e-8)
            res.files.append(io.write_csv(out / "limits_large_diffusion.csv",
                                          ("factor", "D", "t_final", "m_linf"), big_rows))

        # mollifier sweep on a fixed smooth field
        m = smooth_field(grid)
        p = solve_pressure(grid, m, S, tol=prm.cg_tol).p
        eps_values = sorted(set(cfg.eps_list), reverse=True)
        sols = list(pool.map(
            lambda e: solve_pressure_mollified(grid, m, S, heat_kernel(grid, e), tol=prm.cg_tol),
            eps_values))
        eps_rows, gaps = [], []
        for e, sol in zip(eps_values, sols):
            gap = l2_norm(grid, sol.p - p)
            gaps.append(gap)
            kern = heat_kernel(grid, e)
            eps_rows.append((e, kern.radius, kern.degenerate, gap))
        res.files.append(io.write_csv(out / "limits_mollifier.csv",
                                      ("epsilon", "radius", "degenerate", "l2_gap"), eps_rows))
        steps = np.diff(gaps)
        worst = float(np.max(steps)) if len(steps) else -1.0
        res.check("mollified_gap_decreasing", worst, 0.0, worst < 0)
    finally:
        pool.shutdown()
    if figures:
        plot = _plot()
        res.files.append(plot.plot_series(out / "limits_diffusion.png", d_values,
                                          {"||m^D - m^0||": diffs}, xlabel="D", logx=True,
                                          logy=True, marker="o"))
        res.files.append(plot.plot_series(out / "limits_mollifier.png", eps_values,
                                          {"||p_eps - p||": gaps}, xlabel="epsilon", logx=True,
                                          logy=True, marker="o"))
    return _finish(res, out, cfg, summary)


# -- mollified ----------------------------------------------------------------
def run_mollified(cfg: RunConfig, out: Path, figures: bool = True) -> Outcome:
    """Single mollified run monitored by the mollified energy."""
    grid, prm = cfg.grid, cfg.params
    kernel = heat_kernel(grid, prm.epsilon)
    trace, state = simulate(grid, cfg.initial_field(), cfg.source_field(), prm,
                            Variant.MOLLIFIED, kernel)
    res = Outcome("mollified")
    res.files.append(io.write_trace(out / "trace.csv", trace))
    rise = energy_increase(trace)
    res.check("mollified_energy_nonincreasing", rise, MONOTONE_SLACK, rise <= MONOTONE_SLACK)
    summary = {"epsilon": prm.epsilon, "kernel_radius": kernel.radius,
               "kernel_degenerate": kernel.degenerate, "kernel_mass": kernel.mass,
               "t_final": state.t, "energy_final": state.energy.total}
    if figures:
        res.files.append(_plot().plot_trace(out / "trace.png", trace))
    return _finish(res, out, cfg, summary)


EXPERIMENTS = {
    "simulate": run_simulate,
    "decay": run_decay,
    "steady1d": run_steady1d,
    "pattern": run_pattern,
    "spectrum": run_spectrum,
    "limits": run_limits,
    "mollified": run_mollified,
}


def run_experiment(name: str, cfg: RunConfig, out=None, figures: bool = True) -> Outcome:
    """Run subcommand ``name``; ``out`` defaults to the configured directory."""
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}")
    out = Path(cfg.out if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    return EXPERIMENTS[name](cfg, out, figures)
