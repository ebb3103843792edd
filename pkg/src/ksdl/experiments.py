"""Monte Carlo campaigns around a fixed KS instance plus a KS-DL phase-transition demo.

Every campaign is a pure function of ``(config, seed)``.  Random streams are
derived with :func:`ksdl.generative.make_rng` from the seed plus integer keys
naming the campaign, the radius index and the trial, so any single row can be
regenerated from the seed columns it records.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__, _kernels
from .config import ExperimentConfig
from .dictionary import ks_mu_s, near_orthonormal_dictionary, random_dictionary, \
    sphere_perturbation
from .generative import GenerativeModel, ObservationBatch, make_rng, synthesize
from .objective import (
    CertificateInapplicable,
    analytic_gap_expectation,
    certificate_batch,
    lasso_batch,
    phi_batch,
)
from .theory import HypothesisError, TheoremReport, check_theorem1, constants, eta_n, \
    prop1_lower_bound

__all__ = [
    "Instance",
    "SweepResult",
    "AltMinResult",
    "resolve_instance",
    "csv_comment",
    "risk_gap_sweep",
    "deviation_sweep",
    "ksdl_alternating_minimization",
    "match_columns",
    "recovery_errors",
    "phase_transition",
    "loglog_slope",
]

# stream keys, one per campaign
_K_INSTANCE, _K_RISK, _K_DEV_DICT, _K_DEV_DATA, _K_PHASE_DATA, _K_PHASE_INIT, _K_BOOT = range(7)


@dataclass
class Instance:
    factors: list
    model: GenerativeModel
    lam: float
    eps: list
    source: str


def resolve_instance(config: ExperimentConfig, seed: int) -> Instance:
    """Materialize the configured instance (the shipped fixture or a seeded random one)."""
    ic = config.instance
    if ic.source == "fixture":
        from .fixture_search import load_fixture

        fx = load_fixture(ic.path)
        model = fx["model"]
        eps = list(ic.eps) if ic.eps is not None else fx["eps"]
        lam = fx["lambda"] if ic.lam is None else float(ic.lam)
        if len(eps) != model.K:
            raise ValueError("need one radius per mode")
        return Instance(fx["factors"], model, lam, [float(e) for e in eps], "fixture")
    model = GenerativeModel(tuple(ic.m), tuple(ic.p), tuple(ic.s), ic.x_min, ic.x_max,
                            ic.noise_bound)
    rng = make_rng(seed, _K_INSTANCE)
    factors = []
    for m, p in zip(model.m_vec, model.p_vec):
        if ic.spread is not None and p <= m:
            factors.append(near_orthonormal_dictionary(m, p, ic.spread, rng).matrix)
        else:
            factors.append(random_dictionary(m, p, rng).matrix)
    return Instance(factors, model, float(ic.lam), [float(e) for e in ic.eps], "random")


def csv_comment(config: ExperimentConfig, seed: int, extra: str = "") -> str:
    text = f"ksdl {__version__} seed={seed} config_sha256={config.digest()}"
    return f"{text} {extra}".rstrip()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


@dataclass
class SweepResult:
    """Self-describing rows plus a summary dictionary."""

    name: str
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)

    def to_csv(self, path: str, comment: str) -> None:
        with open(path, "w", newline="\n") as fh:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(_fmt(row[c]) for c in self.columns) + "\n")

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])


def _require(report: TheoremReport, force: bool) -> None:
    if not report.verdict and not force:
        failed = ", ".join(c.name for c in report.conditions if not c.holds)
        raise HypothesisError(f"hypotheses fail ({failed}); pass force=True to run anyway")


def _sphere_sample(factors, eps, seed, *keys):
    rng = make_rng(seed, *keys)
    return [sphere_perturbation(f, e, rng).matrix for f, e in zip(factors, eps)]


def _gap_mode(config: ExperimentConfig, model: GenerativeModel) -> str:
    if config.gap_mode != "auto":
        return config.gap_mode
    count = math.prod(math.comb(p, s) for p, s in zip(model.p_vec, model.s_vec))
    return "enumerate" if count <= config.support_cap else "monte_carlo"


def _mc_gap(factors, factors0, model, lam, n, rng):
    """Mean and standard error of ``phi_y(D|sigma) - phi_y(D0|sigma)`` over ``n`` draws."""
    batch = synthesize(factors0, model, n, rng)
    sig = np.sign(batch.values)
    phi, _ = phi_batch(factors, batch.Y, sig, batch.support_idx, lam)
    phi0, _ = phi_batch(factors0, batch.Y, sig, batch.support_idx, lam)
    d = phi - phi0
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(n))


def _bootstrap_min_lower(est, se, reps, rng, level=0.05):
    """Lower ``level`` quantile of the bootstrapped sample minimum.

    Each replicate resamples the sphere points with replacement and perturbs
    each estimate by its own standard error.
    """
    est, se = np.asarray(est), np.asarray(se)
    idx = rng.integers(0, est.size, size=(reps, est.size))
    z = rng.standard_normal((reps, est.size))
    mins = np.min(est[idx] + se[idx] * z, axis=1)
    return float(np.quantile(mins, level))


def risk_gap_sweep(config: ExperimentConfig, seed: int, force: bool = False) -> SweepResult:
    """Sampled risk gap on spheres of radii ``fraction * eps`` against the lower bound.

    Rows hold one sphere point each.  The reported minimum is over this
    explicit sample, not over the whole sphere.
    """
    inst = resolve_instance(config, seed)
    model, lam = inst.model, inst.lam
    report = check_theorem1(inst.factors, model, lam, inst.eps)
    _require(report, force)
    mins = [r["eps_k_min"] for r in constants(inst.factors, model, lam)["per_mode"]]
    mode = _gap_mode(config, model)
    rows = []
    for ri, frac in enumerate(config.radius_fractions):
        eps = [frac * e for e in inst.eps]
        bound = prop1_lower_bound(model, eps, mins)
        for i in range(config.dict_samples):
            d = _sphere_sample(inst.factors, eps, seed, _K_RISK, ri, i)
            if mode == "enumerate":
                est, se = analytic_gap_expectation(d, inst.factors, model, lam,
                                                   cap=config.support_cap), 0.0
            else:
                est, se = _mc_gap(d, inst.factors, model, lam, config.mc_samples,
                                  make_rng(seed, _K_RISK, ri, i, 1))
            rows.append({
                "radius_index": ri, "sample": i, "seed": seed,
                "stream": f"{_K_RISK}/{ri}/{i}", "eps": eps, "mode": mode,
                "estimate": est, "se": se, "bound": bound,
                "verdict": bool(est >= bound - 3 * se),
            })
    est = np.array([r["estimate"] for r in rows])
    se = np.array([r["se"] for r in rows])
    lower = _bootstrap_min_lower(est, se, config.bootstrap, make_rng(seed, _K_BOOT))
    summary = {
        "min_estimate": float(est.min()),
        "bootstrap_min_lower_95": lower,
        "positive_95": bool(lower > 0),
        "all_above_bound": all(r["verdict"] for r in rows),
        "theorem_verdict": report.verdict,
        "forced": bool(force and not report.verdict),
        "note": "minimum over the recorded sphere sample only",
    }
    cols = ["radius_index", "sample", "seed", "stream", "eps", "mode", "estimate", "se",
            "bound", "verdict"]
    return SweepResult("risk_gap", cols, rows, summary)


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _lasso_values(factors, batch, lam, mu, tol):
    """Per-column lasso optimum, in closed form wherever the sign certificate holds."""
    sig = np.sign(batch.values)
    phi, _ = phi_batch(factors, batch.Y, sig, batch.support_idx, lam)
    try:
        ok = certificate_batch(factors, batch, lam, mu)
    except CertificateInapplicable:
        ok = np.zeros(batch.N, dtype=bool)
    bad = np.flatnonzero(~ok)
    if bad.size:
        phi[bad] = lasso_batch(factors, batch.Y[:, bad], lam, tol).values
    return phi, int(bad.size)


def deviation_sweep(config: ExperimentConfig, seed: int, force: bool = False) -> SweepResult:
    """``sup_D |Delta F_Y(D) - Delta phi_P(D)|`` over sampled sphere points, against ``eta_N``.

    One row per ``(N, replicate)``; ``summary`` holds the replicate means per
    ``N`` and the log-log slope.
    """
    inst = resolve_instance(config, seed)
    model, lam, eps = inst.model, inst.lam, inst.eps
    report = check_theorem1(inst.factors, model, lam, eps)
    _require(report, force)
    mode = _gap_mode(config, model)
    dicts = [_sphere_sample(inst.factors, eps, seed, _K_DEV_DICT, i)
             for i in range(config.dict_samples)]
    if mode == "enumerate":
        target = [analytic_gap_expectation(d, inst.factors, model, lam, cap=config.support_cap)
                  for d in dicts]
    else:
        target = [_mc_gap(d, inst.factors, model, lam, config.mc_samples,
                          make_rng(seed, _K_DEV_DICT, i, 1))[0] for i, d in enumerate(dicts)]
    mus = [ks_mu_s(d, model.s_vec)[0] for d in dicts]
    mu0 = ks_mu_s(inst.factors, model.s_vec)[0]
    rows = []
    for n in config.n_grid:
        eta = eta_n(inst.factors, model, lam, eps, n, config.xi)
        for rep in range(config.reps):
            batch = synthesize(inst.factors, model, n, make_rng(seed, _K_DEV_DATA, n, rep))
            f0, fb0 = _lasso_values(inst.factors, batch, lam, mu0, config.lasso_tol)
            sup, fallback = 0.0, fb0
            for d, mu, t in zip(dicts, mus, target):
                f, fb = _lasso_values(d, batch, lam, mu, config.lasso_tol)
                fallback += fb
                sup = max(sup, abs(float(np.mean(f - f0)) - t))
            rows.append({"N": n, "rep": rep, "seed": seed, "stream": f"{_K_DEV_DATA}/{n}/{rep}",
                         "sup_deviation": sup, "eta_N": eta, "ratio": sup / eta,
                         "lasso_fallbacks": fallback, "verdict": bool(sup <= eta)})
    means = {n: float(np.mean([r["sup_deviation"] for r in rows if r["N"] == n]))
             for n in config.n_grid}
    summary = {
        "mode": mode,
        "mean_sup_deviation": {str(n): v for n, v in means.items()},
        "slope": loglog_slope(list(means), list(means.values())) if len(means) > 1 else None,
        "all_below_eta": all(r["verdict"] for r in rows),
        "max_ratio": max(r["ratio"] for r in rows),
        "xi": config.xi,
        "theorem_verdict": report.verdict,
    }
    cols = ["N", "rep", "seed", "stream", "sup_deviation", "eta_N", "ratio", "lasso_fallbacks",
            "verdict"]
    return SweepResult("deviation", cols, rows, summary)


@dataclass
class AltMinResult:
    factors: list
    history: list
    iterations: int
    converged: bool
    skipped: list


def _mode_apply(t: np.ndarray, a: np.ndarray, k: int) -> np.ndarray:
    """Mode-``k`` product on a batch tensor whose axis 0 indexes samples."""
    return np.moveaxis(np.tensordot(a, t, axes=(1, k + 1)), 0, k + 1)


def _mode_update(factors, xt, yt, k):
    """Least-squares ``D_k`` from ``Y_(k) = D_k Z_(k)`` with ``Z = X x_{i != k} D_i``."""
    z = xt
    for i, f in enumerate(factors):
        if i != k:
            z = _mode_apply(z, f, i)
    zk = np.moveaxis(z, k + 1, 0).reshape(z.shape[k + 1], -1)
    yk = np.moveaxis(yt, k + 1, 0).reshape(yt.shape[k + 1], -1)
    gram = zk @ zk.T
    used = np.flatnonzero(np.diag(gram) > 0)
    if used.size == 0:
        return None
    g = gram[np.ix_(used, used)]
    if np.linalg.matrix_rank(g) < used.size:
        return None
    dk = factors[k].copy()
    # atoms that no sample touches keep their current value
    cols = np.linalg.solve(g, zk[used] @ yk.T).T
    norms = np.linalg.norm(cols, axis=0)
    if np.any(norms == 0):
        return None
    dk[:, used] = cols / norms
    return dk


def ksdl_alternating_minimization(batch, init: Sequence[np.ndarray], lam: float, iters: int = 50,
                                  tol: float = 1e-9, lasso_tol: float = 1e-10) -> AltMinResult:
    """Alternate lasso sparse coding with mode-wise least-squares factor updates.

    ``batch`` is an ObservationBatch or an ``(m, N)`` array.  ``history`` holds
    ``F_Y`` after each sparse-coding step.  Atoms unused by every sample keep
    their current column; a mode whose coefficient block is all zero or
    singular keeps its current factor and is listed in ``skipped``.
    """
    Y = batch.Y if isinstance(batch, ObservationBatch) else np.asarray(batch, dtype=float)
    factors = [np.array(f, dtype=float, copy=True) for f in init]
    if Y.ndim != 2 or Y.shape[1] == 0:
        raise ValueError("alternating minimization needs a nonempty batch")
    m_vec = tuple(f.shape[0] for f in factors)
    p_vec = tuple(f.shape[1] for f in factors)
    if math.prod(m_vec) != Y.shape[0]:
        raise ValueError("initial factors do not match the observation dimension")
    n = Y.shape[1]
    yt = Y.T.reshape((n,) + m_vec)
    X = None
    history, skipped = [], []
    converged = False
    it = 0
    for it in range(1, iters + 1):
        res = lasso_batch(factors, Y, lam, lasso_tol, X0=X)
        X = res.X
        history.append(float(np.mean(res.values)))
        xt = X.T.reshape((n,) + p_vec)
        step = 0.0
        for k in range(len(factors)):
            new = _mode_update(factors, xt, yt, k)
            if new is None:
                warnings.warn(f"mode {k}: degenerate coefficient block, update skipped",
                              RuntimeWarning, stacklevel=2)
                skipped.append((it, k))
                continue
            step = max(step, float(np.linalg.norm(new - factors[k])))
            factors[k] = new
        if step < tol:
            converged = True
            break
    return AltMinResult(factors, history, it, converged, skipped)


def match_columns(d_hat: np.ndarray, d0: np.ndarray) -> np.ndarray:
    """Permute and sign-flip the columns of ``d_hat`` to align with ``d0`` (greedy on ``|<.,.>|``)."""
    corr = d0.T @ d_hat
    assign = _kernels.greedy_match(np.abs(corr))
    out = d_hat[:, assign]
    signs = np.sign(corr[np.arange(d0.shape[1]), assign])
    signs[signs == 0] = 1.0
    return out * signs


def recovery_errors(factors, factors0) -> list[float]:
    """Squared Frobenius error per mode after sign and permutation matching."""
    return [float(np.sum((match_columns(f, f0) - f0) ** 2)) for f, f0 in zip(factors, factors0)]


def _phase_trial(args):
    factors0, model, lam, eps_init, n, trial, seed, pc, lasso_tol = args
    batch = synthesize(factors0, model, n, make_rng(seed, _K_PHASE_DATA, n, trial))
    init = _sphere_sample(factors0, eps_init, seed, _K_PHASE_INIT, n, trial)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = ksdl_alternating_minimization(batch, init, lam, pc.iters, pc.tol, lasso_tol)
    errs = recovery_errors(res.factors, factors0)
    return {"N": n, "trial": trial, "seed": seed, "stream": f"{_K_PHASE_DATA}/{n}/{trial}",
            "max_mode_sq_error": max(errs), "mode_sq_errors": errs,
            "init_sq_error": max(recovery_errors(init, factors0)),
            "iterations": res.iterations, "converged": res.converged}


def phase_transition(config: ExperimentConfig, seed: int, force: bool = False) -> SweepResult:
    """Recovery error of alternating minimization versus ``N`` (demonstrative only).

    Initializations lie on spheres of radius ``init_fraction`` times the upper
    end of the admissible radius range around the true factors.
    """
    inst = resolve_instance(config, seed)
    model, lam = inst.model, inst.lam
    report = check_theorem1(inst.factors, model, lam, inst.eps)
    _require(report, force)
    upper = min(report.globals["lambda_bar"] * report.globals["C_max"], 0.15)
    eps_init = [config.phase.init_fraction * upper] * model.K
    tasks = [(inst.factors, model, lam, eps_init, n, t, seed, config.phase,
              max(config.lasso_tol, 1e-10))
             for n in config.phase.n_grid for t in range(config.phase.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            rows = list(pool.map(_phase_trial, tasks))
    else:
        rows = [_phase_trial(t) for t in tasks]
    grid = list(config.phase.n_grid)
    med = [float(np.median([r["max_mode_sq_error"] for r in rows if r["N"] == n])) for n in grid]
    top = [i for i, n in enumerate(grid) if n >= max(grid) / 10]
    slope = loglog_slope([grid[i] for i in top], [med[i] for i in top]) if len(top) > 1 else None
    summary = {
        "label": "demonstrative",
        "eps_init": eps_init,
        "median_max_mode_sq_error": {str(n): v for n, v in zip(grid, med)},
        "non_increasing": bool(all(b <= a for a, b in zip(med, med[1:]))),
        "top_decade_slope": slope,
        "top_decade": [grid[i] for i in top],
    }
    cols = ["N", "trial", "seed", "stream", "max_mode_sq_error", "mode_sq_errors",
            "init_sq_error", "iterations", "converged"]
    return SweepResult("phase_transition", cols, rows, summary)
