"""Ensembles of beables: |Psi|^2 sampling, equivariance and collapse tests.

Sampling is Metropolis-Hastings with an independence proposal equal to the
coefficient-weighted mixture of the branch position densities at T0. The
proposal dominates the target up to bounded interference factors, so the
chains mix geometrically; each returned configuration is the endpoint of its
own chain (n_samples chains advanced in lockstep), making the samples i.i.d.
for the KS tests downstream.

Randomness is counter-based: step k of every chain draws from
Philox(key=(seed, 0), counter=(k, 0, 0, 0)) in a fixed order (branch picks,
coordinate normals, accept uniforms), so output is reproducible bit for bit
for a given seed regardless of scheduling or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import kstest

from .dynamics import flow_ensemble
from .errors import Unclassifiable
from .residuals import ResidualSummary, residual_report
from .wavefunction import (MftState, amplitude_batch, as_times,
                           branch_log_weights, evolve_tables, pack_state,
                           state_fingerprint)
from . import kernels

# beyond this, |c_a psi_a|^2 underflows to zero for every branch
_CLASSIFY_FLOOR = -1490.0
DOMINANCE = 1.0 - 1e-3
OVERLAP_EPS = 1e-6


@dataclass(frozen=True)
class SamplerConfig:
    n_samples: int
    seed: int = 42
    burn_in: int = 1000
    thinning: int = 10
    proposal: str = "MixtureIndependence"

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.proposal != "MixtureIndependence":
            raise ValueError(f"unknown proposal {self.proposal!r}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class KsRow:
    coordinate: int
    statistic: float
    p_value: float
    n: int


@dataclass(frozen=True)
class BranchRow:
    branch: int
    freq: float
    ci_low: float
    ci_high: float
    expected: float


@dataclass(frozen=True, eq=False)
class EnsembleReport:
    ks: tuple = ()
    branches: tuple = ()
    unclassified_fraction: float = 0.0
    excluded_fraction: float = 0.0
    flips: int = 0
    overlap_max: float = float("nan")
    valid: bool = True
    reasons: tuple = ()
    residual_summary: ResidualSummary | None = None
    metadata: tuple = ()

    def as_kv_lines(self):
        lines = []
        for key, val in self.metadata:
            lines.append(f"{key}={val}")
        for row in self.ks:
            lines.append(f"ks_stat_{row.coordinate + 1}={row.statistic:.17g}")
            lines.append(f"ks_p_{row.coordinate + 1}={row.p_value:.17g}")
        for row in self.branches:
            lines.append(f"branch_freq_{row.branch + 1}={row.freq:.17g}")
            lines.append(
                f"branch_expected_{row.branch + 1}={row.expected:.17g}")
        lines.append(f"unclassified_fraction={self.unclassified_fraction:.17g}")
        lines.append(f"excluded_fraction={self.excluded_fraction:.17g}")
        lines.append(f"flips={self.flips}")
        if not math.isnan(self.overlap_max):
            lines.append(f"overlap_max={self.overlap_max:.17g}")
        if self.residual_summary is not None:
            rs = self.residual_summary
            lines.append(f"residual_schrodinger_max={rs.max_schrodinger:.17g}")
            lines.append(f"residual_hj_max={rs.max_hj:.17g}")
            lines.append(f"residual_continuity_max={rs.max_continuity:.17g}")
        lines.append(f"valid={int(self.valid)}")
        if self.reasons:
            lines.append("reasons=" + ";".join(self.reasons))
        return lines


def _proposal_params(state: MftState, T0):
    """Mixture weights (log) and per-branch (centers, stds) at T0."""
    ps = pack_state(state)
    t = as_times(T0, ps.n)
    xi, pp, ar, ai, ph, lnn = evolve_tables(ps, t)
    sigma = np.sqrt(1.0 / (4.0 * ai))
    logp = 2.0 * ps.lc
    logp = logp - logsumexp(logp)
    return logp, xi, sigma


def _log_mixture(logp, xi, sigma, Xs):
    # (m, A) per-branch product-normal log-pdfs -> logsumexp over branches
    z = (Xs[:, None, :] - xi[None, :, :]) / sigma[None, :, :]
    terms = np.sum(-0.5 * z * z - np.log(sigma * math.sqrt(2.0 * math.pi)),
                   axis=2)
    return logsumexp(logp[None, :] + terms, axis=1)


def _log_rho(state, Xs, T0):
    logmag, _, _ = amplitude_batch(state, Xs, T0)
    return 2.0 * logmag


def _step_rng(seed: int, k: int) -> np.random.Generator:
    # step index in the HIGH counter word: a step consumes ~4 n_samples
    # low-word increments, so indexing the low word would overlap the
    # streams of consecutive steps and correlate acceptances with the
    # next step's proposals
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, 0], dtype=np.uint64),
                         counter=np.array([0, 0, 0, k], dtype=np.uint64)))


def sample_initial(state: MftState, T0, cfg: SamplerConfig) -> np.ndarray:
    """n_samples configurations ~ rho(., T0), shape (n_samples, n)."""
    ps = pack_state(state)
    m, n = cfg.n_samples, ps.n
    logp, xi, sigma = _proposal_params(state, T0)
    cum = np.cumsum(np.exp(logp))
    cum[-1] = 1.0

    def draw_proposal(rng):
        u = rng.random(m)
        a = np.searchsorted(cum, u)
        z = rng.standard_normal((m, n))
        return xi[a] + sigma[a] * z

    rng = _step_rng(cfg.seed, 0)
    X = draw_proposal(rng)
    lr = _log_rho(state, X, T0)
    lq = _log_mixture(logp, xi, sigma, X)
    for k in range(1, cfg.burn_in + cfg.thinning + 1):
        rng = _step_rng(cfg.seed, k)
        Y = draw_proposal(rng)
        u_acc = rng.random(m)
        lr_y = _log_rho(state, Y, T0)
        lq_y = _log_mixture(logp, xi, sigma, Y)
        with np.errstate(invalid="ignore"):
            log_alpha = (lr_y - lr) + (lq - lq_y)
        acc = np.log(u_acc) < log_alpha
        X[acc] = Y[acc]
        lr[acc] = lr_y[acc]
        lq[acc] = lq_y[acc]
    return X


def exact_marginal_cdf(state: MftState, T, i: int, n_grid: int = 2001,
                       gl_nodes: int = 128):
    """CDF of coordinate i of rho(., T) by Gauss-Legendre quadrature.

    Returns (xs, cdf) for interpolation. The grid spans every branch center
    plus ten widths, so the captured mass is 1 up to ~1e-12.
    """
    ps = pack_state(state)
    t = as_times(T, ps.n)
    xi, pp, ar, ai, ph, lnn = evolve_tables(ps, t)
    sigma = np.sqrt(1.0 / (4.0 * ai))
    lo = np.min(xi - 10.0 * sigma, axis=0)
    hi = np.max(xi + 10.0 * sigma, axis=0)
    xs = np.linspace(lo[i], hi[i], n_grid)
    others = [j for j in range(ps.n) if j != i]
    if not others:
        pdf = _density_rows(state, xs[:, None], t)
    else:
        nodes, weights = np.polynomial.legendre.leggauss(gl_nodes)
        axes = []
        wts = []
        for j in others:
            c, h = 0.5 * (hi[j] + lo[j]), 0.5 * (hi[j] - lo[j])
            axes.append(c + h * nodes)
            wts.append(h * weights)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([g.ravel() for g in mesh])
        wmesh = np.meshgrid(*wts, indexing="ij")
        wprod = np.ones_like(wmesh[0])
        for w in wmesh:
            wprod = wprod * w
        wflat = wprod.ravel()
        pdf = np.empty(n_grid)
        block = np.empty((pts.shape[0], ps.n))
        block[:, others] = pts
        for k, x in enumerate(xs):
            block[:, i] = x
            pdf[k] = np.dot(_density_rows(state, block, t), wflat)
    dx = xs[1] - xs[0]
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * dx)))
    cdf /= cdf[-1]
    return xs, cdf


def _density_rows(state, Xs, t):
    logmag, _, _ = amplitude_batch(state, Xs, t)
    return np.exp(2.0 * logmag)


def branch_weights(state: MftState, X, T) -> np.ndarray:
    """Normalized branch posterior w_a = |c_a Psi_a|^2 / sum_b |c_b Psi_b|^2."""
    logw = branch_log_weights(state, np.atleast_2d(np.asarray(X, float)), T)[0]
    mx = logw.max()
    if mx < _CLASSIFY_FLOOR:
        raise Unclassifiable(
            f"all branch magnitudes underflow (max log weight {mx:.3g})")
    w = np.exp(logw - mx)
    return w / w.sum()


def classify_batch(state: MftState, Xs, T, dominance: float = DOMINANCE):
    """(labels, w_max) per sample; label -1 where no branch dominates."""
    logw = branch_log_weights(state, Xs, T)
    mx = logw.max(axis=1)
    w = np.exp(logw - mx[:, None])
    w /= w.sum(axis=1)[:, None]
    labels = np.argmax(w, axis=1)
    wmax = w[np.arange(len(labels)), labels]
    labels[wmax < dominance] = -1
    labels[mx < _CLASSIFY_FLOOR] = -1
    return labels, wmax


def pairwise_overlap_max(state: MftState, Xs, T) -> float:
    """max over samples of min over branch pairs of |Psi_a Psi_b| /
    (|Psi_a|^2 + |Psi_b|^2); coefficient-free, 0.5 at equal magnitudes."""
    ps = pack_state(state)
    t = as_times(T, ps.n)
    xi, pp, ar, ai, ph, lnn = evolve_tables(ps, t)
    Xb = np.ascontiguousarray(np.atleast_2d(np.asarray(Xs, dtype=float)))
    relog = kernels.eval_branch_relog(Xb, xi, pp, ar, ai, lnn)
    A = relog.shape[1]
    if A < 2:
        return 0.0
    best = np.full(Xb.shape[0], np.inf)
    for a in range(A):
        for b in range(a + 1, A):
            d = np.abs(relog[:, a] - relog[:, b])
            # 1/(2 cosh d) evaluated without overflow
            e = np.exp(-d)
            np.minimum(best, e / (1.0 + e * e), out=best)
    return float(best.max())


def _wald_ci(f: float, n: int, z: float = 1.96):
    half = z * math.sqrt(max(f * (1.0 - f), 0.0) / n)
    return max(0.0, f - half), min(1.0, f + half)


def expected_branch_probs(state: MftState) -> np.ndarray:
    ps = pack_state(state)
    p = np.exp(2.0 * ps.lc)
    return p / p.sum()


def _meta(state, cfg, grid: str):
    return (("seed", str(cfg.seed)),
            ("state", state_fingerprint(state)),
            ("n_samples", str(cfg.n_samples)),
            ("grid", grid))


def equivariance_test(state: MftState, delta, tau0: float, tau1: float,
                      cfg: SamplerConfig, step: float = 1e-3,
                      include_residuals: bool = True) -> EnsembleReport:
    """Sample rho at T(tau0), flow to tau1, KS-test each coordinate against
    the quadrature marginal of rho(., T(tau1))."""
    off = np.asarray(delta, dtype=float)
    T0 = tau0 + off
    T1 = tau1 + off
    X0 = sample_initial(state, T0, cfg)
    Xf, stalled = flow_ensemble(state, off, X0, tau0, tau1, step)
    kept = Xf[~stalled]
    excluded = float(stalled.mean())
    reasons = []
    valid = True
    if excluded > 1e-3:
        valid = False
        reasons.append(f"excluded_fraction {excluded:.4g} > 0.1%")
    rows = []
    for i in range(state.n_particles):
        xs, cdf = exact_marginal_cdf(state, T1, i)
        res = kstest(kept[:, i], lambda x: np.interp(x, xs, cdf))
        rows.append(KsRow(coordinate=i, statistic=float(res.statistic),
                          p_value=float(res.pvalue), n=kept.shape[0]))
    summary = None
    if include_residuals:
        summary = residual_report(state, [T0, T1], n_per_axis=3)
    grid = (f"tau0={tau0:g},tau1={tau1:g},step={step:g},"
            "delta=(" + ",".join(f"{d:g}" for d in off) + ")")
    return EnsembleReport(ks=tuple(rows), excluded_fraction=excluded,
                          valid=valid, reasons=tuple(reasons),
                          residual_summary=summary,
                          metadata=_meta(state, cfg, grid))


@dataclass(frozen=True)
class CollapseScenario:
    """Flow window over which branch supports must become disjoint."""

    offsets: tuple
    tau0: float
    tau1: float
    step: float = 1e-3
    recheck_dtau: float = 0.5


def collapse_statistics(state: MftState, sep: CollapseScenario,
                        cfg: SamplerConfig,
                        include_residuals: bool = True) -> EnsembleReport:
    """Evolve an ensemble through branch separation and compare the branch
    occupation frequencies with the Born weights |c_a|^2.

    Samples are classified at tau1 by dominant branch posterior (threshold
    1 - 1e-3) and re-classified at tau1 + recheck_dtau; a classified sample
    that lands on a different branch at the recheck counts as a flip.
    """
    off = np.asarray(sep.offsets, dtype=float)
    T0 = sep.tau0 + off
    T1 = sep.tau1 + off
    X0 = sample_initial(state, T0, cfg)
    Xf, stalled = flow_ensemble(state, off, X0, sep.tau0, sep.tau1, sep.step)
    n_total = Xf.shape[0]
    reasons = []
    valid = True

    overlap = pairwise_overlap_max(state, Xf[~stalled], T1)
    if overlap >= OVERLAP_EPS:
        valid = False
        reasons.append(
            f"branch overlap {overlap:.3g} >= {OVERLAP_EPS:g} at tau1")

    labels, _ = classify_batch(state, Xf, T1)
    labels[stalled] = -1

    flips = 0
    classified = labels >= 0
    if classified.any() and sep.recheck_dtau != 0.0:
        X2, stalled2 = flow_ensemble(state, off, Xf[classified], sep.tau1,
                                     sep.tau1 + sep.recheck_dtau, sep.step)
        labels2, _ = classify_batch(
            state, X2, sep.tau1 + sep.recheck_dtau + off)
        both = (labels2 >= 0) & ~stalled2
        flips = int(np.sum(labels[classified][both] != labels2[both]))

    expected = expected_branch_probs(state)
    rows = []
    for a in range(state.n_branches):
        f = float(np.mean(labels == a))
        lo, hi = _wald_ci(f, n_total)
        rows.append(BranchRow(branch=a, freq=f, ci_low=lo, ci_high=hi,
                              expected=float(expected[a])))
    unclassified = float(np.mean(labels < 0))
    if unclassified > 0.01:
        valid = False
        reasons.append(f"unclassified fraction {unclassified:.4g} > 1%")
    if flips > 0:
        valid = False
        reasons.append(f"{flips} classification flips at recheck")

    summary = None
    if include_residuals:
        summary = residual_report(state, [T0, T1], n_per_axis=3)
    grid = (f"tau0={sep.tau0:g},tau1={sep.tau1:g},step={sep.step:g},"
            "delta=(" + ",".join(f"{d:g}" for d in off) + "),"
            f"recheck={sep.recheck_dtau:g}")
    return EnsembleReport(branches=tuple(rows),
                          unclassified_fraction=unclassified,
                          excluded_fraction=float(stalled.mean()),
                          flips=flips, overlap_max=overlap, valid=valid,
                          reasons=tuple(reasons), residual_summary=summary,
                          metadata=_meta(state, cfg, grid))
