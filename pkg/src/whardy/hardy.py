"""Discrete Hardy constants on tree coverings with distance-power weights.

The tree constant is the supremum over non-root nodes of

    S_t^(1/(theta q)) * ( sum_{s >= t} b_s w_s^p S_s^((p/q)(1 - 1/theta)) )^(1/p),

where S_t sums b_s^(-q/p) nu_s^(-q) along the path from just below the root
to t. With nu = omega = ell^beta and b = ell^n the constant is invariant
under rescaling the frame, and its finiteness under refinement is governed
by beta p relative to -(n - dim_A of the boundary).

The chain constant sums prefixes including the root, matching the chain
form of the criterion; on a four-node path with unit weights and p = 2 it
equals sqrt(6).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, StructureError
from .treecover import TreeCovering, build_tree
from .whitney import whitney_decompose

DEFAULT_THETA_GRID = (1.05, 1.1, 1.25, 1.5, 2.0, 3.0, 5.0)
LOG_SPACE_LIMIT = 1e250


@dataclass(frozen=True)
class WeightSpec:
    beta: float
    p: float
    theta_grid: tuple = DEFAULT_THETA_GRID

    def __post_init__(self):
        if self.p <= 1:
            raise ParameterError("p must exceed 1")
        if any(t <= 1 for t in self.theta_grid):
            raise ParameterError("theta grid entries must exceed 1")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)


@dataclass(frozen=True)
class DiscreteWeights:
    nu: np.ndarray
    omega: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for arr in (self.nu, self.omega, self.b):
            if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
                raise ParameterError("discrete weights must be positive and finite")


@dataclass
class HardyReport:
    per_theta: dict  # theta -> (value, argmax node)
    a_tree_min: float
    best_theta: float
    argmax: int
    a_chain: float | None = None
    rows: list = field(default_factory=list)
    classification: dict = field(default_factory=dict)


def tree_weights(tree: TreeCovering, w: WeightSpec) -> DiscreteWeights:
    """nu = omega = ell^beta and b = ell^n, in frame units."""
    ell = tree.ell
    pw = ell**w.beta
    return DiscreteWeights(nu=pw, omega=pw.copy(), b=ell**tree.ndim)


def _kahan_add(s, c, i, x):
    y = x - c[i]
    t = s[i] + y
    c[i] = (t - s[i]) - y
    s[i] = t


def _path_sums(tree: TreeCovering, term: np.ndarray) -> np.ndarray:
    """S_t = sum of term over the path root-excluded down to t (compensated)."""
    n = len(tree)
    s = np.zeros(n)
    c = np.zeros(n)
    for t in tree.order:
        p = tree.parent[t]
        if p < 0:
            continue
        s[t], c[t] = s[p], c[p]
        _kahan_add(s, c, t, term[t])
    return s


def _subtree_sums(tree: TreeCovering, e: np.ndarray) -> np.ndarray:
    """T_t = sum of e over the shadow of t (compensated accumulation)."""
    T = e.astype(float).copy()
    comp = np.zeros(len(tree))
    for t in tree.order[::-1]:
        p = tree.parent[t]
        if p >= 0:
            _kahan_add(T, comp, p, T[t])
    return T


def a_tree(tree: TreeCovering, w: WeightSpec, theta: float,
           weights: DiscreteWeights | None = None):
    """Exact evaluation of the tree Hardy constant for one theta.

    Returns (value, argmax node). On overflow the value is +inf and the
    argmax points at the offending node; sums switch to log space when
    magnitudes pass 1e+-250.
    """
    if theta <= 1:
        raise ParameterError("theta must exceed 1")
    dw = tree_weights(tree, w) if weights is None else weights
    q = w.q
    n = len(tree)
    if n <= 1:
        return 0.0, tree.root

    term = dw.b ** (-q / w.p) * dw.nu ** (-q)
    with np.errstate(over="ignore", invalid="ignore"):
        S = _path_sums(tree, term)
        expo = (w.p / q) * (1.0 - 1.0 / theta)
        e = dw.b * dw.omega**w.p * np.where(S > 0, S, 1.0) ** expo
        e[tree.root] = 0.0  # the root never belongs to a shadow over Gamma*
        T = _subtree_sums(tree, e)
        cand = np.where(S > 0, S ** (1.0 / (theta * q)) * T ** (1.0 / w.p), 0.0)
    arrays = (term, S, e, T, cand)
    finite = all(np.all(np.isfinite(a)) for a in arrays)
    small = max(float(np.abs(a).max()) for a in arrays) < LOG_SPACE_LIMIT
    star = np.arange(n) != tree.root
    # every Gamma* entry is analytically positive; a zero means underflow
    no_underflow = all(float(a[star].min()) > 1.0 / LOG_SPACE_LIMIT
                       for a in (term, S, e, T))
    if finite and small and no_underflow:
        t_star = int(cand.argmax())
        return float(cand[t_star]), t_star
    return _a_tree_log(tree, w, theta, dw)


def _a_tree_log(tree, w, theta, dw):
    q = w.q
    n = len(tree)
    logterm = (-q / w.p) * np.log(dw.b) - q * np.log(dw.nu)
    logS = np.full(n, -np.inf)
    for t in tree.order:
        p = tree.parent[t]
        if p < 0:
            continue
        logS[t] = np.logaddexp(logS[p], logterm[t])
    expo = (w.p / q) * (1.0 - 1.0 / theta)
    loge = np.log(dw.b) + w.p * np.log(dw.omega) + expo * np.where(
        np.isfinite(logS), logS, 0.0
    )
    loge[tree.root] = -np.inf
    logT = loge.copy()
    for t in tree.order[::-1]:
        p = tree.parent[t]
        if p >= 0:
            logT[p] = np.logaddexp(logT[p], logT[t])
    with np.errstate(invalid="ignore"):
        logcand = np.where(
            np.isfinite(logS), logS / (theta * q) + logT / w.p, -np.inf
        )
    t_star = int(logcand.argmax())
    if logcand[t_star] > math.log(float(np.finfo(float).max)):
        return math.inf, t_star
    return float(math.exp(logcand[t_star])), t_star


def a_tree_min(tree: TreeCovering, w: WeightSpec,
               weights: DiscreteWeights | None = None) -> HardyReport:
    """Minimum of the tree constant over the theta grid."""
    dw = tree_weights(tree, w) if weights is None else weights
    per = {}
    for theta in w.theta_grid:
        per[theta] = a_tree(tree, w, theta, weights=dw)
    best_theta = min(per, key=lambda th: per[th][0])
    val, arg = per[best_theta]
    return HardyReport(per_theta=per, a_tree_min=val, best_theta=best_theta, argmax=arg)


def a_chain(chain: TreeCovering, w: WeightSpec,
            weights: DiscreteWeights | None = None) -> float:
    """Chain Hardy constant: sup over non-root t of prefix^(1/q) suffix^(1/p).

    The prefix sum runs over all s preceding-or-equal t including the root.
    A single node has empty Gamma* and reports the degenerate value 0.
    """
    if not chain.is_chain:
        raise StructureError("a_chain requires a chain (every node has at most one child)")
    dw = tree_weights(chain, w) if weights is None else weights
    n = len(chain)
    if n <= 1:
        return 0.0
    q = w.q
    # chain order: root first along tree.order
    order = chain.order
    term_pre = dw.b ** (-q / w.p) * dw.nu ** (-q)
    term_suf = dw.b * dw.omega**w.p
    pre = np.cumsum(term_pre[order])
    suf = np.cumsum(term_suf[order][::-1])[::-1]
    vals = pre[1:] ** (1.0 / q) * suf[1:] ** (1.0 / w.p)
    return float(vals.max())


# ---------------------------------------------------------------------------
# beta sweep


@dataclass
class SweepRow:
    beta: float
    p: float
    theta: float
    level: int
    a_tree: float
    argmax_node: int
    classification: str


def classify_growth(values) -> tuple[str, list]:
    """Convergent when the refinement increments shrink, divergent when they grow.

    The raw level ratio A(k+1)/A(k) approaches 1 too slowly to threshold at
    reachable truncations (the convergent tail decays like 2^(-j/3) per
    level), so the classifier looks at successive increments instead: a
    summable series has strictly shrinking increments, a geometrically
    growing one has non-decreasing increments. With fewer than three levels
    the raw-ratio threshold 1.05 is the fallback.
    """
    vals = list(values)
    if any(not math.isfinite(v) for v in vals):
        return "divergent", []
    ratios = [b / a for a, b in zip(vals, vals[1:]) if a > 0]
    if not ratios:
        return "inconclusive", ratios
    if len(vals) < 3:
        return ("divergent" if ratios[-1] >= 1.05 else "convergent"), ratios
    deltas = [b - a for a, b in zip(vals, vals[1:])]
    if deltas[-2] <= 0:
        return "convergent", ratios
    gamma = deltas[-1] / deltas[-2]
    if gamma >= 1.0:
        return "divergent", ratios
    if gamma < 0.95:
        return "convergent", ratios
    return "inconclusive", ratios


def beta_sweep(dom, p: float, betas, levels, theta_grid=DEFAULT_THETA_GRID,
               center=None, workers: int = 1) -> HardyReport:
    """A_tree_min per (beta, truncation level) with growth classification.

    Evaluations per beta are independent; ``workers`` > 1 runs them in a
    thread pool with results merged back in parameter order.
    """
    levels = list(levels)
    if levels != sorted(levels):
        raise ParameterError("levels must be increasing")
    from . import geometry
    from .treecover import root_center

    preferred = geometry.centroid(dom) if center is None else center
    trees = {}
    for lv in levels:
        dec = whitney_decompose(dom, lv)
        trees[lv] = build_tree(dec, root_center(dec, preferred))

    def one_beta(beta):
        w = WeightSpec(beta=beta, p=p, theta_grid=tuple(theta_grid))
        return [a_tree_min(trees[lv], w) for lv in levels]

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_beta, betas))
    else:
        results = [one_beta(beta) for beta in betas]

    rows = []
    classification = {}
    for beta, reps in zip(betas, results):
        vals = [rep.a_tree_min for rep in reps]
        cls, ratios = classify_growth(vals)
        classification[beta] = {"class": cls, "ratios": ratios, "values": vals}
        for lv, rep in zip(levels, reps):
            rows.append(
                SweepRow(
                    beta=beta,
                    p=p,
                    theta=rep.best_theta,
                    level=lv,
                    a_tree=rep.a_tree_min,
                    argmax_node=rep.argmax,
                    classification=cls,
                )
            )
    return HardyReport(
        per_theta={}, a_tree_min=math.nan, best_theta=math.nan, argmax=-1,
        rows=rows, classification=classification,
    )


def write_sweep_csv(report: HardyReport, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["beta", "p", "theta", "level", "A_tree", "argmax_node", "classification"])
        for r in report.rows:
            wr.writerow([r.beta, r.p, r.theta, r.level, r.a_tree, r.argmax_node, r.classification])


def parse_grid(text: str):
    """start:stop:step grid specification (stop inclusive up to rounding)."""
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ParameterError(f"bad grid spec {text!r}; expected start:stop:step") from exc
    if step <= 0:
        raise ParameterError("grid step must be positive")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(max(n, 1))]
