import math

import numpy as np
import pytest

from conftest import oracle_a_tree
from whardy import hardy as hd
from whardy import treecover as tc
from whardy.errors import ParameterError, StructureError


def random_tree(rng, max_nodes=60):
    n = int(rng.integers(2, max_nodes + 1))
    parent = np.full(n, -1)
    for t in range(1, n):
        parent[t] = rng.integers(0, t)
    ell = 2.0 ** (-rng.integers(0, 6, size=n).astype(float))
    return parent, ell


def test_two_node_unit_weights():
    tree = tc.synthetic_tree([-1, 0], [1.0, 1.0])
    val, arg = hd.a_tree(tree, hd.WeightSpec(0.0, 2.0), 2.0)
    assert val == pytest.approx(1.0, abs=1e-15)
    assert arg == 1


def test_oracle_equivalence_small():
    rng = np.random.default_rng(0)
    for _ in range(10):
        parent, ell = random_tree(rng)
        beta = rng.uniform(-0.8, 0.5)
        p = rng.uniform(1.3, 3.0)
        theta = rng.uniform(1.05, 4.0)
        tree = tc.synthetic_tree(parent, ell)
        got, _ = hd.a_tree(tree, hd.WeightSpec(beta, p), theta)
        want, _ = oracle_a_tree(parent, ell, beta, p, theta)
        assert got == pytest.approx(want, rel=1e-10)


def test_a_tree_theta_validation(square_tree6):
    with pytest.raises(ParameterError):
        hd.a_tree(square_tree6, hd.WeightSpec(0.0, 2.0), 1.0)
    with pytest.raises(ParameterError):
        hd.WeightSpec(0.0, 1.0)
    with pytest.raises(ParameterError):
        hd.WeightSpec(0.0, 2.0, theta_grid=(0.9,))


def test_weight_spec_conjugate():
    w = hd.WeightSpec(-0.2, 3.0)
    assert 1 / w.p + 1 / w.q == pytest.approx(1.0, abs=1e-12)


def test_a_chain_four_node_path():
    tree = tc.synthetic_tree([-1, 0, 1, 2], [1.0, 1.0, 1.0, 1.0])
    val = hd.a_chain(tree, hd.WeightSpec(0.0, 2.0))
    assert val == pytest.approx(math.sqrt(6.0), abs=1e-12)


def test_a_chain_degenerate_and_errors(square_tree6):
    single = tc.synthetic_tree([-1], [1.0])
    assert hd.a_chain(single, hd.WeightSpec(0.0, 2.0)) == 0.0
    with pytest.raises(StructureError):
        hd.a_chain(square_tree6, hd.WeightSpec(0.0, 2.0))


def test_snake_chain_bound():
    w = hd.WeightSpec(0.0, 2.0)
    for m in (2, 3, 5):
        ch = tc.build_cube_chain(m, 2)
        val = hd.a_chain(ch, w)
        assert val <= m**2 + 1e-12
    # the counting bound itself is exactly m^n
    m = 5
    ch = tc.build_cube_chain(m, 2)
    q = w.q
    bound = len(ch) ** (1 / q) * len(ch) ** (1 / w.p)
    assert bound == pytest.approx(m**2, abs=1e-12)


def test_tree_le_chain_relation():
    w = hd.WeightSpec(0.0, 2.0)
    ch = tc.build_cube_chain(4, 2)
    ac = hd.a_chain(ch, w)
    for theta in hd.DEFAULT_THETA_GRID:
        at, _ = hd.a_tree(ch, w, theta)
        assert at <= theta ** (1 / w.p) * ac + 1e-12


def test_scale_invariance():
    rng = np.random.default_rng(5)
    parent, ell = random_tree(rng, 40)
    w = hd.WeightSpec(-0.4, 2.5)
    # measure the rescaling factor on a two-node tree, then assert globally
    t2a = tc.synthetic_tree([-1, 0], [1.0, 0.5])
    t2b = tc.synthetic_tree([-1, 0], [2.0, 1.0])
    fa, _ = hd.a_tree(t2a, w, 1.5)
    fb, _ = hd.a_tree(t2b, w, 1.5)
    factor = fb / fa
    va, _ = hd.a_tree(tc.synthetic_tree(parent, ell), w, 1.5)
    vb, _ = hd.a_tree(tc.synthetic_tree(parent, 2.0 * ell), w, 1.5)
    assert vb == pytest.approx(factor * va, rel=1e-9)


def oracle_a_tree_log(parent, ell, beta, p, theta, ndim=2):
    """Log-domain exhaustive oracle for extreme weight magnitudes."""
    n = len(parent)
    q = p / (p - 1)
    logb = [ndim * math.log(l) for l in ell]
    lognu = [beta * math.log(l) for l in ell]

    def path(t):
        out = []
        while parent[t] >= 0:
            out.append(t)
            t = parent[t]
        return out

    def logsum(vals):
        m = max(vals)
        return m + math.log(sum(math.exp(v - m) for v in vals))

    anc = {t: path(t) for t in range(n)}
    root = next(t for t in range(n) if parent[t] < 0)
    best = -math.inf
    for t in range(n):
        if t == root:
            continue
        logS = logsum([(-q / p) * logb[s] - q * lognu[s] for s in anc[t]])
        shadow = [s for s in range(n) if t in anc[s] or s == t]
        terms = []
        for s in shadow:
            logSs = logsum([(-q / p) * logb[r] - q * lognu[r] for r in anc[s]])
            terms.append(logb[s] + p * lognu[s] + (p / q) * (1 - 1 / theta) * logSs)
        logT = logsum(terms)
        best = max(best, logS / (theta * q) + logT / p)
    return best


def test_log_space_fallback():
    # intermediate sums underflow/overflow past 1e+-250; the evaluation must
    # switch to log space and still match the exhaustive log-domain oracle
    n = 12
    parent = [-1] + list(range(n - 1))
    ell = [2.0 ** (-k) for k in range(n)]
    tree = tc.synthetic_tree(parent, ell)
    w = hd.WeightSpec(-40.0, 2.0)
    val, arg = hd.a_tree(tree, w, 1.5)
    want = oracle_a_tree_log(parent, ell, -40.0, 2.0, 1.5)
    assert math.log(val) == pytest.approx(want, rel=1e-10)
    assert 0 <= arg < n


def test_a_tree_min_report(square_tree6):
    w = hd.WeightSpec(-0.3, 2.0)
    rep = hd.a_tree_min(square_tree6, w)
    assert set(rep.per_theta) == set(hd.DEFAULT_THETA_GRID)
    assert rep.a_tree_min == min(v for v, _ in rep.per_theta.values())
    assert rep.per_theta[rep.best_theta][0] == rep.a_tree_min


def test_beta_sweep_classification(unit_square):
    rep = hd.beta_sweep(unit_square, 2.0, [-0.3, -0.7], [5, 6, 7])
    assert rep.classification[-0.3]["class"] == "convergent"
    assert rep.classification[-0.7]["class"] == "divergent"
    # below the admissible range the constant is nondecreasing in the level
    vals = rep.classification[-0.7]["values"]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_beta_zero_finite_all_presets():
    from whardy import geometry as geo
    from whardy.treecover import build_tree, root_center
    from whardy.whitney import whitney_decompose

    w = hd.WeightSpec(0.0, 2.0)
    for preset, kw in [
        ("unit_square", {}),
        ("l_shape", {}),
        ("slit_square", {}),
        ("koch_prefractal", {"level": 2}),
    ]:
        dom = geo.make_domain(preset, **kw)
        dec = whitney_decompose(dom, 5)
        tree = build_tree(dec, root_center(dec, geo.centroid(dom)))
        rep = hd.a_tree_min(tree, w)
        assert math.isfinite(rep.a_tree_min)


def test_parse_grid():
    assert hd.parse_grid("-0.5:0.1:0.2") == pytest.approx([-0.5, -0.3, -0.1, 0.1])
    with pytest.raises(ParameterError):
        hd.parse_grid("1:2")
    with pytest.raises(ParameterError):
        hd.parse_grid("0:1:-0.5")


def test_sweep_csv(tmp_path, unit_square):
    rep = hd.beta_sweep(unit_square, 2.0, [0.0], [4, 5])
    path = tmp_path / "sweep.csv"
    hd.write_sweep_csv(rep, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("beta,p,theta,level,A_tree")
    assert len(lines) == 3


def test_levels_must_increase(unit_square):
    with pytest.raises(ParameterError):
        hd.beta_sweep(unit_square, 2.0, [0.0], [5, 4])
