import numpy as np
import pytest

from whardy import decomp, geometry, treecover, whitney


@pytest.fixture(scope="session")
def unit_square():
    return geometry.make_domain("unit_square")


@pytest.fixture(scope="session")
def l_shape():
    return geometry.make_domain("l_shape")


@pytest.fixture(scope="session")
def slit_square():
    return geometry.make_domain("slit_square")


@pytest.fixture(scope="session")
def koch2():
    return geometry.make_domain("koch_prefractal", level=2)


@pytest.fixture(scope="session")
def koch3():
    return geometry.make_domain("koch_prefractal", level=3)


@pytest.fixture(scope="session")
def square_decs(unit_square):
    return {lv: whitney.whitney_decompose(unit_square, lv) for lv in (5, 6, 7)}


@pytest.fixture(scope="session")
def square_trees(square_decs):
    return {lv: treecover.build_tree(dec, (0.5, 0.5)) for lv, dec in square_decs.items()}


@pytest.fixture(scope="session")
def square_dec6(square_decs):
    return square_decs[6]


@pytest.fixture(scope="session")
def square_tree6(square_trees):
    return square_trees[6]


def random_mean_zero(tree, grid, seed):
    """Random values on the covered cells, exactly mean-zero there."""
    assign = decomp.assign_cells(tree, grid)
    rng = np.random.default_rng(seed)
    cov = assign >= 0
    vals = np.where(cov, rng.standard_normal(grid.dims), 0.0)
    vals[cov] -= vals[cov].mean()
    return grid.with_values(vals)


def collar_probe(tree, grid):
    """Mean-zeroed indicator of the finest-level cubes: pushes transfer mass
    through boundary cubes at the truncation scale."""
    assign = decomp.assign_cells(tree, grid)
    fine = np.where(tree.level == tree.level.max())[0]
    cov = assign >= 0
    vals = np.where(np.isin(assign, fine), 1.0, 0.0)
    vals[~cov] = 0.0
    vals[cov] -= vals[cov].mean()
    return grid.with_values(vals)


def oracle_a_tree(parent, ell, beta, p, theta, ndim=2):
    """Exhaustive path/shadow enumeration of the tree Hardy constant."""
    n = len(parent)
    q = p / (p - 1)
    b = np.asarray(ell) ** ndim
    nu = np.asarray(ell) ** beta

    def path(t):
        out = []
        while parent[t] >= 0:
            out.append(t)
            t = parent[t]
        return out

    anc = {t: set(path(t)) for t in range(n)}
    root = next(t for t in range(n) if parent[t] < 0)
    best, arg = 0.0, root
    for t in range(n):
        if t == root:
            continue
        S = sum(b[s] ** (-q / p) * nu[s] ** (-q) for s in anc[t])
        shadow = [s for s in range(n) if t in anc[s] or s == t]
        T = 0.0
        for s in shadow:
            Ss = sum(b[r] ** (-q / p) * nu[r] ** (-q) for r in anc[s])
            T += b[s] * nu[s] ** p * Ss ** ((p / q) * (1 - 1 / theta))
        v = S ** (1 / (theta * q)) * T ** (1 / p)
        if v > best:
            best, arg = v, t
    return best, arg
