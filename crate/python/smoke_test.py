"""Smoke test for the `hmx` extension module.

Build and install first, e.g.  pip install ./crates/py  (needs maturin),
then run  python python/smoke_test.py
"""

import cmath
import random

import hmx


def main():
    mesh = hmx.Mesh(2)
    assert mesh.num_tets == 48
    assert abs(mesh.h - 3 ** 0.5 / 2) < 1e-15
    assert hmx.Mesh(1).num_dofs == 1

    system = hmx.System(3, kappa=complex(1.0, 0.5))
    n = len(system)
    a = system.stiffness()
    assert all(a[i][j] == a[j][i] for i in range(n) for j in range(n))
    x = [complex(random.uniform(-1, 1), random.uniform(-1, 1)) for _ in range(n)]
    ax = system.apply(x)
    dense = [sum(a[i][j] * x[j] for j in range(n)) for i in range(n)]
    assert max(abs(u - v) for u, v in zip(ax, dense)) < 1e-12

    inv = system.inverse()
    back = [sum(inv[i][j] * ax[j] for j in range(n)) for i in range(n)]
    assert max(abs(u - v) for u, v in zip(back, x)) < 1e-9

    sweep = hmx.System(5).rank_sweep(eta=4.0, n_leaf=32, ranks=[1, 2, 4, 8])
    errors = [row["rel_err"] for row in sweep["rows"]]
    assert all(b < a for a, b in zip(errors, errors[1:])), errors
    assert all(row["within_bound"] for row in sweep["rows"])
    assert sweep["far_blocks"] > 0

    rng = random.Random(1)
    m = [[complex(rng.uniform(-1, 1), rng.uniform(-1, 1)) for _ in range(9)] for _ in range(7)]
    err, sigma = hmx.block_truncation(m, 3)
    assert abs(err - sigma) < 1e-10

    tet = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.2, 0.3, 1.1]]
    assert hmx.commuting_residual(tet, degree=3, seed=4) < 1e-12

    defect, scaled = hmx.dual_basis_check(3)
    assert defect < 1e-12 and scaled > 0

    report = hmx.System(6).caccioppoli("curl")
    assert 0 < report["normalized"] < 1, report
    assert cmath.isfinite(complex(report["ratio"]))

    print("hmx", hmx.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
