"""Smoke test for the qmem extension module.

Build and install first, e.g.

    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/qmem-*.whl
"""

import math

import qmem


def main():
    m = qmem.ModelParams(100, 0.2, 0.05)
    assert m.correction_budget() == 5, m
    assert m.to_dict()["noise"] == "erasure"

    t, delta = qmem.epochs_to_cross(0.2, 0.05, 0.5)
    assert (t, delta) == (9, 0.05), (t, delta)

    x = 0.0
    for _ in range(t):
        x = x + (100 - x) * (0.2 - delta) - 5
    assert abs(qmem.mf_iterate(100, 0.2, 0.05, delta, t) - x) < 1e-9

    exact = qmem.exact_tail(m, 50)
    mc = qmem.simulate(m, 20000, 50, seed=1)
    for t_, (e, p_hat) in enumerate(zip(exact, mc["p_hat_by_t"])):
        se = math.sqrt(e * (1 - e) / 20000)
        assert abs(p_hat - e) <= 4 * se + 1e-12, (t_, e, p_hat)
    assert qmem.simulate(qmem.ModelParams(100, 0.0, 0.05), 100, 10)["p_hat_by_t"] == [0.0] * 11

    dist = qmem.exact_distribution(m, 5)
    assert abs(sum(dist) - 1) < 1e-12 and len(dist) == 101

    r = qmem.overhead_bound(1000, 0.2, 0.15, 1e-6)
    assert abs(r["n_min"]["value"] - 2000) < 0.01, r["n_min"]
    r = qmem.overhead_bound(1000, 0.2, 0.05, 0.1)
    assert r["n_min"]["kind"] == "impossible"

    assert qmem.capacity("erasure", 0.5) == 0.0
    assert abs(qmem.capacity("hashing", 0.1) - 0.4968162683194163) < 1e-12
    k = qmem.kappa_surface(10.0, 0.001, alpha=0.05)
    assert abs(k["alpha_min"] - (1 - math.exp(-0.01)) / 2) < 1e-15

    c = qmem.run_coupled(qmem.ModelParams(50, 0.2, 0.05), 0.01, 0.05, 500, 20, seed=3)
    assert c["inclusion_violations"] == 0
    u = qmem.uniformity_check(qmem.ModelParams(30, 0.2, 0.05), 2000, 20, seed=3)
    assert u["p_value"] > 1e-3, u["p_value"]
    assert qmem.check_h_monotone(qmem.ModelParams(20, 0.5, 0.1), 2) == []

    try:
        qmem.ModelParams(10, 1.5, 0.1)
    except ValueError as e:
        assert "p" in str(e)
    else:
        raise AssertionError("invalid p accepted")

    print("qmem smoke test passed")


if __name__ == "__main__":
    main()
