"""Smoke test for the mecalloc extension module.

Build and run from the repository root:

    cargo build --release -p mecalloc-py
    cp target/release/libmecalloc.so crates/py/python/mecalloc.so
    python3 crates/py/python/smoke_test.py
"""

import json
import math

import mecalloc


def main():
    s = mecalloc.generate(seed=42)
    assert (s.num_users, s.num_aps) == (8, 4)
    again = mecalloc.Scenario.from_json(s.to_json())
    assert again.gains == s.gains

    init = mecalloc.initialize(s, "equal", 0)
    assert all(abs(v - 0.375e6) < 1e-6 for row in init for v in row)

    sol = mecalloc.solve_iterative(s, init="equal", eps_mj=1e-2)
    assert sol.converged
    e = sol.outer_energies_j
    assert all(b <= a for a, b in zip(e, e[1:]))

    binary = mecalloc.solve_fixed_assignment(s)
    m = mecalloc.evaluate(s, binary)
    assert m["max_load_share_per_user"] == [1.0] * 8
    assert m["multi_ap_user_count"] == 0
    assert max(m["constraint_residuals"].values()) < 1e-6

    from_binary = mecalloc.solve_iterative(s, init="binary")
    assert from_binary.energy_j <= binary.energy_j * (1 + 1e-9)

    gain, clamped = mecalloc.pathloss_gain(100.0)
    assert abs(gain / 10 ** -10.4 - 1) < 1e-12 and not clamped

    # t = 0.05 s, exponent 20: 0.1·0.05·(2^20 − 1)
    assert math.isclose(mecalloc.pair_energy(0.1, 0.1, 1.0, 0.1, 0.5, 1.0), 5242.875, rel_tol=1e-12)
    d_l, d_x, d_t = mecalloc.partials(1.5e6, 5e6, 0.3, 0.5, 1e3, 4e-11)
    assert d_l > 0 and d_x < 0 and d_t < 0
    _, det = mecalloc.hessian("xt", 1.5e6, 5e6, 1.25e10, 0.5, 1e3, 4e-11)
    assert det > 0

    try:
        mecalloc.solve_fixed_equal(mecalloc.generate(seed=42, capacity_cps=1e9))
    except mecalloc.InfeasibleError as exc:
        print("infeasible as expected:", exc)
    else:
        raise AssertionError("expected InfeasibleError")

    print(sol)
    print(json.dumps({"iterative_mj": sol.energy_mj, "binary_mj": binary.energy_mj}))
    print("smoke test passed")


if __name__ == "__main__":
    main()
