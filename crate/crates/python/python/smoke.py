"""Smoke test for the copsense_py extension module.

Build the module and put it on the path first, for example:

    cargo build --release -p copsense-py --features extension-module
    cp target/release/libcopsense_py.so crates/python/python/copsense_py.so
    python3 crates/python/python/smoke.py
"""

import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import copsense_py as cs


def main():
    inst = cs.Instance.comb(1, 0.5, v=2, p=1.0)
    status, z, x = inst.solve()
    assert status == "Optimal", status
    print(inst, "z =", z)

    cert = cs.closed_form(inst, z)
    assert cert.verified, cert.verdict
    assert abs(cert.predict() - cert.objective) < 1e-12
    assert cert.objective <= z + 1e-9
    print(cert)

    row = inst.constraint_row(0)
    delta = [0.0] * inst.num_rows
    delta[row] = 1.0
    fitted = cs.fit(inst, [0] * inst.num_rows)
    assert fitted.predict() <= z + 1e-4
    worse = fitted.perturb(inst, row)
    drop = fitted.predict(delta) - worse.predict(delta)
    assert abs(drop - 1.0) < 1e-9, drop
    assert abs(worse.objective - fitted.objective) < 1e-9

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "cert.json")
        cert.write(path)
        again = cs.Certificate.read(path)
        assert abs(again.objective - cert.objective) < 1e-12

        ipath = os.path.join(d, "inst.json")
        inst.write(ipath)
        assert cs.Instance.read(ipath).num_vars == inst.num_vars

    shor = cs.shor(inst)
    assert shor.predict() <= z + 1e-4
    print("Shor1 bound", shor.predict())

    assert cs.check_copositive([[1.0, 0.0], [0.0, 1.0]]) == "Copositive"
    assert cs.check_copositive([[1.0, -2.0], [-2.0, 1.0]], method="refute") == "NotCopositive"
    assert cs.select_weights([3]) == ([3.5], [3.0])

    k4 = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    assert cs.chromatic_index(4, k4) == (3, 3)

    try:
        cs.Instance.read("/nonexistent/instance.json")
    except OSError:
        pass
    else:
        raise AssertionError("missing file did not raise")

    print("smoke test passed")


if __name__ == "__main__":
    main()
