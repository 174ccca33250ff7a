"""Smoke test for the compiled `nambu` extension.

Build it first, e.g. `maturin develop --release -m crates/python/Cargo.toml`.
"""

import math
import pathlib
import sys

import nambu

ROOT = pathlib.Path(__file__).resolve().parent.parent


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    report = nambu.invariants("sphere2", "z + 0.5", resolution=[128, 256])
    assert len(report["components"]) == 1
    assert close(report["components"][0]["period"], 2 * math.pi, 1e-2)
    assert close(report["volume"], 2 * math.pi * math.log(3), 2e-2)
    assert report["h2"]["dimension"] == 2

    v = nambu.regularized_volume("torus2", "sin(2*pi*x)", resolution=[64, 64])
    assert abs(v) < 1e-3

    assert nambu.equivalence("sphere2", "z", "-z", resolution=[64, 128]) == "equivalent_orientation_preserving"
    assert [nambu.count_signed_trees(k) for k in range(1, 5)] == [1, 2, 3, 6]

    _, _, residual = nambu.linearize("r + 0.3*r^2")
    assert residual < 1e-6
    r, g, _ = nambu.linearize("r*(1+r)", k=2.0, samples=401)
    assert all(close(gi, 2 * ri / (1 + ri), 1e-8) for ri, gi in zip(r, g))

    doc = nambu.run_scenario(str(ROOT / "scenarios" / "equator.toml"))
    assert doc["canonical_code"] == "+(1000:-())"

    for bad in [lambda: nambu.invariants("sphere2", "x", resolution=[64, 128]),
                lambda: nambu.invariants("torus2", "z"),
                lambda: nambu.count_signed_trees(0)]:
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")
    try:
        nambu.regularized_volume("sphere2", "z + 0.5", resolution=[64, 128], tol_volume=1e-9)
    except ArithmeticError:
        pass
    else:
        raise AssertionError("expected ArithmeticError")
    print("python smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
