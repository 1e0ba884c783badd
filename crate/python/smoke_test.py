"""Smoke test for the pykoebe extension.

Build and install first:
    maturin develop --release -m crates/python/Cargo.toml
"""

import json
import math

import pykoebe as pk


def main():
    f = pk.RationalMap([0, 0, 1])
    assert f.degree == 2
    assert f(2) == 4
    assert f(None) is None
    pre = sorted(f.preimages(4), key=lambda z: z.real)
    assert abs(pre[0] + 2) < 1e-12 and abs(pre[1] - 2) < 1e-12

    basilica = pk.RationalMap.corpus("z^2-1")
    verdict = basilica.classify_postcritical()[0]["verdict"]
    assert verdict["kind"] == "attracted" and verdict["period"] == 2

    circle = pk.JordanPolyline.circle(0, 1.0, 512)
    k = circle.turning_constant()["K_estimate"]
    assert abs(k - 1) < 1e-9, k
    tau = circle.fatness()["tau_estimate"]
    assert abs(tau - 0.25) < 0.02, tau

    square = pk.JordanPolyline.square(0, 1.0, 256)
    assert abs(square.turning_constant()["K_estimate"] - (1 + math.sqrt(5)) / 2 / math.sqrt(2)) < 1e-2

    assert abs(pk.turning([0, 1, 1j], 0, 1) - math.sqrt(2)) < 1e-12

    out = pk.koebe_uniformize(
        [pk.JordanPolyline.circle(-2, 1.0, 256), pk.JordanPolyline.circle(2, 0.5, 256)], tol=1e-10
    )
    assert len(out["domain"]["circles"]) == 2
    assert out["history"][-1] < 1e-10

    forest = pk.build_puzzle(pk.RationalMap.corpus("z^2+5"), 3)
    assert [sum(1 for p in forest["forest"]["pieces"] if p["depth"] == d) for d in range(4)] == [1, 2, 4, 8]

    cfg = json.loads(pk.default_config(pk.RationalMap.corpus("z^2"), 4))
    report = pk.run_pipeline(json.dumps(cfg))
    assert report["schema"] == "koebe-fatou/1"
    assert report["uniformization"]["status"] == "ok"

    try:
        pk.RationalMap([1])
    except ValueError:
        pass
    else:
        raise AssertionError("degree-0 map accepted")

    print("pykoebe smoke test passed")


if __name__ == "__main__":
    main()
