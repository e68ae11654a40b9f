"""Smoke test for the pyoscnet extension module.

Build and install first:

    pip install --no-build-isolation -e crates/python
    python python/smoke_test.py
"""

import math

import pyoscnet

NET_A = """\
param omega0 1.0
node n1
node n2
node n3
node n4
osc o1 n1 n3
osc o2 n2 n4
res r1 n1 n2 1
res r2 n3 n4 3
"""


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    net = pyoscnet.Network.parse(NET_A, strict=True)
    assert (net.n, net.q, net.omega0) == (4, 2, 1.0)
    assert pyoscnet.Network.parse(net.render()).render() == net.render()

    report = pyoscnet.analyze(net)
    assert report["verdict"]["decision"] == "synchronous"
    eigs = sorted(complex(z["re"], z["im"]).real for z in report["spectrum"]["eigenvalues"])
    assert close(eigs[0], 0.0) and close(eigs[1], 1.5)

    y = pyoscnet.effective_laplacian(net)
    assert close(y[0][0], 0.75) and close(y[0][1], -0.75)

    ps = pyoscnet.parallel_sum([[1, -1], [-1, 1]], [[3, -3], [-3, 3]])
    assert all(close(ps[i][j], y[i][j]) for i in range(2) for j in range(2))

    g = [[1, -1, 0, 0], [-1, 1, 0, 0], [0, 0, 3, -3], [0, 0, -3, 3]]
    aat = [[1, 0, -1, 0], [0, 1, 0, -1], [-1, 0, 1, 0], [0, -1, 0, 1]]
    lam = pyoscnet.reig(g, aat)
    assert len(lam) == 2 and close(abs(lam[0]), 0.0, 1e-8) and close(lam[1], 1.5, 1e-8)

    tanks = pyoscnet.Network.four_tank(4.0)
    r4 = pyoscnet.analyze(tanks)
    assert r4["verdict"]["decision"] == "not_synchronous"
    assert close(r4["witness"]["omega"], math.sqrt(7.0))
    on_axis = [complex(z["re"], z["im"]) for z in r4["spectrum"]["eigenvalues"]]
    assert any(abs(z - 6j) < 1e-6 for z in on_axis)

    sim = pyoscnet.simulate(net, ic="sync", t_end=40.0, dt=0.01)
    assert sim["sync"]["metric"] < 1e-9
    k = 1000
    assert close(sim["v"][k][0], math.sin(sim["t"][k]), 1e-9)
    assert all(b <= a * (1 + 1e-10) for a, b in zip(sim["W"], sim["W"][1:]))

    try:
        pyoscnet.Network.parse("osc o1 a b\n", strict=True)
    except pyoscnet.OscnetError as e:
        assert "a" in str(e)
    else:
        raise AssertionError("strict parse accepted an undeclared node")

    print("pyoscnet smoke test passed")


if __name__ == "__main__":
    main()
