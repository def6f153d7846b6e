"""Exact enumeration oracle for discrete-covariate datasets.

Writes the fixture CSVs under tests/data and prints the plug-in values that
test_estimators.cpp freezes. With saturated working models every fitted
quantity is a cell proportion or cell mean, so the estimators can be written
as sums over (cell, d, t) aggregates (count, sum y, sum y^2) without touching
individual rows. That is a different computation from the library's per-row
moment functions.

Run from the repository root:  python3 tests/oracles/discrete_oracle.py
"""

import json
import math
import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "data")

TRIM = 1e-3


def clip(v):
    return min(max(v, TRIM), 1 - TRIM)


def write_csv(path, rows, names):
    with open(path, "w") as f:
        f.write(",".join(["d", "t", "y"] + names) + "\n")
        for d, t, y, x in rows:
            f.write(",".join([str(d), str(t), repr(float(y))] + [repr(float(v)) for v in x]) + "\n")


def make_random(seed, cells, counts):
    """counts[c] = (n11, n10, n00) for cell c."""
    rng = np.random.default_rng(seed)
    rows = []
    for c, x in enumerate(cells):
        n11, n10, n00 = counts[c]
        mu0 = 0.5 + 0.7 * sum(x) + 0.3 * c
        for _ in range(n11):
            rows.append((1, 1, mu0 + 1.0 + 0.4 * x[0] + rng.normal(0, 1.2), x))
        for _ in range(n10):
            rows.append((1, 0, mu0 + rng.normal(0, 1.0), x))
        for _ in range(n00):
            rows.append((0, 0, mu0 + 0.2 * x[0] + rng.normal(0, 1.5), x))
    order = rng.permutation(len(rows))
    return [rows[i] for i in order]


def make_population(cells, counts, v1, ratio):
    """Every within-cell moment is exact: control outcomes come in +/- pairs."""
    rows = []
    for c, x in enumerate(cells):
        n11, n10, n00 = counts[c]
        mu0 = 1.0 + 0.5 * x[0] - 0.25 * x[1]
        mu1 = mu0 + 2.0 + x[1]
        for k in range(n11):
            rows.append((1, 1, mu1 + (1.0 if k % 2 == 0 else -1.0), x))
        s1 = math.sqrt(v1)
        s0 = math.sqrt(v1 / ratio)
        for k in range(n10):
            rows.append((1, 0, mu0 + (s1 if k % 2 == 0 else -s1), x))
        for k in range(n00):
            rows.append((0, 0, mu0 + (s0 if k % 2 == 0 else -s0), x))
    return rows


def aggregates(rows):
    agg = {}
    for d, t, y, x in rows:
        key = (tuple(x), d, t)
        n, s, q = agg.get(key, (0, 0.0, 0.0))
        agg[key] = (n + 1, s + y, q + y * y)
    return agg


def oracle(rows, b=None):
    agg = aggregates(rows)
    cells = sorted({k[0] for k in agg})
    n = sum(v[0] for v in agg.values())
    n1 = sum(v[0] for k, v in agg.items() if k[1] == 1)
    q = n1 / n

    def get(x, d, t):
        return agg.get((x, d, t), (0, 0.0, 0.0))

    def rsum(a, m):
        cnt, s, qq = a
        return s - cnt * m, qq - 2 * m * s + cnt * m * m  # sum R, sum R^2

    fit = {}
    for x in cells:
        a11, a10, a00 = get(x, 1, 1), get(x, 1, 0), get(x, 0, 0)
        m1 = a11[1] / a11[0]
        m0p = (a10[1] + a00[1]) / (a10[0] + a00[0])
        m0t = a10[1] / a10[0]
        p = clip(a11[0] / (a11[0] + a10[0]))
        nx = a11[0] + a10[0] + a00[0]
        pi = clip((a11[0] + a10[0]) / nx)
        fit[x] = dict(m1=m1, m0p=m0p, m0t=m0t, p=p, pi=pi, nx=nx, a11=a11, a10=a10, a00=a00)

    # constant variance ratio from pooled-m0 residuals
    ss1 = sum(rsum(f["a10"], f["m0p"])[1] for f in fit.values())
    c1 = sum(f["a10"][0] for f in fit.values())
    ss0 = sum(rsum(f["a00"], f["m0p"])[1] for f in fit.values())
    c0 = sum(f["a00"][0] for f in fit.values())
    r = (ss1 / c1) / (ss0 / c0)
    v1 = ss1 / c1

    def full(rr, key):
        tau_s = psi_s = xi_s = 0.0
        parts = {}
        for x, f in fit.items():
            m0 = f[key]
            pi, p = f["pi"], f["p"]
            den = pi * (1 - p) + (1 - pi) * rr
            w10, w00 = pi / den, pi * rr / den
            delta = f["m1"] - m0
            sr1, _ = rsum(f["a11"], f["m1"])
            sr10, _ = rsum(f["a10"], m0)
            sr00, _ = rsum(f["a00"], m0)
            A = sr1 / p - w10 * sr10 - w00 * sr00
            n1x = f["a11"][0] + f["a10"][0]
            tau_s += n1x * delta + A
            psi_s += f["nx"] * delta + A / pi
            xi_s += f["a00"][0] * delta + (1 - pi) / pi * A
            parts[x] = (delta, w10, w00, m0)
        return tau_s / n / q, psi_s / n, xi_s / n / (1 - q), parts

    tau_f, psi_f, xi_f, parts_f = full(r, "m0p")
    _, psi_b, xi_b, _ = full(0.0, "m0t")

    # trial-based tau
    s = 0.0
    for f in fit.values():
        delta = f["m1"] - f["m0t"]
        sr1, _ = rsum(f["a11"], f["m1"])
        sr10, _ = rsum(f["a10"], f["m0t"])
        s += (f["a11"][0] + f["a10"][0]) * delta + sr1 / f["p"] - sr10 / (1 - f["p"])
    tau_t = s / n1

    # plug-in bounds: mean IF^2 from per-cell sums of squares
    def sq(a, m, c0_, c1_):
        """sum over rows of (c0 + c1 * (y - m))^2"""
        cnt = a[0]
        sr, sr2 = rsum(a, m)
        return cnt * c0_ * c0_ + 2 * c0_ * c1_ * sr + c1_ * c1_ * sr2

    bf = 0.0
    for x, f in fit.items():
        delta, w10, w00, m0 = parts_f[x]
        e = delta - tau_f
        bf += sq(f["a11"], f["m1"], e, 1 / f["p"])
        bf += sq(f["a10"], m0, e, -w10)
        bf += sq(f["a00"], m0, 0.0, -w00)
    bf /= n * q * q

    bt = 0.0
    for f in fit.values():
        e = f["m1"] - f["m0t"] - tau_t
        bt += sq(f["a11"], f["m1"], e, 1 / f["p"])
        bt += sq(f["a10"], f["m0t"], e, -1 / (1 - f["p"]))
    bt /= n * q * q

    out = dict(tau_full=tau_f, tau_trial=tau_t, psi_full=psi_f, psi_trial=psi_b, xi_full=xi_f,
               xi_trial=xi_b, bound_full=bf, bound_trial=bt, ratio=r, v1=v1, q=q)

    # population gain: B_trial - B_full by enumeration of the cell formula
    g = 0.0
    for f in fit.values():
        pi, p = f["pi"], f["p"]
        den = pi * (1 - p) + (1 - pi) * r
        g += f["nx"] * pi * v1 * (1 / (1 - p) - pi / den)
    out["gain_enumerated"] = g / n / q / q

    if b is not None:
        lam = 0.0
        for x, f in fit.items():
            pi, p = f["pi"], f["p"]
            den = pi * (1 - p) + (1 - pi) * r
            lam += f["nx"] * (pi / q) * ((1 - pi) * r / den) * b(x)
        out["lambda"] = lam / n
    return out


def main():
    four = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
    three = [(0.0,), (1.0,), (2.0,)]
    two = [(0.0,), (1.0,)]

    a = make_random(11, four, [(14, 9, 20), (8, 12, 25), (17, 6, 9), (11, 10, 16)])
    bfun = lambda x: 0.3 + 0.5 * x[0] - 0.2 * x[1]
    bdata = make_random(12, three, [(10, 12, 30), (15, 8, 14), (9, 9, 6)])
    cdata = make_random(13, two, [(20, 14, 25), (12, 18, 40)])
    pop = make_population(four, [(10, 8, 12), (6, 10, 20), (12, 4, 6), (8, 8, 14)], v1=1.7, ratio=2.5)

    write_csv(os.path.join(DATA, "discrete_a.csv"), a, ["x1", "x2"])
    write_csv(os.path.join(DATA, "discrete_b.csv"), bdata, ["x1"])
    write_csv(os.path.join(DATA, "discrete_c.csv"), cdata, ["x1"])
    write_csv(os.path.join(DATA, "discrete_population.csv"), pop, ["x1", "x2"])

    res = {
        "discrete_a": oracle(a, bfun),
        "discrete_b": oracle(bdata),
        "discrete_c": oracle(cdata),
        "discrete_population": oracle(pop),
    }
    print(json.dumps(res, indent=2))


if __name__ == "__main__":
    main()
