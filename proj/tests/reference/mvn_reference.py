#!/usr/bin/env python3
"""Independent numpy/scipy reference for the multivariate normality tests.

Writes three frozen fixtures into tests/fixtures/:
  mvn_<name>.csv           samples (header x1..xq)
  mvn_<name>_expected.json statistics and p-values

Run from the repository root:  python3 tests/reference/mvn_reference.py
"""
import json
import pathlib

import numpy as np
from scipy import stats

OUT = pathlib.Path(__file__).resolve().parents[1] / "fixtures"


def mardia(x):
    n, q = x.shape
    z = x - x.mean(axis=0)
    s = z.T @ z / n
    d = z @ np.linalg.solve(s, z.T)
    b1 = (d**3).sum() / n**2
    b2 = (np.diag(d) ** 2).sum() / n
    skew = n * b1 / 6.0
    df = q * (q + 1) * (q + 2) / 6.0
    kurt = (b2 - q * (q + 2) * (n - 1) / (n + 1)) / np.sqrt(8.0 * q * (q + 2) / n)
    return {
        "skewness": {"stat": skew, "p_value": stats.chi2.sf(skew, df)},
        "kurtosis": {"stat": kurt, "p_value": 2.0 * stats.norm.sf(abs(kurt))},
    }


def henze_zirkler(x):
    n, q = x.shape
    z = x - x.mean(axis=0)
    s = z.T @ z / n
    sinv = np.linalg.inv(s)
    beta = (n * (2 * q + 1) / 4.0) ** (1.0 / (q + 4)) / np.sqrt(2.0)
    b2 = beta**2
    dj = np.einsum("ij,jk,ik->i", z, sinv, z)
    diff = z[:, None, :] - z[None, :, :]
    djk = np.einsum("abi,ij,abj->ab", diff, sinv, diff)
    hz = n * (
        np.exp(-b2 / 2 * djk).sum() / n**2
        - 2 * (1 + b2) ** (-q / 2) * np.exp(-b2 / (2 * (1 + b2)) * dj).sum() / n
        + (1 + 2 * b2) ** (-q / 2)
    )
    a = 1 + 2 * b2
    wb = (1 + b2) * (1 + 3 * b2)
    mu = 1 - a ** (-q / 2) * (1 + q * b2 / a + q * (q + 2) * b2**2 / (2 * a**2))
    si2 = (
        2 * (1 + 4 * b2) ** (-q / 2)
        + 2 * a ** (-q) * (1 + 2 * q * b2**2 / a**2 + 3 * q * (q + 2) * b2**4 / (4 * a**4))
        - 4 * wb ** (-q / 2) * (1 + 3 * q * b2**2 / (2 * wb) + q * (q + 2) * b2**4 / (2 * wb**2))
    )
    pmu = np.log(np.sqrt(mu**4 / (si2 + mu**2)))
    psi = np.sqrt(np.log((si2 + mu**2) / mu**2))
    return {"stat": hz, "p_value": stats.lognorm.sf(hz, psi, scale=np.exp(pmu))}


def royston(x):
    n, q = x.shape
    res = []
    for j in range(q):
        p = stats.shapiro(x[:, j]).pvalue
        res.append(stats.norm.ppf(p / 2.0) ** 2)
    if q == 1:
        edf = 1.0
    else:
        r = np.corrcoef(x, rowvar=False)
        ln = np.log(n)
        u = 0.715
        v = 0.21364 + 0.015124 * ln**2 - 0.0018034 * ln**3
        off = ~np.eye(q, dtype=bool)
        c = r**5 * (1 - u * (1 - r) ** u / v)
        mc = c[off].sum() / (q * q - q)
        edf = q / (1 + (q - 1) * mc)
    h = edf * sum(res) / q
    return {"stat": h, "p_value": stats.chi2.sf(h, edf)}


def fixtures():
    rng = np.random.default_rng(20240531)
    small = rng.normal(size=(20, 2)) @ np.array([[1.0, 0.3], [0.0, 0.8]]) + np.array([0.5, -1.0])
    skewed = np.column_stack([rng.exponential(size=60), rng.normal(size=60), rng.gamma(2.0, size=60)])
    cov = np.array([[1.0, 0.4, 0.1, 0.0], [0.4, 1.0, 0.2, 0.1], [0.1, 0.2, 1.0, -0.3], [0.0, 0.1, -0.3, 1.0]])
    mvn = rng.multivariate_normal(np.zeros(4), cov, size=120)
    return {"n20_q2": small, "n60_q3_skewed": skewed, "n120_q4": mvn}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, x in fixtures().items():
        n, q = x.shape
        header = ",".join(f"x{j + 1}" for j in range(q))
        np.savetxt(OUT / f"mvn_{name}.csv", x, delimiter=",", header=header, comments="", fmt="%.17g")
        # reload so the expected values refer to the exact stored doubles
        x = np.loadtxt(OUT / f"mvn_{name}.csv", delimiter=",", skiprows=1, ndmin=2)
        m = mardia(x)
        expected = {
            "n": n,
            "q": q,
            "mardia_skewness": m["skewness"],
            "mardia_kurtosis": m["kurtosis"],
            "henze_zirkler": henze_zirkler(x),
            "royston": royston(x),
            "shapiro_wilk": [
                {"stat": float(r.statistic), "p_value": float(r.pvalue)} for r in (stats.shapiro(x[:, j]) for j in range(q))
            ],
        }
        with open(OUT / f"mvn_{name}_expected.json", "w") as fh:
            json.dump(expected, fh, indent=2, default=float)
            fh.write("\n")
        print(name, json.dumps(expected, default=float))


if __name__ == "__main__":
    main()
