"""Independent reference values, frozen into frozen.json.

Run once with ``python3 tests/oracles/derive_oracles.py``; the tests only
read the JSON.  Nothing here imports the package under test.

* Series: models whose forcing depends on a single angle t reduce to
  beta' = B, B' = eps a(t) sin(beta).  The order-by-order expansion is done
  symbolically in the time domain (sympy derivatives in eps, integrals in t),
  a route unrelated to the Fourier-space recursion of the package.
* Divisors: brute-force scan of the l1 ball in exact-enough mpmath arithmetic.
"""
import json
from pathlib import Path

import mpmath as mp
import sympy as sp

t, eps, b0 = sp.symbols("t epsilon beta0", real=True)
K = 3
BETA0 = [0.3, 1.1, 2.5]
MODES = range(-3, 4)


def expand_model(a):
    """Lindstedt coefficients for beta' = B, B' = eps a(t) sin beta (B0bar = 0)."""
    beta_k, B_k, gam_k = {}, {}, {}
    for k in range(1, K + 1):
        beta = b0 + sum(eps ** j * beta_k[j] for j in range(1, k))
        rhs = a * sp.sin(beta)
        g = sp.diff(rhs, eps, k - 1).subs(eps, 0) / sp.factorial(k - 1)
        g = sp.expand(sp.expand_trig(sp.expand(g)))
        g = sp.fu(g) if k > 1 else g
        mean = sp.simplify(sp.integrate(g, (t, 0, 2 * sp.pi)) / (2 * sp.pi))
        Bk = sp.integrate(sp.expand(g - mean), t)
        Bk = sp.expand(Bk - sp.integrate(Bk, (t, 0, 2 * sp.pi)) / (2 * sp.pi))
        bk = sp.integrate(Bk, t)
        bk = sp.expand(bk - sp.integrate(bk, (t, 0, 2 * sp.pi)) / (2 * sp.pi))
        beta_k[k], B_k[k], gam_k[k] = bk, Bk, g
    return beta_k, B_k, gam_k


def fourier(expr, m, beta0):
    f = sp.lambdify(t, expr.subs(b0, beta0), "mpmath")
    mp.mp.dps = 30
    val = mp.quad(lambda x: f(x) * mp.e ** (-1j * m * x), [0, mp.pi / 2, mp.pi, 3 * mp.pi / 2, 2 * mp.pi])
    val = val / (2 * mp.pi)
    return [float(mp.re(val)), float(mp.im(val))]


def series_records(a):
    beta_k, B_k, gam_k = expand_model(a)
    out = []
    for k in range(1, K + 1):
        for comp, table in (("beta", beta_k), ("B", B_k), ("Gamma", gam_k)):
            for m in MODES:
                for x in BETA0:
                    out.append({"k": k, "component": comp, "m": m, "beta0": x,
                                "value": fourier(table[k], m, x)})
    return out


def golden_alphas(n_max=8):
    mp.mp.dps = 40
    phi = (1 + mp.sqrt(5)) / 2
    out = []
    for n in range(n_max + 1):
        R = 2 ** n
        best = mp.inf
        for a in range(-R, R + 1):
            rest = R - abs(a)
            for b in range(-rest, rest + 1):
                if a == 0 and b == 0:
                    continue
                v = abs(a + phi * b)
                if v < best:
                    best = v
        out.append(float(best))
    return out


if __name__ == "__main__":
    data = {
        "sample_series": series_records(1 + sp.cos(t)),
        "second_order_series": series_records(sp.cos(t)),
        "golden_alphas": golden_alphas(),
    }
    path = Path(__file__).with_name("frozen.json")
    path.write_text(json.dumps(data, indent=1) + "\n")
    print("wrote", path)
