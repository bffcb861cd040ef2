"""Independent high-precision reference values frozen into the test suite.

Exponents come from the closed forms evaluated in 50-digit arithmetic.
Profiles come from mpmath's Taylor-series ODE integrator, started from a
power series at r = r0 (no code shared with the package).

    python scripts/oracles.py
"""

from __future__ import annotations

import mpmath as mp

mp.mp.dps = 50


def exponents(n, p):
    n, p = mp.mpf(n), mp.mpf(p)
    nu = 2 / (p - 1)
    L = (nu * (n - 2 - nu)) ** (1 / (p - 1))
    pLp = p * L ** (p - 1)
    p_S = (n + 2) / (n - 2)
    p_c = ((n - 2) ** 2 - 4 * n + 8 * mp.sqrt(n - 1)) / ((n - 2) * (n - 10)) if n > 10 else None
    b = n - 2 - 2 * nu
    disc = b**2 - 8 * (n - 2 - nu)
    lam1 = (b - mp.sqrt(disc)) / 2 if disc > 0 else None
    kappa0 = (n - 2) ** 2 / (4 * pLp) - 1
    return {"nu": nu, "L": L, "pLp": pLp, "p_S": p_S, "p_c": p_c, "lambda1": lam1,
            "kappa0": kappa0}


def kappa(n, p, gamma):
    e = exponents(n, p)
    g = mp.mpf(gamma)
    return g * (n - 2 - g) / e["pLp"] - 1


def phi_profile(n, p, alpha, radii, r0=mp.mpf("1e-3")):
    """phi'' + (n-1)/r phi' + phi^p = 0 with phi(0) = alpha, three series terms."""
    n, p, a = mp.mpf(n), mp.mpf(p), mp.mpf(alpha)
    c1 = -a**p / (2 * n)
    c2 = p * a ** (2 * p - 1) / (8 * n * (n + 2))
    y0 = [a + c1 * r0**2 + c2 * r0**4, 2 * c1 * r0 + 4 * c2 * r0**3]
    sol = mp.odefun(lambda r, y: [y[1], -(n - 1) / r * y[1] - y[0] ** p], r0, y0, tol=mp.mpf(10) ** -30)
    return [sol(mp.mpf(r))[0] for r in radii]


def f_profile(n, p, alpha, kap, radii, r0=mp.mpf("1e-3")):
    """Coupled (phi, f) with f'' + (n-1)/r f' + (kappa+1) p phi^(p-1) f = 0, f(0) = 1."""
    n, p, a, k = mp.mpf(n), mp.mpf(p), mp.mpf(alpha), mp.mpf(kap)
    c1 = -a**p / (2 * n)
    q = (k + 1) * p * a ** (p - 1)
    d1 = -q / (2 * n)
    y0 = [a + c1 * r0**2, 2 * c1 * r0, 1 + d1 * r0**2, 2 * d1 * r0]

    def rhs(r, y):
        ph, dph, f, df = y
        return [dph, -(n - 1) / r * dph - ph**p, df, -(n - 1) / r * df - (k + 1) * p * ph ** (p - 1) * f]
    sol = mp.odefun(rhs, r0, y0, tol=mp.mpf(10) ** -30)
    return [sol(mp.mpf(r))[2] for r in radii]


def main():
    for n, p in ((20, 3), (11, 7), (20, 1.4), (15, 2)):
        e = exponents(n, p)
        print(f"exponents n={n} p={p}:")
        for k, v in e.items():
            print(f"  {k} = {mp.nstr(v, 20) if v is not None else None}")
    print("kappa(20,3,6) =", mp.nstr(kappa(20, 3, 6), 20))
    print("kappa(20,3,4.5) =", mp.nstr(kappa(20, 3, mp.mpf("4.5")), 20))
    radii = ["0.5", "1", "2", "4"]
    print("phi_1 (n=20, p=3) at", radii, [mp.nstr(v, 17) for v in phi_profile(20, 3, 1, radii)])
    print("phi_1 (n=20, p=1.4) at", radii,
          [mp.nstr(v, 17) for v in phi_profile(20, mp.mpf("1.4"), 1, radii)])
    print("f_(1, 7/17) (n=20, p=3) at", radii,
          [mp.nstr(v, 17) for v in f_profile(20, 3, 1, mp.mpf(7) / 17, radii)])


if __name__ == "__main__":
    main()
