# Regenerates the 50-digit reference values frozen in tests/bound_reference.rs
# and in the acceptance suite.
import mpmath as mp

mp.mp.dps = 50


def params(n, k, theta, b):
    ratio = mp.mpf(b) / (k * mp.mpf(theta))
    m = int(mp.ceil(112 * ratio**2 * mp.log(n * k * mp.sqrt(k))))
    c = mp.sqrt((k * mp.mpf(theta)) ** 2 / (20 * mp.mpf(b) ** 2) + 1)
    return m, c, c, 1 / (2 * c)


def epsilon(k, theta, b, m, c1, c2, nu):
    kt = k * mp.mpf(theta)
    t1 = 8 * mp.e ** (-(mp.mpf(m) / 7) * (kt / (4 * b)) ** 2)
    t2 = 2 * m * nu**m / mp.sqrt(mp.pi) * mp.e ** (-(mp.mpf(m + 1) / 2) * (kt / (4 * c1 * nu * b)) ** 2)
    t3 = 4 * mp.e ** (-mp.mpf("0.21") * m * (c1**2 - 1))
    t4 = 4 * mp.e ** (-mp.mpf("0.21") * m * (c2**2 - 1))
    return t1, t2, t3, t4


def bounds(n, k, theta, b, delta, sigma=1):
    m, c1, c2, nu = params(n, k, theta, b)
    eps = sum(epsilon(k, theta, b, m, c1, c2, nu))
    rate = m * mp.log((c2 + nu) / nu)
    expected = mp.sqrt(2 * sigma**2 * rate / n) + eps
    tail = mp.sqrt((2 * rate + 2 * mp.log(1 / mp.mpf(delta))) * sigma**2 / n) + eps
    return m, eps, expected, tail


if __name__ == "__main__":
    m, c1, c2, nu = params(100, 10, "0.2", 1)
    print("m", m)
    for name, v in zip(["term1", "term2", "term3", "term4"], epsilon(10, "0.2", 1, m, c1, c2, nu)):
        print(name, mp.nstr(v, 25))
    _, eps, e, t = bounds(100, 10, "0.2", 1, "0.05")
    print("epsilon", mp.nstr(eps, 25))
    print("expected", mp.nstr(e, 25))
    print("tail", mp.nstr(t, 25))
    # centralized at n=100, K=10: K←1, n←nK
    _, ceps, ce, _ = bounds(1000, 1, "0.2", 1, "0.05")
    print("centralized", mp.nstr(ce, 25))
