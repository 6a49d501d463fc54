"""Fundamental solutions of the critically decaying oscillator.

Builds the even model that is constant on ``|t| <= r0`` and equals
``1/(4 t^2)`` beyond it, prints the matched constants, the zero of
``zeta2``, the time from which the asymptotic assumptions are checked,
and a short table of both solutions.
"""

import numpy as np

from critnls import SigmaModel, asymptotic_coeffs, solve_fundamental, verify_asymptotics, wronskian
from critnls.oscillator import ALT_MATCHING_TARGET


def describe(model, label):
    pair = solve_fundamental(model, t_max=1e4)
    (c11, c12), (c21, c22) = pair.coeffs[1]
    print(f"--- {label}")
    print(f"alpha = {model.alpha:.12f}")
    print(f"zeta1 ~ {c11:+.6f} t^1/2 {c12:+.6f} t^1/2 log t")
    print(f"zeta2 ~ {c21:+.6f} t^1/2 {c22:+.6f} t^1/2 log t")
    print(f"positive zeros of zeta2: {[round(z, 6) for z in pair.zeros if z > 0]}")
    print(f"r_assume = {pair.r_assume:.6f}")
    t = np.linspace(-1e3, 1e3, 4001)
    print(f"max |W - 1| on [-1e3, 1e3]: {np.max(np.abs(wronskian(pair, t) - 1)):.1e}")
    fit = asymptotic_coeffs(pair)
    print(f"least-squares c12 on the fit window: {fit.coeffs[1][0][1]:.2e}")
    print(verify_asymptotics(pair))
    return pair


def main():
    pair = describe(SigmaModel.matched(10.0), "matched model (zeta1 without log term)")
    describe(SigmaModel.matched(10.0, target=ALT_MATCHING_TARGET),
             "alternative matching target (zeta1 keeps a log term)")
    print("\n      t        zeta1        zeta2")
    for t in (0.0, 5.0, 10.0, 10.5, 20.0, 100.0, 1e3, 1e4):
        z1, _, z2, _ = pair.evaluate(t)
        print(f"{t:8g} {float(z1):12.6f} {float(z2):12.6f}")


if __name__ == "__main__":
    main()
