"""Which nonlinearities are long range at the critical decay rate?

With the linear sup norm decaying like ``(s^{1/2} log s)^{-n/2}``, the
integral ``int F(decay(s)) ds`` decides whether a nonlinearity is short
range (finite) or long range (infinite).  Pure powers below 4/n diverge;
the log-corrected long-range term sits on the divergent side by a single
power of log, and the short-range term converges.
"""

import math

from critnls import NonlinearityParams, classify_threshold, eval_FL, eval_FS, min_admissible_R
from critnls.nonlinearity import power_decay


def main(n=1):
    decay = power_decay(n)
    R = min_admissible_R(0.5)
    params = NonlinearityParams(mu_L=1.0, mu_S=1.0, theta=0.5, R=R, delta0=0.5, n=n)
    cases = [(f"|u|^{p}", lambda a, p=p: a**p) for p in (4.0, 3.8, 3.6)]
    cases += [("F_L", lambda a: float(eval_FL(a, params))),
              ("F_S (theta=0.5)", lambda a: float(eval_FS(a, params)))]
    print(f"admissible R for delta0=0.5: {R:.6f}  (e/2 = {math.e / 2:.6f})")
    for name, F in cases:
        rep = classify_threshold(decay, F)
        T, val = rep.partial_integrals[-1]
        tail = "" if not math.isfinite(rep.tail_estimate) else f", tail ~ {rep.tail_estimate:.2e}"
        print(f"{name:>16}: {rep.verdict.value:10} partial integral {val:.4g} at T={T:.1e}{tail}")


if __name__ == "__main__":
    main()
