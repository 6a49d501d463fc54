"""Weighted-norm growth of the profile: linear versus nonlinear.

For the free flow the pulled-back profile ``v`` is constant, so
``||v||_{0,1}`` stays flat up to the discretisation floor.  With the
log-corrected nonlinearity the fitted coefficient of ``log log t`` leaves
that floor, and its size falls off like ``eps'^4`` when the data shrink
(the estimate only bounds growth, so the sign may be either).
"""

from critnls import (Grid, NonlinearityParams, SigmaModel, SolverConfig, evolve, gaussian,
                     solve_fundamental, track_weighted_growth)
from critnls.evolution import scale_to_epsilon
from critnls.spectral import box_size


def run(params, eps, t_max, model, pair):
    L = box_size(gaussian(Grid(1, 1024, 32.0)), pair, t_max)
    grid = Grid(1, 2**15, max(L, 200.0))
    u0 = scale_to_epsilon(gaussian(grid, amplitude=1.0), eps, 1.0)
    cfg = SolverConfig(dt0=0.01, t_max=t_max, epsilon_prime=eps, snapshots_per_decade=20)
    tr = evolve(u0, cfg, model, params, pair=pair, profile_grid=Grid(1, 512, 24.0))
    return track_weighted_growth(tr, gamma=1.0, t_min=15.0).coefficient


def main(t_max=500.0):
    model = SigmaModel.matched(10.0)
    pair = solve_fundamental(model, t_max=1e4)
    linear = NonlinearityParams(mu_L=0.0, mu_S=0.0, check_R=False)
    nonlinear = NonlinearityParams.with_min_R(mu_L=1.0, delta0=0.5)
    print(f"box half-width for t_max={t_max:g}: "
          f"{box_size(gaussian(Grid(1, 1024, 32.0)), pair, t_max):.0f}")
    print(f"linear flow: growth coefficient {run(linear, 1e-1, t_max, model, pair):+.3e}")
    prev = None
    for eps in (8e-1, 4e-1, 2e-1):
        c = run(nonlinear, eps, t_max, model, pair)
        ratio = "" if prev is None else f", |previous|/|this| = {abs(prev / c):.1f} (2^4 = 16)"
        print(f"nonlinear, eps'={eps:g}: growth coefficient {c:+.3e}{ratio}")
        prev = c


if __name__ == "__main__":
    main()
