"""Optimal allocation over time and a brute-force cross-check."""
# %%
from predalloc.model import BetaPrior, ObservationModel, Utility
from predalloc.oracle import OracleConfig, brute_force_over_time
from predalloc.over_time import solve_optimal

model = ObservationModel(1.0)
prior = BetaPrior(0.028, 0.35)
u = Utility("fully_effective", 10)

# %% bigger budgets move treatment earlier
for b in (0.05, 0.1, 0.2):
    sched, out = solve_optimal(prior, model, u, b, convention="section_5_3")
    print(f"b={b}: t_hat={sched.t_hat} q={list(sched.q)} rho={sched.rho:.3f} "
          f"mean time {out.mean_treatment_time():.3f} utility {out.utility_per_capita:.5f}")

# %% the threshold solver against exhaustive budget splits on a 200-unit grid
u4 = Utility("fully_effective", 4)
for b in (0.1, 0.3):
    _, out = solve_optimal(prior, model, u4, b)
    orc = brute_force_over_time(prior, model, u4, b, OracleConfig(200, 4))
    print(f"b={b}: solver {out.utility_per_capita:.6f} oracle {orc.utility_per_capita:.6f} "
          f"split {[round(x, 3) for x in orc.split]}")
