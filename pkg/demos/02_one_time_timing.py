"""When should a single round of treatment happen?"""
# %%
import numpy as np

from predalloc.model import BetaPrior, ObservationModel, Utility
from predalloc.one_time import appendix_c_gap, appendix_c_sign, best_one_time, t_star_fully_effective

T = 10
u = Utility("fully_effective", T)

# %% welfare of spending the whole budget at step t, for priors of decreasing inequality
for alpha, beta in ((0.028, 0.35), (1.0, 1.0), (1.0, 4.0)):
    for b in (0.05, 0.3):
        t_opt, res = best_one_time(BetaPrior(alpha, beta), ObservationModel(1.0), u, b)
        w = np.array([r.welfare_per_capita for r in res])
        print(f"Beta({alpha}, {beta}) b={b}: best t={t_opt}, welfare {np.round(w[:5], 4)} ...")

# %% the Beta(1, G+1) instance: waiting one step pays off once (G+1)(T-4) > 6
for G in (0.5, 1, 2, 3):
    print(f"G={G}: U_2^2 - U_1^1 = {appendix_c_gap(G, 6):+.2e}, predicted sign {appendix_c_sign(G, 6):+d}")

# %% upper bound on the best single step when the signal is noisy
for b in (0.01, 0.1, 0.5):
    print(f"b={b}: t* = {t_star_fully_effective(T, 1.0, 2.0, b):.1f}")
