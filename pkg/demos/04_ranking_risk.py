"""Does waiting improve the ranking? Simulated and approximate pairwise risk."""
# %%
from predalloc.model import BetaPrior, ObservationModel
from predalloc.ranking import delta_ranking_risk, ranking_risk_approx, ranking_risk_mc

model = ObservationModel(1.0)

# %% strict-tie MC risk against the normal approximation (which scores y-ties as 1/2)
for name, prior in (("uniform", BetaPrior(1.0, 1.0)), ("Beta(1,20)", BetaPrior(1.0, 20.0))):
    for t in (1, 2, 5, 10):
        mc = ranking_risk_mc(prior, model, t, 50_000, 200_000, seed=t)
        half = ranking_risk_mc(prior, model, t, 50_000, 200_000, seed=t, ties="half")
        ap = ranking_risk_approx(prior, model, t)
        print(f"{name:10s} t={t:2d}  mc {mc.value:.4f}+-{mc.std_error:.4f}  half-tie {half.value:.4f}  approx {ap.value:.4f}")

# %% population versus observation effect of one more step
for t in (5, 10, 20):
    d = delta_ranking_risk(BetaPrior(1.0, 1.0), model, t, step="exact")
    print(f"t={t}: delta {d.delta:+.5f} = population {d.population_effect:+.5f} + observation {d.observation_effect:+.5f}")
