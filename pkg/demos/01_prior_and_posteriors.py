"""Fit a Beta failure prior from early dropout fractions and inspect posteriors."""
# %%
import numpy as np

from predalloc.dynamics import PosteriorSpec, PosteriorTables, cohort_stats, untreated_cohorts
from predalloc.model import ObservationModel, beta_moments, estimate_beta_prior

# %% fractions failing before step 1 (E[p]) and E[p^2], as a survey would report them
m0, m1 = beta_moments(0.028, 0.35)
prior = estimate_beta_prior(m0, m1)
print(f"fitted Beta({prior.alpha:.4f}, {prior.beta:.4f}), mean dropout {prior.mean():.3f}")

# %% posterior mean failure rate by step and number of positive signals
model = ObservationModel(1.0)
tables = PosteriorTables(prior, model, 6)
np.set_printoptions(precision=4, suppress=True)
print("mu[t, k] (rows t = 1..6):")
for t in range(1, 7):
    print(t, tables.mu[t, : t + 1])

# %% the population thins out: mass of still-active untreated individuals per cohort
for tab in untreated_cohorts(tables):
    print(f"t={tab.t}  active={tab.total():.4f}  by k={tab.masses}")

# %% a noisier signal (gamma = 2) shifts the same cohort's posterior
for g in (1.0, 2.0):
    mu, s = cohort_stats(prior, ObservationModel(g), PosteriorSpec(4, 1))
    print(f"gamma={g}: E[p | t=4, y=1] = {mu:.4f}, survival factor {s:.4f}")
