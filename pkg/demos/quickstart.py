"""Forecast yearly aggregate costs on a synthetic city panel.

Generates 60 cities over 16 years, runs the staged one-step-ahead schedule
with the default learner zoo and prints, for every evaluation year, which
method the discrete meta learner picked and how close each overarching
forecaster came to the realised total.

    python demos/quickstart.py
"""

import numpy as np

from osassl.cli import default_zoo
from osassl.superlearner import ScheduleConfig, forecast_total, run_schedule
from osassl.synthgen import GeneratorSpec, generate

panel, truth = generate(GeneratorSpec(n_cities=60, n_times=16, family="additive", seed=1))
print(panel)
print("declared share per year:", np.round(panel.declared.mean(axis=1), 2))

zoo = default_zoo(panel.schema)
print("base learners:", [l.name for l in zoo])

# 1 reserved year, 4 years of base-level warm-up, 4 of meta-level warm-up
report = run_schedule(panel, zoo, ScheduleConfig(stages=(1, 4, 4)))

frame = report.to_frame()
cols = ["year", "selected_name", "total_actual", "total_predicted", "ratio", "ratio_continuous"]
print(frame[cols].round(3).to_string(index=False))

print("\nratio of predicted to actual total, over the evaluation years")
print(report.ratio_summary().round(4).to_string(index=False))

# the rule frozen after the last year, applied to the last slice's covariates
preds, total = forecast_total(report.forecaster, panel.slice(panel.last))
print(f"\nfrozen forecaster on year {panel.last}: total {total:.1f} over {int((preds > 0).sum())} declared cities")
