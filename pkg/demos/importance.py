"""Which covariates drive the meta learner's predictions?

Scores every covariate by |Spearman| (continuous) or the correlation ratio
(categorical) against the evaluation-window predictions of declared cities,
with permutation p-values, then summarises by covariate group.

    python demos/importance.py
"""

import pandas as pd

from osassl.cli import default_zoo
from osassl.importance import group_report, panel_importance, scores_frame
from osassl.superlearner import ScheduleConfig, run_schedule
from osassl.synthgen import GeneratorSpec, generate

panel, _ = generate(GeneratorSpec(n_cities=80, n_times=14, seed=4))
report = run_schedule(panel, default_zoo(panel.schema), ScheduleConfig(stages=(1, 3, 4)))

scores = panel_importance(report, panel, n_perm=2000, seed=0)
frame = scores_frame(scores).sort_values("rho", ascending=False)
with pd.option_context("display.width", 120):
    print(frame.head(10).round(4).to_string(index=False))
    print()
    # x1, x2, zone and the swi channels enter theta*; x3 ("descriptors") does not
    print(group_report(scores).round(4).to_string(index=False))
