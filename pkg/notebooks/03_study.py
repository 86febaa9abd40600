# %% [markdown]
# # Questionnaire scores and hemodynamic responses
#
# SURG-TLX weights every dimension by the number of pairwise comparisons it
# wins. The second half averages HbO2 and HbR around task onsets and checks
# that the tasks with the larger configured response also peak higher.

# %%
import numpy as np

from cwlcascade import synth
from cwlcascade.study import (
    SURGTLX_DIMENSIONS,
    epoch_average,
    grand_average,
    peak_by_task,
    surgtlx_score,
    task_summary_stats,
)

# %% [markdown]
# ## Scoring questionnaires

# %%
rows = synth.generate_surgtlx(n_participants=4, seed=5)
participant, task, response = rows[0]
score = surgtlx_score(response)
print(participant, task)
for d, rating, w in zip(SURGTLX_DIMENSIONS, response.ratings, score.weights):
    print(f"  {d}: rating {rating:4.1f}  weight {w}")
print(f"weighted score {score.weighted_score:.3f}, raw mean {score.raw_mean:.3f}")

by_task = {}
for _, task, resp in rows:
    by_task.setdefault(task, []).append(surgtlx_score(resp).weighted_score)
print({t: round(float(np.mean(v)), 2) for t, v in sorted(by_task.items())})

# %% [markdown]
# ## Onset-locked HbO2
#
# fNIRS is generated at a low rate here to keep the script quick.

# %%
cfg = synth.SynthConfig(seed=7, n_eeg=1, eeg_fs=100.0, fnirs_fs=50.0, n_fnirs=8)
eas = [epoch_average(synth.generate_session(synth.subject_config(cfg, i))[0], 5.0, 30.0)
       for i in range(3)]
stats = task_summary_stats(grand_average(eas))
for s in stats:
    if s.channel == "mean":
        print(f"{s.task} {s.modality:<10} peak {s.peak:+.3f} at {s.time_to_peak_s:5.1f} s")
peaks = peak_by_task(stats)
print("HbO2 peak ranking:", sorted(peaks, key=peaks.get, reverse=True))
