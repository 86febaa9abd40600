# %% [markdown]
# # From raw streams to feature windows
#
# A walk through the preprocessing chain on one short synthetic session:
# blink gaps in the pupil trace are filled by fuzzy c-means, EEG and fNIRS are
# high-pass filtered and resampled to 500 Hz, every channel is standardised and
# the session is cut into 848-value feature windows.

# %%
import numpy as np

from cwlcascade.features import VECTOR_LENGTH, stack
from cwlcascade.impute import impute_pupil
from cwlcascade.pipeline import PreprocessConfig, preprocess
from cwlcascade.signals import butterworth_highpass_magnitude, design_butterworth_highpass
from cwlcascade.synth import SynthConfig, generate_session

rec, truth = generate_session(SynthConfig(seed=1, task_s=30.0, rest_s=15.0, n_eeg=4, n_fnirs=4))
print(rec.subject_id, "events:")
for label, start, end in rec.events:
    print(f"  {label:<7} {start:6.1f} .. {end:6.1f} s")

# %% [markdown]
# ## The high-pass filter
#
# The designed 5th-order Butterworth filter tracks the closed-form magnitude of
# the prewarped design and removes DC completely.

# %%
coeffs = design_butterworth_highpass(5, 0.5, 500.0)
f = np.array([0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 10.0])
for fi, h, ref in zip(f, np.abs(coeffs.freq_response(f, 500.0)),
                      butterworth_highpass_magnitude(f, 5, 0.5, 500.0)):
    print(f"{fi:5.2f} Hz  |H| = {h:.6f}   closed form {ref:.6f}")

# %% [markdown]
# ## Filling blink gaps
#
# Each pupil channel is delay-embedded and completed with fuzzy c-means. The
# imputed samples can be compared with the clean trace the generator kept.

# %%
left = rec.pupil[0]
filled = impute_pupil(left)
gap = left.missing_mask
print(f"{gap.mean():.1%} of the left-eye samples were missing")
r = np.corrcoef(filled.samples[gap], truth.pupil_clean[0][gap])[0, 1]
print(f"correlation with the clean trace inside the gaps: {r:.4f}")

# %% [markdown]
# ## Feature windows
#
# Windows never straddle a label change. Each vector holds 400 EEG samples,
# 400 HbO2 samples and 48 pupil samples covering the same 0.8 s.

# %%
trace = []
windows = preprocess(rec, PreprocessConfig(), trace)
print(" -> ".join(trace))
X, y_task, y_bin = stack(windows)
print(X.shape, "expected width", VECTOR_LENGTH)
labels, counts = np.unique([w.task_label for w in windows], return_counts=True)
print(dict(zip(labels.tolist(), counts.tolist())))
