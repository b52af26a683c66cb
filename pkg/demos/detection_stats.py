"""Loading, imaging fidelity and survival from three consecutive images.

Synthetic occupancy records are drawn with the measured loading (52.0%),
imaging fidelity (99.988%) and survival (99.88%).  The three-image rules
recover them with Wilson intervals.  A bimodal count histogram gives the
discrimination threshold, and a binomially sampled hold-time series gives
the trap lifetime.

    python demos/detection_stats.py
"""
import numpy as np

from cavryd.analysis import (
    DetectionParams,
    fit_survival_decay,
    histogram_threshold,
    survival_curve,
    synth_detection_data,
    three_image_stats,
)

truth = DetectionParams(0.52, 0.99988, 0.9988)
records, counts = synth_detection_data(truth, 1_000_000, seed=0)
stats = three_image_stats(records)
for name, est, val in (("loading", stats.loading_probability, truth.loading),
                       ("imaging fidelity", stats.imaging_fidelity, truth.imaging_fidelity),
                       ("survival", stats.survival_probability, truth.survival)):
    print(f"{name:17s} {est.value:.6f} +- {est.sigma:.6f} (truth {val})")

thr = histogram_threshold(counts[:20000, 0])
print(f"threshold {thr.threshold:.0f} counts, discrimination fidelity {thr.fidelity:.6f}")

t = np.linspace(0, 600, 8)
fit = fit_survival_decay(t, survival_curve(t, 322.0, 500, seed=1), 500)
print(f"lifetime {fit['T']:.0f} +- {fit.sigma('T'):.0f} s")
