"""Curve fitting and detection statistics."""
import csv

import numpy as np

from .detection import (
    DetectionParams,
    DetectionStats,
    Proportion,
    ThresholdResult,
    fit_gaussian_mixture,
    histogram_threshold,
    misclassification,
    survival_curve,
    synth_detection_data,
    three_image_stats,
    wilson_interval,
)
from .fitting import (
    DAMPED_COSINE_NAMES,
    FitResult,
    damped_cosine,
    fit_damped_cosine,
    fit_exponential,
    fit_lm,
    fit_lorentzian_sum,
    fit_survival_decay,
    lorentzian_names,
    lorentzian_sum,
    write_fit_json,
)


def write_series_csv(path, columns):
    """Write equal-length columns given as an ordered ``{name: values}`` mapping."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*data):
            w.writerow([repr(v.item()) if isinstance(v, np.floating) else v.item() for v in row])


def read_series_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}
