#!/usr/bin/env python3
# Evaluation at two levels: raw utterances, then per patient after
# aggregation (mean for ratings, tie-broken mode for classes).

import numpy as np

from voxqual import metrics

# Regression: three patients, several utterances each.
outcomes = [
    metrics.PredictionOutcome("u0", "pa", [0.4], [0.5]),
    metrics.PredictionOutcome("u1", "pa", [0.8], [0.5]),
    metrics.PredictionOutcome("u2", "pb", [1.9], [2.0]),
    metrics.PredictionOutcome("u3", "pb", [2.3], [2.0]),
    metrics.PredictionOutcome("u4", "pc", [2.9], [3.0]),
]
report = metrics.evaluate_regression(outcomes, ["G"])
for line in metrics.regression_report_lines(report):
    print(line)

print()
print("scatter CSV for external plotting:")
print(metrics.scatter_csv(outcomes[:3], ["G"]))

# Classification: the patient level takes the modal class; ties go to the
# mode nearest the mean, then the lower class.
print("mode of [0,0,1,1,2]:", metrics.aggregate_classification(metrics.PatientGroup("p", [0, 0, 1, 1, 2])))
print("mode of [0,0,2,2]:  ", metrics.aggregate_classification(metrics.PatientGroup("p", [0, 0, 2, 2])))

# Severity bins pin their boundaries: 1.0 is still mild, 2.0 still moderate.
for score in (0.0, 1.0, 1.01, 2.0, 2.01, 3.0):
    print(f"grade {score:.2f} -> {metrics.bin_grade(score)}")

# Correlations use average ranks, so monotone transforms leave SRCC alone.
rng = np.random.default_rng(0)
x, y = rng.normal(size=20), rng.normal(size=20)
print(f"srcc(x, y)      = {metrics.spearman(x, y):.6f}")
print(f"srcc(exp(x), y) = {metrics.spearman(np.exp(x), y):.6f}")
