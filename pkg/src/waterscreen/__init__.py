"""Screening models and field-data quality control for household drinking-water
contamination surveys.

Subpackages and modules:

- records: CSV ingestion, harmonization, cleaning, outlier screening, encoding.
- qc: rule-based triage of incoming survey records (OK / REVIEW / ALERT).
- trees: from-scratch histogram gradient boosting, random forests, logistic fits.
- pipeline: fold planning, scaling, two-stage stacking, calibration, thresholds.
- metrics: ranking and confusion-derived classification metrics.
- stats: contingency tests, paired bootstrap deltas, FDR control, McNemar.
- explain: exact Shapley attributions for the tree ensembles.
- synth: synthetic survey generator with controllable outcome coupling.
- cli: command-line entry point tying the stages together.
"""

from __future__ import annotations

__version__ = "0.1.0"
