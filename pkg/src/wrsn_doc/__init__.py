"""Denial-of-charging detection for wireless rechargeable sensor networks.

Modules
-------
config      network parameters, fusion weights, validation, key = value files
attack      malicious-node selection and behavioral perturbations
simulation  fixed-step physical plane: drain, requests, chargers, transfer
detection   sub-scores, baselines, fusion, thresholding and calibration
twin        digital-twin replica and the score/flag/reorder controller
metrics     evaluation metrics and result exports
scenario    bundled settings and one-call runs
estimators  scikit-learn wrappers for fusion and thresholding
cli         command-line runner
"""

__version__ = "0.1.0"
