"""gradrec: rating, top-n and sequential recommenders on a tiny autodiff engine.

Library layout:

* :mod:`gradrec.engine` — reverse-mode autodiff tape, SGD/Adam, grad check
* :mod:`gradrec.data` — uirt/libfm parsing, id remapping, splits, sequences
* :mod:`gradrec.metrics` — RMSE/MAE and Precision/Recall/NDCG/MRR protocols
* :mod:`gradrec.models` — the twelve model implementations plus baselines
* :mod:`gradrec.runner` / :mod:`gradrec.cli` — config-driven experiments
* :mod:`gradrec.synthetic` — seeded datasets with planted structure
"""

__version__ = "0.1.0"
