"""Coarse-factor leakage probe.

A multinomial linear classifier is cross-validated on per-utterance pooled
posterior means; its accuracy measures how much utterance-level information
the token-level latent space carries.
"""

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import StratifiedKFold

from ..errors import InvalidInput


def leakage_probe(latent_pools, labels, folds=5, seed=0):
    """Cross-validated accuracy of a linear probe predicting labels from pools.

    latent_pools: [M, d] array of mean-pooled posterior means per utterance.
    labels: length-M array of categorical labels (>=2 classes, >=4 per class).
    """
    pools = np.asarray(latent_pools, dtype=np.float64)
    labels = np.asarray(labels)
    if pools.ndim != 2 or pools.shape[0] != labels.shape[0]:
        raise InvalidInput("latent_pools must be [M, d] matching len(labels)")
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise InvalidInput("leakage probe needs at least 2 classes")
    if counts.min() < 4:
        raise InvalidInput(
            f"leakage probe needs >= 4 examples per class, worst class has {counts.min()}"
        )
    folds = min(folds, int(counts.min()))
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    accuracies = []
    for train_idx, test_idx in splitter.split(pools, labels):
        clf = LogisticRegression(max_iter=2000, random_state=seed)
        clf.fit(pools[train_idx], labels[train_idx])
        accuracies.append(float(np.mean(clf.predict(pools[test_idx]) == labels[test_idx])))
    return float(np.mean(accuracies))
