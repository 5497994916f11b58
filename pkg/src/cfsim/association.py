"""Serving maps between users and APs (cell-free, user-centric, single-BS baseline)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssociationError, ConfigError


@dataclass(frozen=True)
class AssociationMap:
    """Bidirectional serving map: serving[k, a] is True when AP a serves user k."""

    serving: np.ndarray  # (K, A) bool
    mode: str

    @property
    def n_users(self):
        return self.serving.shape[0]

    @property
    def n_ap(self):
        return self.serving.shape[1]

    def aps_of(self, k):
        """Ordered serving set A_k."""
        return np.flatnonzero(self.serving[k])

    def users_of(self, a):
        """Served-user set K_a."""
        return np.flatnonzero(self.serving[:, a])

    def check(self):
        if not self.serving.any(axis=1).all():
            orphans = np.flatnonzero(~self.serving.any(axis=1))
            raise AssociationError(f"users without serving APs: {orphans.tolist()}")
        return self


def associate_cf(n_ap, n_users) -> AssociationMap:
    """Cell-free: every AP serves every user."""
    return AssociationMap(serving=np.ones((n_users, n_ap), dtype=bool), mode="cf").check()


def associate_uc(beta, cluster_size) -> AssociationMap:
    """User-centric: each user keeps its `cluster_size` largest-beta APs.

    Ties break toward the lower AP index so drops are reproducible.
    """
    beta = np.asarray(beta, dtype=float)
    n_users, n_ap = beta.shape
    if not 1 <= cluster_size <= n_ap:
        raise ConfigError(
            f"must lie in [1, n_ap={n_ap}], got {cluster_size}",
            field="association.uc_cluster_size",
        )
    serving = np.zeros((n_users, n_ap), dtype=bool)
    order = np.argsort(-beta, axis=1, kind="stable")  # stable -> lower index wins ties
    for k in range(n_users):
        serving[k, order[k, :cluster_size]] = True
    return AssociationMap(serving=serving, mode="uc").check()


def build_association(config, beta) -> AssociationMap:
    if config.association.mode == "cf":
        return associate_cf(config.n_ap, beta.shape[0])
    return associate_uc(beta, config.association.uc_cluster_size)
