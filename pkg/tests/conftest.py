"""Shared fixtures: small deterministic network states for the unit tests."""

from dataclasses import replace

import numpy as np
import pytest

from cfsim.association import build_association
from cfsim.channel import build_large_scale
from cfsim.config import preset_desk, preset_paper
from cfsim.estimation import PilotBook, assign_pilots, build_estimation, pilot_set
from cfsim.geometry import generate_topology
from cfsim.se import build_se_tables


def make_state(
    seed=0,
    n_ap=3,
    n_ap_antennas=2,
    n_gue=2,
    n_uav=2,
    tau_p=2,
    assignment=None,
    association_mode="cf",
    uc_cluster_size=None,
    config=None,
):
    """Run the drop pipeline on a small config and return every stage."""
    cfg = config or preset_paper()
    frame = replace(cfg.frame, tau_p=tau_p)
    overrides = dict(
        n_ap=n_ap, n_ap_antennas=n_ap_antennas, n_gue=n_gue, n_uav=n_uav, frame=frame
    )
    if association_mode != cfg.association.mode or uc_cluster_size is not None:
        overrides["association"] = replace(
            cfg.association,
            mode=association_mode,
            uc_cluster_size=uc_cluster_size or cfg.association.uc_cluster_size,
        )
    cfg = replace(cfg, **overrides)
    rng = np.random.default_rng(seed)
    geom = generate_topology(cfg, rng)
    ls = build_large_scale(cfg, geom, rng)
    if assignment is not None:
        book = PilotBook(pilots=pilot_set(tau_p), assignment=np.asarray(assignment))
    else:
        book = assign_pilots(cfg.n_users, tau_p, rng)
    assoc = build_association(cfg, ls.beta)
    est = build_estimation(ls, book, cfg.train_energy_w, cfg.sigma_w2)
    tables = build_se_tables(ls, est, book, assoc)
    return {
        "cfg": cfg,
        "geom": geom,
        "ls": ls,
        "book": book,
        "assoc": assoc,
        "est": est,
        "tables": tables,
        "rng": rng,
    }


@pytest.fixture(scope="session")
def gate_fixture():
    """The acceptance fixture: 3 APs x 2 antennas, 2 GUEs + 2 UAVs, tau_p=2.

    Pilot assignment [0, 1, 0, 1] pairs each GUE with a UAV on a shared pilot,
    so every user suffers exactly one (cross-role) collision.
    """
    return make_state(seed=11, assignment=[0, 1, 0, 1])


@pytest.fixture(scope="session")
def desk_cfg():
    return preset_desk()
