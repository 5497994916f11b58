"""Drop and campaign orchestration.

A drop is one Monte-Carlo realization of topology, shadowing, pilot
assignment and association over which the closed-form SE lower bounds (and,
optionally, the sampled upper bounds) are evaluated for every user. A
campaign aggregates many drops into per-(role, link, bound) rate CDFs.

Reproducibility contract: (config, master_seed) determines every output
byte. Drop i consumes generators spawned from SeedSequence(master_seed,
spawn_key=(i,)), so results are independent of the parallelism degree.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import __version__
from .association import build_association
from .channel import build_large_scale
from .config import SimConfig, config_to_dict
from .errors import CfsimError
from .estimation import assign_pilots, build_estimation
from .geometry import generate_topology
from .mc import se_ub_dl_mc, se_ub_ul_mc
from .power import (
    fpc_ul,
    maxmin_dl,
    maxmin_ul,
    ppa_dl,
    uniform_dl,
    wfpa_dl,
)
from .se import build_se_tables, dl_sinr_lb, se_from_sinr, ul_sinr_lb

ROLE_NAMES = {0: "gue", 1: "uav"}


@dataclass
class RateReport:
    """Per-user spectral efficiencies and rates for one drop."""

    drop_id: int
    roles: np.ndarray  # (K,)
    se_lb_dl: np.ndarray
    se_lb_ul: np.ndarray
    se_ub_dl: np.ndarray  # NaN when the UB evaluation is disabled
    se_ub_ul: np.ndarray
    se_ub_dl_stderr: np.ndarray
    se_ub_ul_stderr: np.ndarray
    bandwidth_hz: float
    power_info: dict = field(default_factory=dict)

    @property
    def has_ub(self):
        return not np.isnan(self.se_ub_dl).all()

    def rates(self, kind):
        se = getattr(self, f"se_{kind}")
        return se * self.bandwidth_hz


def drop_seed_sequence(master_seed, drop_index):
    """Stable splittable per-drop seed."""
    return np.random.SeedSequence(master_seed, spawn_key=(drop_index,))


def allocate_dl(config: SimConfig, tables, roles):
    p = config.power
    budgets = np.full(config.n_ap, p.dl_budget_per_ap_w)
    if p.dl == "ppa":
        return ppa_dl(tables.gamma, tables.serving, budgets, roles=roles, kappa=p.kappa), {}
    if p.dl == "wfpa":
        return (
            wfpa_dl(
                tables.gamma, tables.serving, budgets, config.sigma_z2,
                roles=roles, kappa=p.kappa,
            ),
            {},
        )
    if p.dl == "uniform":
        return uniform_dl(tables.gamma, tables.serving, budgets), {}
    # maxmin
    mm = p.maxmin
    result = maxmin_dl(
        tables,
        budgets,
        config.sigma_z2,
        prelog=config.frame.tau_d / config.frame.tau_c,
        roles=roles,
        kappa=p.kappa,
        outer_tol=mm.outer_tol,
        max_outer_iters=mm.max_outer_iters,
        inner_tol=mm.inner_tol,
        max_inner_iters=mm.max_inner_iters,
        paper_literal_g2=p.paper_literal_g2,
        anchor_floor_frac=mm.anchor_floor,
    )
    return result.dl, result.info


def allocate_ul(config: SimConfig, tables, est):
    p = config.power
    p_max = np.full(config.n_users, p.ul_max_w)
    fpc_powers = fpc_ul(est.G, tables.serving, p_max, p.fpc.p0_watts, p.fpc.alpha)
    if p.ul == "fpc":
        return fpc_powers, {}
    mm = p.maxmin
    result = maxmin_ul(
        tables,
        config.sigma_w2,
        prelog=config.frame.tau_u / config.frame.tau_c,
        p_max=p_max,
        init_eta=fpc_powers,
        block_size=mm.block_size,
        outer_tol=mm.outer_tol,
        max_outer_iters=mm.max_outer_iters,
        inner_tol=mm.inner_tol,
        max_inner_iters=mm.max_inner_iters,
    )
    return result.ul, result.info


def run_drop(config: SimConfig, drop_index, master_seed=None, debug_dir=None) -> RateReport:
    """Execute the full pipeline for one drop, deterministically from its seed.

    debug_dir, when set, receives per-drop diagnostic CSVs (large-scale state,
    estimation scalars, association map, solver traces).
    """
    config.validate()
    if master_seed is None:
        master_seed = config.seed
    ss = drop_seed_sequence(master_seed, drop_index)
    rng_state, rng_mc_dl, rng_mc_ul = [np.random.default_rng(s) for s in ss.spawn(3)]

    try:
        geometry = generate_topology(config, rng_state)
        ls = build_large_scale(config, geometry, rng_state)
        book = assign_pilots(
            config.n_users,
            config.frame.tau_p,
            rng_state,
            orthogonal_forced=config.estimation.orthogonal_forced,
        )
        assoc = build_association(config, ls.beta)
        est = build_estimation(
            ls,
            book,
            eta_train=config.train_energy_w,
            sigma_w2=config.sigma_w2,
            paper_literal_b=config.estimation.paper_literal_b,
            condition_limit=config.estimation.condition_limit,
        )
        tables = build_se_tables(ls, est, book, assoc)

        eta_dl, dl_info = allocate_dl(config, tables, ls.roles)
        eta_ul, ul_info = allocate_ul(config, tables, est)

        prelog_dl = config.frame.tau_d / config.frame.tau_c
        prelog_ul = config.frame.tau_u / config.frame.tau_c
        se_lb_dl = se_from_sinr(dl_sinr_lb(tables, eta_dl, config.sigma_z2), prelog_dl)
        se_lb_ul = se_from_sinr(ul_sinr_lb(tables, eta_ul, config.sigma_w2), prelog_ul)

        K = config.n_users
        se_ub_dl, se_ub_ul = np.full(K, np.nan), np.full(K, np.nan)
        err_dl, err_ul = np.full(K, np.nan), np.full(K, np.nan)
        if config.mc.ub_samples > 0:
            ub_dl = se_ub_dl_mc(
                ls, est, book, assoc.serving, eta_dl, config.sigma_z2, prelog_dl,
                config.mc.ub_samples, rng_mc_dl,
                batch_count=config.mc.batch_count, chunk=config.mc.chunk,
                literal_no_log=config.mc.literal_ub_no_log,
            )
            ub_ul = se_ub_ul_mc(
                ls, est, book, assoc.serving, eta_ul, prelog_ul,
                config.mc.ub_samples, rng_mc_ul,
                batch_count=config.mc.batch_count, chunk=config.mc.chunk,
                literal_no_log=config.mc.literal_ub_no_log,
            )
            se_ub_dl, err_dl = ub_dl.se, ub_dl.se_stderr
            se_ub_ul, err_ul = ub_ul.se, ub_ul.se_stderr
    except CfsimError as exc:
        raise type(exc)(f"drop {drop_index} (seed {master_seed}): {exc}") from exc

    if debug_dir is not None:
        dump_drop_debug(
            debug_dir, drop_index, ls, est, assoc,
            {"dl": dl_info, "ul": ul_info},
        )
    return RateReport(
        drop_id=drop_index,
        roles=ls.roles,
        se_lb_dl=se_lb_dl,
        se_lb_ul=se_lb_ul,
        se_ub_dl=se_ub_dl,
        se_ub_ul=se_ub_ul,
        se_ub_dl_stderr=err_dl,
        se_ub_ul_stderr=err_ul,
        bandwidth_hz=config.bandwidth_hz,
        power_info={"dl": dl_info, "ul": ul_info},
    )


def dump_drop_debug(debug_dir, drop_id, ls, est, assoc, power_info):
    """Diagnostic CSVs for one drop: channel state, estimator scalars, serving
    map and min-rate solver traces."""
    os.makedirs(debug_dir, exist_ok=True)
    K, A = ls.beta.shape
    with open(os.path.join(debug_dir, f"drop_{drop_id}_beta.csv"), "w") as fh:
        fh.write("user_id,ap_id,beta_db,rice_k\n")
        for k in range(K):
            for a in range(A):
                fh.write(
                    f"{k},{a},{_fmt(10.0 * np.log10(ls.beta[k, a]))},"
                    f"{_fmt(ls.rice_k[k, a])}\n"
                )
    tr_g = np.trace(est.G, axis1=2, axis2=3).real
    tr_b = np.trace(est.B, axis1=2, axis2=3).real
    with open(os.path.join(debug_dir, f"drop_{drop_id}_estimation.csv"), "w") as fh:
        fh.write("user_id,ap_id,gamma,tr_G,tr_B\n")
        for k in range(K):
            for a in range(A):
                fh.write(
                    f"{k},{a},{_fmt(est.gamma[k, a])},{_fmt(tr_g[k, a])},"
                    f"{_fmt(tr_b[k, a])}\n"
                )
    with open(os.path.join(debug_dir, f"drop_{drop_id}_association.csv"), "w") as fh:
        fh.write("user_id,ap_ids\n")
        for k in range(K):
            fh.write(f"{k}," + " ".join(str(a) for a in assoc.aps_of(k)) + "\n")
    for link in ("dl", "ul"):
        trace = power_info.get(link, {}).get("min_rate_trace")
        if trace:
            path = os.path.join(debug_dir, f"drop_{drop_id}_maxmin_{link}_trace.csv")
            with open(path, "w") as fh:
                fh.write("outer_iter,min_rate\n")
                for i, v in enumerate(trace):
                    fh.write(f"{i},{_fmt(v)}\n")


def _drop_task(args):
    config, drop_index, master_seed, debug_dir = args
    return run_drop(config, drop_index, master_seed, debug_dir=debug_dir)


@dataclass
class CampaignResult:
    reports: list
    config: SimConfig
    master_seed: int

    def rate_samples(self, role_name, link, bound):
        """Pooled per-user rates (bit/s) across drops for one (role, link, bound)."""
        role_id = {v: k for k, v in ROLE_NAMES.items()}[role_name]
        chunks = []
        for rep in self.reports:
            vals = rep.rates(f"{bound}_{link}")
            chunks.append(vals[rep.roles == role_id])
        return np.concatenate(chunks) if chunks else np.array([])

    def cdf_table(self, role_name, link, bound):
        """Sorted rates with empirical CDF values (i+1)/n."""
        samples = self.rate_samples(role_name, link, bound)
        samples = samples[~np.isnan(samples)]
        x = np.sort(samples)
        if x.size == 0:
            return x, x
        return x, np.arange(1, x.size + 1) / x.size

    def percentiles(self, role_name, link, bound):
        """{1: 99%-likely rate, 5, 50, 95} percentiles in bit/s."""
        samples = self.rate_samples(role_name, link, bound)
        samples = samples[~np.isnan(samples)]
        if samples.size == 0:
            return {}
        return {p: float(np.percentile(samples, p)) for p in (1, 5, 50, 95)}


def run_campaign(
    config: SimConfig, n_drops=None, master_seed=None, jobs=1, debug_dir=None
) -> CampaignResult:
    """Run n_drops independent drops; results are invariant to `jobs`."""
    config.validate()
    if n_drops is None:
        n_drops = config.drops
    if master_seed is None:
        master_seed = config.seed
    if n_drops < 1:
        raise CfsimError("n_drops must be >= 1")
    tasks = [(config, i, master_seed, debug_dir) for i in range(n_drops)]
    if jobs <= 1:
        reports = [_drop_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_drop_task, tasks))
    reports.sort(key=lambda r: r.drop_id)
    return CampaignResult(reports=reports, config=config, master_seed=master_seed)


# ---------------------------------------------------------------------------
# Output emission
# ---------------------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


RATES_HEADER = (
    "drop_id,user_id,role,se_lb_dl,se_ub_dl,se_lb_ul,se_ub_ul,"
    "rate_lb_dl,rate_ub_dl,rate_lb_ul,rate_ub_ul,se_ub_dl_stderr,se_ub_ul_stderr"
)


def write_rates_csv(result: CampaignResult, path):
    lines = [RATES_HEADER]
    for rep in result.reports:
        W = rep.bandwidth_hz
        for k in range(len(rep.roles)):
            vals = [
                rep.se_lb_dl[k], rep.se_ub_dl[k], rep.se_lb_ul[k], rep.se_ub_ul[k],
                rep.se_lb_dl[k] * W, rep.se_ub_dl[k] * W,
                rep.se_lb_ul[k] * W, rep.se_ub_ul[k] * W,
                rep.se_ub_dl_stderr[k], rep.se_ub_ul_stderr[k],
            ]
            lines.append(
                f"{rep.drop_id},{k},{ROLE_NAMES[int(rep.roles[k])]},"
                + ",".join(_fmt(v) for v in vals)
            )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_cdf(result: CampaignResult, out_dir):
    """Write rates.csv, cdf_<role>_<link>_<bound>.csv files and the run manifest.

    Returns the list of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    rates_path = os.path.join(out_dir, "rates.csv")
    write_rates_csv(result, rates_path)
    written.append(rates_path)

    bounds = ["lb", "ub"] if result.reports and result.reports[0].has_ub else ["lb"]
    present_roles = set()
    for rep in result.reports:
        present_roles.update(int(r) for r in np.unique(rep.roles))
    for role_id in sorted(present_roles):
        role = ROLE_NAMES[role_id]
        for link in ("dl", "ul"):
            for bound in bounds:
                x, f = result.cdf_table(role, link, bound)
                path = os.path.join(out_dir, f"cdf_{role}_{link}_{bound}.csv")
                lines = ["rate_bps,cdf"] + [
                    f"{_fmt(xi)},{_fmt(fi)}" for xi, fi in zip(x, f)
                ]
                with open(path, "w") as fh:
                    fh.write("\n".join(lines) + "\n")
                written.append(path)

    manifest = {
        "cfsim_version": __version__,
        "master_seed": int(result.master_seed),
        "n_drops": len(result.reports),
        "seed_derivation": "SeedSequence(master_seed, spawn_key=(drop_index,)).spawn(3)",
        "config": config_to_dict(result.config),
        "outputs": [os.path.basename(p) for p in written],
    }
    manifest_path = os.path.join(out_dir, "manifest.yaml")
    with open(manifest_path, "w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=False)
    written.append(manifest_path)
    return written
