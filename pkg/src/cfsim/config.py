"""Simulation configuration: dataclasses, YAML loading, validation, presets.

Every tunable of the simulator lives here with a documented default. The UAV
channel constants (LOS probability and path-loss coefficient tuples) are
transcribed from 3GPP TR 36.777 Tables B-1/B-2 (UMa-AV) and are treated as
opaque numbers by the channel code; override them in the YAML config to model
a different environment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, is_dataclass, replace
from typing import Optional

import yaml

from .errors import ConfigError

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_watts(x_dbm):
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class LogDistanceModel:
    """dB value of form  offset + (dist_coef + dist_height_coef*log10(h)) * log10(d)
    + freq_coef * log10(freq_scale * f_GHz).

    Used both for the GUE gain formula (negative coefficients, yields a gain)
    and the UAV path-loss tables (positive coefficients, yields a loss).
    """

    offset_db: float
    dist_coef: float
    freq_coef: float
    dist_height_coef: float = 0.0
    freq_scale: float = 1.0

    def evaluate(self, dist_m, f_ghz, height_m=1.0):
        dist_term = self.dist_coef + self.dist_height_coef * math.log10(height_m)
        return (
            self.offset_db
            + dist_term * math.log10(dist_m)
            + self.freq_coef * math.log10(self.freq_scale * f_ghz)
        )


@dataclass(frozen=True)
class UavLosModel:
    """Piecewise LOS-probability model for aerial users.

    p = 1 when the horizontal distance is below d1 or the user flies above
    `always_los_above_m`; otherwise d1/d + exp(-d/p1) * (1 - d1/d), with
    d1 = max(d1_log_coef*log10(h) + d1_offset, d1_floor_m) and
    p1 = p1_log_coef*log10(h) + p1_offset.
    """

    always_los_above_m: float = 100.0
    d1_log_coef: float = 460.0
    d1_offset: float = -700.0
    d1_floor_m: float = 18.0
    p1_log_coef: float = 4300.0
    p1_offset: float = -3800.0


@dataclass(frozen=True)
class UavChannelModel:
    """UAV large-scale channel constants (externally sourced: 3GPP TR 36.777, UMa-AV)."""

    los_prob: UavLosModel = field(default_factory=UavLosModel)
    # PL_LOS = 28.0 + 22 log10(d3D) + 20 log10(f_GHz)
    pathloss_los: LogDistanceModel = field(
        default_factory=lambda: LogDistanceModel(offset_db=28.0, dist_coef=22.0, freq_coef=20.0)
    )
    # PL_NLOS = -17.5 + (46 - 7 log10(h)) log10(d3D) + 20 log10(40*pi*f_GHz/3)
    pathloss_nlos: LogDistanceModel = field(
        default_factory=lambda: LogDistanceModel(
            offset_db=-17.5,
            dist_coef=46.0,
            dist_height_coef=-7.0,
            freq_coef=20.0,
            freq_scale=40.0 * math.pi / 3.0,
        )
    )
    # shadow sigma: LOS 4.64*exp(-0.0066 h) dB, NLOS 6 dB
    shadow_los_scale_db: float = 4.64
    shadow_los_height_coef: float = -0.0066
    shadow_nlos_db: float = 6.0
    shadow_in_los: bool = True

    def shadow_sigma_db(self, height_m, los):
        if not los:
            return self.shadow_nlos_db
        if not self.shadow_in_los:
            return 0.0
        return self.shadow_los_scale_db * math.exp(self.shadow_los_height_coef * height_m)


@dataclass(frozen=True)
class ChannelConfig:
    # GUE gain in dB: -36.7 log10(d) - 22.7 - 26 log10(f_GHz) + shadowing
    gue_gain: LogDistanceModel = field(
        default_factory=lambda: LogDistanceModel(offset_db=-22.7, dist_coef=-36.7, freq_coef=-26.0)
    )
    gue_shadow_sigma_db: float = 4.0
    shadow_corr_dist_m: float = 9.0  # d0 of the 2^(-rho/d0) user-correlation kernel
    uav: UavChannelModel = field(default_factory=UavChannelModel)
    rice_clamp_eps: float = 1e-6  # p_LOS clamp keeping K = p/(1-p) finite
    los_phase_policy: str = "per_draw"  # or "per_drop"
    ula_azimuth: Optional[float] = None  # radians; None -> random per AP per drop


@dataclass(frozen=True)
class FrameConfig:
    tau_c: int = 200
    tau_p: int = 32

    @property
    def tau_d(self):
        return (self.tau_c - self.tau_p) / 2.0

    @property
    def tau_u(self):
        return (self.tau_c - self.tau_p) / 2.0


@dataclass(frozen=True)
class FpcConfig:
    alpha: float = 0.5
    p0_dbm: float = -10.0

    @property
    def p0_watts(self):
        return dbm_to_watts(self.p0_dbm)


@dataclass(frozen=True)
class MaxMinConfig:
    outer_tol: float = 1e-4  # relative min-rate improvement stopping the outer loop
    max_outer_iters: int = 50
    inner_tol: float = 1e-6
    max_inner_iters: int = 20
    block_size: Optional[int] = None  # None -> one block per AP (DL) / single block (UL)
    anchor_floor: float = 1e-12  # fraction of budget; keeps sqrt gradients finite


@dataclass(frozen=True)
class PowerConfig:
    dl_budget_per_ap_w: float = 0.2
    ul_max_w: float = 0.1
    train_per_sample_w: float = 0.1  # eta_bar; pilot energy is tau_p * this
    dl: str = "ppa"  # ppa | wfpa | maxmin | uniform
    ul: str = "fpc"  # fpc | maxmin
    kappa: Optional[float] = None  # fraction of DL power reserved for UAVs
    fpc: FpcConfig = field(default_factory=FpcConfig)
    maxmin: MaxMinConfig = field(default_factory=MaxMinConfig)
    paper_literal_g2: bool = False  # reproduce the printed surrogate denominator


@dataclass(frozen=True)
class NoiseConfig:
    psd_dbm_hz: float = -174.0
    figure_db: float = 9.0

    def variance_watts(self, bandwidth_hz):
        return dbm_to_watts(self.psd_dbm_hz + 10.0 * math.log10(bandwidth_hz) + self.figure_db)


@dataclass(frozen=True)
class AssociationConfig:
    mode: str = "cf"  # cf | uc
    uc_cluster_size: int = 10


@dataclass(frozen=True)
class EstimationConfig:
    paper_literal_b: bool = False  # keep the extra beta factor of the printed B matrix
    orthogonal_forced: bool = False  # test mode: injective pilot assignment when K <= tau_p
    condition_limit: float = 1e12


@dataclass(frozen=True)
class MonteCarloConfig:
    ub_samples: int = 10_000  # per drop; 0 disables the UB evaluation
    batch_count: int = 20  # batches for stderr estimation
    chunk: int = 2048  # samples per vectorized chunk
    literal_ub_no_log: bool = False  # published upper-bound form without the log


@dataclass(frozen=True)
class SimConfig:
    """Full simulation configuration (defaults follow the reference setup)."""

    area_side_m: float = 1000.0
    n_ap: int = 100
    n_ap_antennas: int = 4
    n_gue: int = 48
    n_uav: int = 12
    ap_height_m: float = 10.0
    gue_height_m: float = 1.65
    uav_height_range_m: tuple = (22.5, 300.0)
    ap_placement: str = "uniform"  # uniform | grid
    carrier_freq_hz: float = 1.9e9
    bandwidth_hz: float = 20e6
    antenna_spacing_m: Optional[float] = None  # None -> lambda/2
    frame: FrameConfig = field(default_factory=FrameConfig)
    power: PowerConfig = field(default_factory=PowerConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    association: AssociationConfig = field(default_factory=AssociationConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    mc: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    seed: int = 1
    drops: int = 100

    @property
    def n_users(self):
        return self.n_gue + self.n_uav

    @property
    def wavelength_m(self):
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def spacing_m(self):
        if self.antenna_spacing_m is not None:
            return self.antenna_spacing_m
        return self.wavelength_m / 2.0

    @property
    def carrier_freq_ghz(self):
        return self.carrier_freq_hz / 1e9

    @property
    def sigma_w2(self):
        """AP-side noise variance in Watts."""
        return self.noise.variance_watts(self.bandwidth_hz)

    @property
    def sigma_z2(self):
        """User-side noise variance in Watts."""
        return self.noise.variance_watts(self.bandwidth_hz)

    @property
    def train_energy_w(self):
        """Per-user pilot energy eta_k = tau_p * eta_bar."""
        return self.frame.tau_p * self.power.train_per_sample_w

    def validate(self):
        """Raise ConfigError naming the first violated field."""
        if self.area_side_m <= 0:
            raise ConfigError("must be > 0", field="area_side_m")
        if self.n_ap < 1:
            raise ConfigError("must be >= 1", field="n_ap")
        if self.n_ap_antennas < 1:
            raise ConfigError("must be >= 1", field="n_ap_antennas")
        if self.n_gue < 0 or self.n_uav < 0:
            raise ConfigError("user counts must be >= 0", field="n_gue/n_uav")
        if self.n_users < 1:
            raise ConfigError("need at least one user", field="n_gue/n_uav")
        if self.frame.tau_p < 1:
            raise ConfigError("must be >= 1", field="frame.tau_p")
        if not self.frame.tau_p < self.frame.tau_c:
            raise ConfigError(
                f"tau_p must be < tau_c (got tau_p={self.frame.tau_p}, tau_c={self.frame.tau_c})",
                field="frame.tau_p",
            )
        lo, hi = self.uav_height_range_m
        if not (0 < lo <= hi):
            raise ConfigError("range must satisfy 0 < low <= high", field="uav_height_range_m")
        if self.power.kappa is not None and not (0.0 <= self.power.kappa <= 1.0):
            raise ConfigError("must lie in [0, 1]", field="power.kappa")
        if self.power.dl not in {"ppa", "wfpa", "maxmin", "uniform"}:
            raise ConfigError(f"unknown strategy {self.power.dl!r}", field="power.dl")
        if self.power.ul not in {"fpc", "maxmin"}:
            raise ConfigError(f"unknown strategy {self.power.ul!r}", field="power.ul")
        if self.power.dl_budget_per_ap_w <= 0:
            raise ConfigError("must be > 0", field="power.dl_budget_per_ap_w")
        if self.power.ul_max_w <= 0:
            raise ConfigError("must be > 0", field="power.ul_max_w")
        if self.association.mode not in {"cf", "uc"}:
            raise ConfigError(f"unknown mode {self.association.mode!r}", field="association.mode")
        if self.association.mode == "uc" and not (
            1 <= self.association.uc_cluster_size <= self.n_ap
        ):
            raise ConfigError(
                f"must lie in [1, n_ap={self.n_ap}]", field="association.uc_cluster_size"
            )
        if self.ap_placement not in {"uniform", "grid"}:
            raise ConfigError(f"unknown placement {self.ap_placement!r}", field="ap_placement")
        if self.channel.los_phase_policy not in {"per_draw", "per_drop"}:
            raise ConfigError(
                f"unknown policy {self.channel.los_phase_policy!r}",
                field="channel.los_phase_policy",
            )
        if not (0 < self.channel.rice_clamp_eps < 1):
            raise ConfigError("must lie in (0, 1)", field="channel.rice_clamp_eps")
        if self.mc.ub_samples < 0:
            raise ConfigError("must be >= 0", field="mc.ub_samples")
        if self.drops < 1:
            raise ConfigError("must be >= 1", field="drops")
        return self


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def preset_paper():
    """Reference-scale cell-free deployment (100 APs x 4 antennas, 48 GUEs + 12 UAVs)."""
    return SimConfig()


def preset_desk(drops=50):
    """Small deployment for desk-scale runs: 25 APs, 12 GUEs + 3 UAVs."""
    return replace(
        preset_paper(),
        n_ap=25,
        n_gue=12,
        n_uav=3,
        drops=drops,
        association=AssociationConfig(mode="cf"),
    )


def preset_mmimo():
    """Multi-cell massive MIMO baseline: 4 BSs x 100 antennas on a 2x2 grid, 5 W each.

    Total antennas and total DL power match the reference cell-free deployment;
    each user is served by its strongest BS and DL power is split uniformly.
    """
    cfg = preset_paper()
    return replace(
        cfg,
        n_ap=4,
        n_ap_antennas=100,
        ap_placement="grid",
        association=AssociationConfig(mode="uc", uc_cluster_size=1),
        power=replace(cfg.power, dl_budget_per_ap_w=5.0, dl="uniform"),
    )


def preset_desk_mmimo(drops=50):
    """mMIMO baseline scaled to the desk deployment (same total antennas/power as desk CF)."""
    cfg = preset_desk(drops=drops)
    return replace(
        cfg,
        n_ap=4,
        n_ap_antennas=25,
        ap_placement="grid",
        association=AssociationConfig(mode="uc", uc_cluster_size=1),
        power=replace(cfg.power, dl_budget_per_ap_w=25 * 0.2 / 4.0, dl="uniform"),
    )


PRESETS = {
    "paper": preset_paper,
    "desk": preset_desk,
    "mmimo": preset_mmimo,
    "desk-mmimo": preset_desk_mmimo,
}


# ---------------------------------------------------------------------------
# YAML (de)serialization
# ---------------------------------------------------------------------------

def _coerce_scalar(value, ftype, path):
    """Light type coercion; also rescues YAML 1.1 floats like `1.9e9` that
    pyyaml leaves as strings (its resolver wants a signed exponent)."""
    if value is None:
        return None
    base = ftype.replace("Optional[", "").rstrip("]")
    try:
        if base == "float":
            return float(value)
        if base == "int":
            return int(value)
        if base == "bool" and not isinstance(value, bool):
            raise ValueError(f"expected a boolean, got {value!r}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field=path) from exc
    return value


def _build_dataclass(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping, got {type(data).__name__}", field=path or "<root>")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError("unknown key", field=f"{path}.{key}" if path else key)
        sub = f"{path}.{key}" if path else key
        ftype = str(known[key].type)
        target = _DATACLASS_FIELDS.get((cls, key))
        if target is not None and isinstance(value, dict):
            kwargs[key] = _build_dataclass(target, value, sub)
        elif key == "uav_height_range_m":
            if not (isinstance(value, (list, tuple)) and len(value) == 2):
                raise ConfigError("expected [low, high]", field=sub)
            kwargs[key] = (float(value[0]), float(value[1]))
        else:
            kwargs[key] = _coerce_scalar(value, ftype, sub)
    try:
        return cls(**kwargs)
    except TypeError as exc:  # missing/invalid field combos
        raise ConfigError(str(exc), field=path or cls.__name__) from exc


# nested dataclass fields that can be given as YAML mappings
_DATACLASS_FIELDS = {
    (SimConfig, "frame"): FrameConfig,
    (SimConfig, "power"): PowerConfig,
    (SimConfig, "noise"): NoiseConfig,
    (SimConfig, "association"): AssociationConfig,
    (SimConfig, "channel"): ChannelConfig,
    (SimConfig, "estimation"): EstimationConfig,
    (SimConfig, "mc"): MonteCarloConfig,
    (PowerConfig, "fpc"): FpcConfig,
    (PowerConfig, "maxmin"): MaxMinConfig,
    (ChannelConfig, "gue_gain"): LogDistanceModel,
    (ChannelConfig, "uav"): UavChannelModel,
    (UavChannelModel, "los_prob"): UavLosModel,
    (UavChannelModel, "pathloss_los"): LogDistanceModel,
    (UavChannelModel, "pathloss_nlos"): LogDistanceModel,
}


def config_from_dict(data, base=None):
    """Build a SimConfig from a (nested) dict, layered on `base` when given."""
    if base is None:
        return _build_dataclass(SimConfig, data, "")
    merged = _merge_over(config_to_dict(base), data, "")
    return _build_dataclass(SimConfig, merged, "")


def _merge_over(base_dict, overrides, path):
    out = dict(base_dict)
    for key, value in overrides.items():
        if key not in out:
            raise ConfigError("unknown key", field=f"{path}.{key}" if path else key)
        if isinstance(value, dict) and isinstance(out[key], dict):
            out[key] = _merge_over(out[key], value, f"{path}.{key}" if path else key)
        else:
            out[key] = value
    return out


def config_to_dict(cfg):
    """Dataclass tree -> plain nested dict (YAML friendly)."""

    def conv(obj):
        if is_dataclass(obj):
            return {f.name: conv(getattr(obj, f.name)) for f in fields(obj)}
        if isinstance(obj, tuple):
            return [conv(x) for x in obj]
        return obj

    return conv(cfg)


def load_config(path, base=None):
    """Load and validate a YAML config file; layers over `base` when given."""
    try:
        with open(path, "r") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc), field="config") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}", field="config") from exc
    if data is None:
        data = {}
    cfg = config_from_dict(data, base=base)
    cfg.validate()
    return cfg


def dump_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)
