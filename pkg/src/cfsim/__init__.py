"""cfsim: system-level simulator for cell-free / user-centric massive MIMO
networks with ground and aerial users.

Pipeline per drop: topology -> large-scale channel -> pilot assignment ->
association -> LMMSE estimation -> power allocation -> spectral-efficiency
bounds. Campaigns aggregate per-user rates into CDF tables.
"""

__version__ = "0.1.0"

from .config import PRESETS, SimConfig, load_config  # noqa: F401
from .harness import CampaignResult, RateReport, emit_cdf, run_campaign, run_drop  # noqa: F401
