"""Monte Carlo harness: configs, keyed draws, runners, results, CLI."""

from .config import (ConfigError, ScenarioConfig, config_hash, desk_preset,
                     ensure_valid, load_config, paper_vii_preset, preset,
                     save_config, validate)
from .engine import POLICIES, SchemePolicy, block_one_se, run_trajectory
from .results import (RunningStats, RunResult, result_from_json_dict,
                      result_to_csv, result_to_json, result_to_json_dict,
                      write_result)
from .runners import (DEFAULT_NMSE_SNR_DB, DEFAULT_SE_SNR_DB,
                      run_mu_trajectory, run_nmse_sweep, run_se_vs_snr,
                      run_su_trajectory)

__all__ = [
    "ConfigError", "ScenarioConfig", "config_hash", "desk_preset",
    "ensure_valid", "load_config", "paper_vii_preset", "preset",
    "save_config", "validate", "POLICIES", "SchemePolicy", "block_one_se",
    "run_trajectory", "RunningStats", "RunResult", "result_from_json_dict",
    "result_to_csv", "result_to_json", "result_to_json_dict", "write_result",
    "DEFAULT_NMSE_SNR_DB", "DEFAULT_SE_SNR_DB", "run_mu_trajectory",
    "run_nmse_sweep", "run_se_vs_snr", "run_su_trajectory",
]
