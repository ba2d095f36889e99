"""Scenario configuration: a single frozen record driving every run.

Validation collects all violations rather than stopping at the first,
so a bad config file produces one complete report. ``config_hash``
digests the canonical JSON form and is stamped into result sidecars.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

from ..channel import BlockClock
from ..estimation import td_pilot_indices, td_subband_indices

KNOWN_SCHEMES = ("ideal-dbf", "continuous", "fixed-q-td", "fixed-q-fd", "fixed-qw")
KNOWN_ESTIMATORS = ("fd", "td")
KNOWN_PRECODERS = ("svd", "mmse")


class ConfigError(ValueError):
    """Raised when a scenario fails validation; carries all violations."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid scenario config:\n" + "\n".join(f"- {v}" for v in violations))


@dataclass(frozen=True)
class ScenarioConfig:
    # geometry
    bs_position: tuple[float, float] = (2.0, 5.0)
    ue_start_positions: tuple[tuple[float, float], ...] = ((10.0, 7.0),)
    ue_velocities: tuple[tuple[float, float], ...] = ((0.0, 5.0),)
    bs_orientation: tuple[float, float] = (0.0, 1.0)
    ue_orientation: tuple[float, float] = (0.0, 1.0)
    bs_element_spacing: float = 0.5
    ue_element_spacing: float = 0.5

    # array and stream dimensions
    num_bs_antennas: int = 8
    num_ue_antennas: int = 4
    num_streams: int = 2
    num_combined: int = 3

    # propagation
    num_clusters: int = 2
    carrier_ghz: float = 28.0
    reflection_loss_db: float = 10.0
    normalize_gain: bool = True

    # wideband grid
    num_subcarriers: int = 64
    num_taps: int = 4
    effective_taps: int = 4
    num_subbands: int = 4
    sample_period_s: float = 2e-9

    # frame structure
    pilot_len: int = 4
    block_len_symbols: int = 200
    coherence_time_s: float = 10.2e-3
    beam_coherence_time_s: float = 102e-3
    num_blocks: int = 12

    # link budget (dB relative to the normalized start-of-trajectory gain)
    tx_power_db: float = 15.0
    pilot_power_db: float = 5.0

    # monte carlo
    trial_count: int = 200
    stat_draws: int = 24
    master_seed: int = 20260815

    # receiver policy
    schemes: tuple[str, ...] = KNOWN_SCHEMES
    estimator: str = "td"
    precoder: str = "svd"

    @property
    def num_users(self) -> int:
        return len(self.ue_start_positions)

    @property
    def tx_power(self) -> float:
        return 10.0 ** (self.tx_power_db / 10.0)

    @property
    def pilot_power(self) -> float:
        return 10.0 ** (self.pilot_power_db / 10.0)

    def to_dict(self) -> dict:
        blob = dataclasses.asdict(self)
        return _tuples_to_lists(blob)

    @classmethod
    def from_dict(cls, blob: dict) -> "ScenarioConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(blob) - names)
        if unknown:
            raise ConfigError([f"unknown config keys: {', '.join(unknown)}"])
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in blob:
                continue
            kwargs[f.name] = _listify(blob[f.name])
        return cls(**kwargs)


def _tuples_to_lists(value):
    if isinstance(value, dict):
        return {k: _tuples_to_lists(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_tuples_to_lists(v) for v in value]
    return value


def _listify(value):
    if isinstance(value, list):
        return tuple(_listify(v) for v in value)
    return value


def config_hash(config: ScenarioConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def load_config(path: str) -> ScenarioConfig:
    with open(path) as fh:
        blob = json.load(fh)
    return ScenarioConfig.from_dict(blob)


def save_config(config: ScenarioConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def validate(config: ScenarioConfig) -> list[str]:
    """Return every violated constraint, empty when the scenario is runnable."""
    bad: list[str] = []

    def check(ok: bool, msg: str) -> None:
        if not ok:
            bad.append(msg)

    c = config
    check(c.num_bs_antennas >= 1, "num_bs_antennas must be >= 1")
    check(c.num_ue_antennas >= 1, "num_ue_antennas must be >= 1")
    check(1 <= c.num_streams <= min(c.num_combined, c.num_bs_antennas),
          "num_streams must satisfy 1 <= num_streams <= min(num_combined, num_bs_antennas)")
    check(c.num_combined <= c.num_ue_antennas,
          "num_combined must not exceed num_ue_antennas")
    check(c.num_clusters >= 0, "num_clusters must be >= 0")
    check(c.carrier_ghz > 0, "carrier_ghz must be positive")
    check(c.sample_period_s > 0, "sample_period_s must be positive")
    check(c.num_subcarriers >= 1, "num_subcarriers must be >= 1")
    check(1 <= c.num_taps <= c.num_subcarriers,
          "num_taps must satisfy 1 <= num_taps <= num_subcarriers")
    check(c.effective_taps >= c.num_taps,
          "effective_taps must be >= num_taps so subband sounding spans the true delay spread")
    check(c.num_subbands >= 1, "num_subbands must be >= 1")
    if c.num_subbands >= 1 and c.num_subcarriers >= 1:
        check(c.num_subcarriers % c.num_subbands == 0,
              "num_subcarriers must be divisible by num_subbands")
    check(c.pilot_len >= 1, "pilot_len must be >= 1")
    check(c.block_len_symbols > c.pilot_len + c.num_users * c.num_streams,
          "block_len_symbols must exceed pilot_len + num_users * num_streams "
          "(the pilot budget would consume the block)")
    check(c.num_blocks >= 1, "num_blocks must be >= 1")
    check(c.trial_count >= 1, "trial_count must be >= 1")
    check(c.stat_draws >= 2, "stat_draws must be >= 2 (sample covariance needs it)")
    check(math.isfinite(c.tx_power_db) and math.isfinite(c.pilot_power_db),
          "powers must be finite")

    # clock: beam window must hold an integer number of blocks
    try:
        BlockClock(c.coherence_time_s, c.beam_coherence_time_s)
    except ValueError as exc:
        bad.append(str(exc))

    # users and trajectories
    users = c.num_users
    check(users >= 1, "at least one user is required")
    check(len(c.ue_velocities) == users,
          "ue_velocities must match ue_start_positions in length")
    for u, pos in enumerate(c.ue_start_positions):
        d = math.dist(pos, c.bs_position)
        check(d >= 1.0, f"user {u} starts {d:.3g} m from the BS; the path-loss model needs >= 1 m")

    check(set(c.schemes) <= set(KNOWN_SCHEMES) and len(c.schemes) >= 1,
          f"schemes must be a non-empty subset of {KNOWN_SCHEMES}")
    check(len(set(c.schemes)) == len(c.schemes), "schemes must not repeat")
    check(c.estimator in KNOWN_ESTIMATORS, f"estimator must be one of {KNOWN_ESTIMATORS}")
    check(c.precoder in KNOWN_PRECODERS, f"precoder must be one of {KNOWN_PRECODERS}")

    # pilot capacity: the per-user books always need disjoint resources
    if c.num_taps >= 1 and c.num_subcarriers >= c.num_taps:
        max_offsets = -(-c.num_subcarriers // c.num_taps)
        check(users * c.num_taps <= c.num_subcarriers,
              "num_users * num_taps must not exceed num_subcarriers")
        check(users * c.num_ue_antennas <= max_offsets,
              "num_users * num_ue_antennas tone combs exceed the "
              "ceil(num_subcarriers / num_taps) distinct offsets")

    # tone combs are only constructed when a scheme sounds in the time
    # domain; their per-offset feasibility is checked just for those
    td_used = "fixed-q-td" in c.schemes or (
        "continuous" in c.schemes and c.estimator == "td")
    if td_used and c.num_taps >= 1 and c.num_subcarriers >= c.num_taps:
        try:
            for off in range(users * c.num_ue_antennas):
                td_pilot_indices(c.num_subcarriers, c.num_taps, off)
        except ValueError as exc:
            bad.append(f"full-band tone combs infeasible: {exc}")
        if c.num_subbands >= 1 and c.num_subcarriers % max(c.num_subbands, 1) == 0 \
                and c.effective_taps >= 1:
            try:
                for off in range(users * c.num_combined):
                    td_subband_indices(c.num_subcarriers, c.num_subbands,
                                       c.effective_taps, off)
            except ValueError as exc:
                bad.append(f"subband tone combs infeasible: {exc}")

    # frequency-domain pilots must carry every simultaneous port
    needs_full_fd = "fixed-q-fd" in c.schemes or "fixed-qw" in c.schemes \
        or ("continuous" in c.schemes and c.estimator == "fd")
    if needs_full_fd:
        check(c.pilot_len >= users * c.num_ue_antennas,
              "pilot_len must be >= num_users * num_ue_antennas for "
              "frequency-domain uplink sounding")

    return bad


def ensure_valid(config: ScenarioConfig) -> ScenarioConfig:
    violations = validate(config)
    if violations:
        raise ConfigError(violations)
    return config


def desk_preset() -> ScenarioConfig:
    """Small-dimension profile sized for fast, statistically tight runs."""
    return ScenarioConfig()


def paper_vii_preset() -> ScenarioConfig:
    """Large-array profile matching the headline evaluation dimensions."""
    return ScenarioConfig(
        bs_position=(2.0, 5.0),
        ue_start_positions=((20.0, 10.0),),
        ue_velocities=((0.0, 5.0),),
        num_bs_antennas=64,
        num_ue_antennas=16,
        num_streams=3,
        num_combined=4,
        num_clusters=3,
        num_subcarriers=512,
        num_taps=6,
        effective_taps=6,
        num_subbands=8,
        sample_period_s=4e-9,
        pilot_len=16,
        num_blocks=20,
        trial_count=50,
        stat_draws=16,
    )


PRESETS = {
    "desk": desk_preset,
    "paper-vii": paper_vii_preset,
}


def preset(name: str) -> ScenarioConfig:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ConfigError([f"unknown preset {name!r}; choose from {sorted(PRESETS)}"]) from None
    return factory()
