# Single-user trajectory: how the five receiver policies age between
# beam refreshes. The user moves along a straight line; Q is rebuilt at
# every beam-coherence boundary (every 10 blocks on this profile) and the
# curves show what each policy loses between refreshes.
#
# Runtime is about half a minute at 40 trials. Saves
# demos/output/su_trajectory.png and the CSV curve.

import dataclasses
import os
import time

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from beamlink.harness import config as cfgmod
from beamlink.harness import results, runners

TRIALS = 40

STYLE = {
    "ideal-dbf": dict(color="black", ls="--"),
    "continuous": dict(color="tab:green"),
    "fixed-q-td": dict(color="tab:blue"),
    "fixed-q-fd": dict(color="tab:orange"),
    "fixed-qw": dict(color="tab:red"),
}

cfg = dataclasses.replace(cfgmod.desk_preset(), trial_count=TRIALS)
print(f"profile: {cfg.num_bs_antennas}x{cfg.num_ue_antennas} antennas, "
      f"{cfg.num_streams} streams via {cfg.num_combined} combined ports, "
      f"S={cfg.num_subcarriers}, {TRIALS} trials x {cfg.num_blocks} blocks")

t0 = time.time()
result = runners.run_su_trajectory(cfg)
print(f"run took {time.time() - t0:.1f} s "
      f"(draw digest {result.metadata['draw_digest'][:12]}...)")

t_ms = result.x_values * 1e3
window_ms = cfg.beam_coherence_time_s * 1e3

fig, ax = plt.subplots(figsize=(7.2, 4.6))
for name, stats in result.series.items():
    ax.errorbar(t_ms, stats.mean, yerr=2 * stats.stderr, capsize=2,
                lw=1.4, label=name, **STYLE[name])
ax.axvline(window_ms, color="gray", lw=0.8, ls=":",
           label="beam refresh boundary")
ax.set_xlabel("block start time (ms)")
ax.set_ylabel("spectral efficiency (bit/s/Hz)")
ax.set_title(f"policy aging over one beam window, {TRIALS} trials (mean +/- 2 SE)")
ax.grid(alpha=0.3)
ax.legend(loc="center left", fontsize=8)
fig.tight_layout()

print("\nscheme          | first block | last pre-refresh | post-refresh")
for name, stats in result.series.items():
    print(f"{name:15s} | {stats.mean[0]:11.2f} | {stats.mean[9]:16.2f} "
          f"| {stats.mean[10]:13.2f}")

out_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), "output")
os.makedirs(out_dir, exist_ok=True)
png = os.path.join(out_dir, "su_trajectory.png")
fig.savefig(png, dpi=130)
written = results.write_result(result, os.path.join(out_dir, "su_trajectory.csv"))
print(f"\nwrote {png}")
for path in written:
    print(f"wrote {path}")
