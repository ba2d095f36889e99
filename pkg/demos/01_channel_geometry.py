# =============================================================================
# Geometric wideband channel walkthrough
# =============================================================================
# Builds one BS-UE link with two single-bounce clusters, shows where each
# bounce delay lands on the tap grid, and assembles the frequency response
# seen by the two uniform linear arrays. Saves a scene + response figure to
# demos/output/channel_geometry.png.

import os

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from beamlink import channel as ch

# =============================================================================
# Scene parameters
# =============================================================================
BS_POS = np.array([2.0, 5.0])       # base station position (m)
UE_POS = np.array([10.0, 7.0])      # user position (m)
CARRIER_GHZ = 28.0                  # carrier frequency
SAMPLE_PERIOD = 2e-9                # tap spacing Ts (s)
NUM_TAPS = 4                        # delay budget L
NUM_SUBCARRIERS = 64                # grid size S
M_BS = 8                            # BS antennas
K_UE = 4                            # UE antennas
SEED = 7

C = 299_792_458.0


def cluster_at_excess(bs, ue, excess_m, t):
    """A reflector whose bounce length exceeds the LOS length by excess_m.

    All such points lie on an ellipse with foci at the BS and UE; t picks
    the point (t = pi/2 is the broadside-most one).
    """
    los = np.linalg.norm(ue - bs)
    a = (los + excess_m) / 2.0
    b = np.sqrt(a**2 - (los / 2.0) ** 2)
    center = (bs + ue) / 2.0
    u_hat = (ue - bs) / los
    v_hat = np.array([-u_hat[1], u_hat[0]])
    return center + a * np.cos(t) * u_hat + b * np.sin(t) * v_hat


# =============================================================================
# Build the propagation geometry
# =============================================================================
# Place the reflectors so their excess delays quantize to taps 1 and 2.
clusters = np.array([
    cluster_at_excess(BS_POS, UE_POS, 1.0 * C * SAMPLE_PERIOD, 1.9),
    cluster_at_excess(BS_POS, UE_POS, 2.0 * C * SAMPLE_PERIOD, 1.1),
])

geometry = ch.build_geometry(
    BS_POS, UE_POS, clusters, SAMPLE_PERIOD, NUM_TAPS, CARRIER_GHZ
)

print(f"LOS distance: {np.linalg.norm(UE_POS - BS_POS):.3f} m")
print(f"paths kept: {geometry.num_paths}, dropped: {geometry.dropped_paths}")
for i, path in enumerate(geometry.paths):
    kind = "LOS" if path.is_los else "bounce"
    print(
        f"  path {i} ({kind:6s}): tap {path.tap_index}, "
        f"power {10 * np.log10(path.tap_power):8.2f} dB, "
        f"AoD {np.degrees(path.aod):7.2f} deg, AoA {np.degrees(path.aoa):7.2f} deg"
    )

# =============================================================================
# One small-scale realization and its frequency response
# =============================================================================
rng = np.random.default_rng(SEED)
bs_array = ch.ArrayGeometry(num_elements=M_BS)
ue_array = ch.ArrayGeometry(num_elements=K_UE)

alphas = ch.draw_small_scale(geometry, rng)
tap_channel = ch.build_tap_channel(geometry, alphas, ue_array, bs_array, NUM_TAPS)
freq = ch.assemble_freq_channel(tap_channel, NUM_SUBCARRIERS)

tap_energy = np.sum(np.abs(tap_channel.taps) ** 2, axis=(0, 1))
print("\nper-tap energy (dB, summed over antenna pairs):")
for l, e in enumerate(tap_energy):
    bar = "#" * int(max(0.0, 10 * np.log10(e + 1e-30) + 70) // 2)
    print(f"  tap {l}: {10 * np.log10(e + 1e-30):8.2f} dB  {bar}")

h = freq.per_subcarrier  # (K, M, S), subcarrier-last
print(f"\nfrequency response tensor: {h.shape} (UE ants, BS ants, subcarriers)")

# =============================================================================
# Figure: scene on the left, response magnitude on the right
# =============================================================================
fig, (ax_scene, ax_freq) = plt.subplots(1, 2, figsize=(11, 4.2))

ax_scene.scatter(*BS_POS, marker="^", s=90, color="tab:blue", zorder=3, label="BS")
ax_scene.scatter(*UE_POS, marker="o", s=70, color="tab:green", zorder=3, label="UE")
ax_scene.scatter(clusters[:, 0], clusters[:, 1], marker="x", s=70,
                 color="tab:red", zorder=3, label="clusters")
ax_scene.plot([BS_POS[0], UE_POS[0]], [BS_POS[1], UE_POS[1]],
              color="tab:green", lw=1.0, label="LOS")
for c in clusters:
    ax_scene.plot([BS_POS[0], c[0], UE_POS[0]], [BS_POS[1], c[1], UE_POS[1]],
                  color="tab:red", lw=0.8, ls="--")
ax_scene.set_xlabel("x (m)")
ax_scene.set_ylabel("y (m)")
ax_scene.set_title("scene")
ax_scene.legend(loc="best", fontsize=8)
ax_scene.set_aspect("equal")

nu = np.arange(NUM_SUBCARRIERS)
for (k, m) in [(0, 0), (1, 3), (3, 7)]:
    ax_freq.plot(nu, 20 * np.log10(np.abs(h[k, m, :])),
                 lw=1.0, label=f"UE ant {k}, BS ant {m}")
ax_freq.set_xlabel("subcarrier")
ax_freq.set_ylabel("|H| (dB)")
ax_freq.set_title("wideband response, one fading draw")
ax_freq.legend(loc="best", fontsize=8)
ax_freq.grid(alpha=0.3)

fig.tight_layout()
out_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), "output")
os.makedirs(out_dir, exist_ok=True)
out_path = os.path.join(out_dir, "channel_geometry.png")
fig.savefig(out_path, dpi=130)
print(f"\nwrote {out_path}")
