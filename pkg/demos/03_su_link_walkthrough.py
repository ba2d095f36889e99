"""One single-user link, walked end to end.

Step 1 draws a wideband channel from the cluster geometry. Step 2 sounds
it uplink with both pilot schemes and compares their NMSE. Step 3 builds
the SVD precoder from the estimate. Step 4 runs the downlink exchange
that selects the wide combiner Q at a beam refresh. Step 5 ages the
beam: Q stays fixed while the fading redraws, the receiver re-sounds
only the combined channel, and the narrow combiner W tracks it. The
ensemble of effective channels then feeds both the per-draw rate and the
channel-hardening lower bound.

Saves demos/output/su_link_walkthrough.png.
"""

import os

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from beamlink import beamforming as bf
from beamlink import channel as ch
from beamlink import estimation as est
from beamlink import spectral_efficiency as sefx
from beamlink.harness import rng as rngs

SEED = 20260815
M_BS, K_UE = 8, 4          # antennas
N_S, N_C = 2, 3            # streams / combined ports
S, L = 64, 4               # subcarriers / taps
T_P = 4                    # pilot symbols
P_PILOT = 10.0 ** 0.5      # 5 dB
P_TX = 10.0 ** 1.5         # 15 dB
DRAWS = 400                # fading draws for the hardening ensemble

c_light = 299_792_458.0
bs_pos, ue_pos = np.array([2.0, 5.0]), np.array([10.0, 7.0])


def cluster_at_excess(excess_m, t):
    los = np.linalg.norm(ue_pos - bs_pos)
    a = (los + excess_m) / 2.0
    b = np.sqrt(a**2 - (los / 2.0) ** 2)
    u_hat = (ue_pos - bs_pos) / los
    v_hat = np.array([-u_hat[1], u_hat[0]])
    return (bs_pos + ue_pos) / 2.0 + a * np.cos(t) * u_hat + b * np.sin(t) * v_hat


# ---- step 1: geometry and a stack of fading draws ------------------------
clusters = np.array([cluster_at_excess(1.0 * c_light * 2e-9, 1.9),
                     cluster_at_excess(2.0 * c_light * 2e-9, 1.1)])
geometry = ch.build_geometry(bs_pos, ue_pos, clusters, 2e-9, L, 28.0)
bs_array = ch.ArrayGeometry(M_BS)
ue_array = ch.ArrayGeometry(K_UE)

rng = rngs.stream(SEED, purpose=99)


def draw_channels(n):
    out = np.empty((n, S, K_UE, M_BS), dtype=complex)
    for i in range(n):
        alphas = ch.draw_small_scale(geometry, rng)
        taps = ch.build_tap_channel(geometry, alphas, ue_array, bs_array, L)
        out[i] = np.moveaxis(ch.assemble_freq_channel(taps, S).per_subcarrier, -1, 0)
    return out


h_win = draw_channels(1)[0]                      # the refresh-block realization
gain = np.sqrt(np.mean(np.abs(h_win) ** 2))      # SNR knobs are relative to this
h_win = h_win / gain
print(f"step 1: channel stack {h_win.shape} (subcarriers, UE ants, BS ants), "
      f"mean gain normalized from {20 * np.log10(gain):.1f} dB to 0 dB")

# ---- step 2: uplink sounding, both estimators on one noise field ---------
book = est.make_pilot_books(K_UE, N_C, N_S, T_P, S, L)
noise_ul = rngs.complex_normal(rng, (S, M_BS, T_P))

h_fd = est.fd_uplink_estimate(h_win, book.uplink_full, P_PILOT, noise_ul)
plan_full = est.TdCombPlan(S, L, book.td_offsets)
h_td = plan_full.estimate(h_win, P_PILOT, noise_ul)
print(f"step 2: FD NMSE {est.nmse(h_fd, h_win):6.2f} dB "
      f"({T_P * S} pilot symbols), TD NMSE {est.nmse(h_td, h_win):6.2f} dB "
      f"({T_P * L} pilot symbols)")

# ---- step 3: SVD precoder from the TD estimate ---------------------------
f_win, powers, levels = bf.svd_precoder_batch(h_td, N_S, P_TX)
print(f"step 3: precoder stack {f_win.shape}; subcarrier 0 stream powers "
      f"{np.round(powers[0], 3)} (budget {P_TX:.2f})")

# ---- step 4: downlink exchange selects the wide combiner Q ---------------
phi_dl = book.downlink
b_true = h_win @ f_win
noise_dl = rngs.complex_normal(rng, b_true.shape)
b_hat = ((np.sqrt(N_S) * (b_true @ phi_dl) + noise_dl) @ phi_dl.conj().T) / np.sqrt(N_S)
q = bf.select_first_stage(b_hat, N_C)
e_refresh = np.swapaxes(q, -1, -2).conj() @ b_true  # W = selector rows of this
rate_refresh = sefx.perfect_rate_from_effective(e_refresh[..., :N_S, :])
print(f"step 4: Q stack {q.shape}; refresh-block rate "
      f"{np.mean(rate_refresh):.2f} bit/s/Hz per subcarrier")

# ---- step 5: age the beam, re-sound only the combined channel ------------
h_aged = draw_channels(DRAWS) / gain
g = np.einsum("skc,nskm->nscm", q.conj(), h_aged)

plan_eff = est.TdCombPlan(S, L, book.td_effective_offsets)
g_hat = plan_eff.estimate(g, P_PILOT, rngs.complex_normal(rng, (DRAWS, S, M_BS, T_P)))
f_aged, _, _ = bf.svd_precoder_batch(g_hat, N_S, P_TX)

d_true = g @ f_aged
qh_noise = np.einsum("skc,nskj->nscj", q.conj(),
                     rngs.complex_normal(rng, (DRAWS, S, K_UE, N_S)))
d_hat = ((np.sqrt(N_S) * (d_true @ phi_dl) + qh_noise) @ phi_dl.conj().T) / np.sqrt(N_S)
w = bf.update_second_stage(d_hat, N_S)

e_aged = np.swapaxes(w, -1, -2).conj() @ (g @ f_aged)   # (n, S, N_s, N_s)
per_draw = sefx.perfect_rate_from_effective(e_aged)     # (n, S)
uatf = sefx.uatf_su_rate(sefx.effective_stats(e_aged))  # (S,)
print(f"step 5: {DRAWS} aged draws; mean per-draw rate "
      f"{np.mean(per_draw):.2f}, hardening bound {np.mean(uatf):.2f} bit/s/Hz")

# Genie reference on the same draws: full CSI, per-draw Q, W, F.
f_g, _, _ = bf.svd_precoder_batch(h_aged, N_S, P_TX)
b_g = h_aged @ f_g
q_g = bf.select_first_stage(b_g, N_C)
w_g = bf.update_second_stage(np.swapaxes(q_g, -1, -2).conj() @ b_g, N_S)
e_g = np.swapaxes(q_g @ w_g, -1, -2).conj() @ b_g
genie = sefx.perfect_rate_from_effective(e_g)

# Overhead-weighted SE: the genie spends nothing on pilots.
rho_td = sefx.overhead_rho(sefx.OverheadModel.time_domain(T_P, N_S, 200, L, S))
rho_fd = sefx.overhead_rho(sefx.OverheadModel.frequency_domain(T_P, N_S, 200))
print(f"\noverhead factors: td {rho_td:.5f}, fd {rho_fd:.5f}")
print(f"SE, genie:              {np.mean(genie):6.2f} bit/s/Hz")
print(f"SE, two-stage hardened: {rho_td * np.mean(uatf):6.2f} bit/s/Hz")

fig, ax = plt.subplots(figsize=(6.8, 4.4))
nu = np.arange(S)
ax.plot(nu, np.mean(genie, axis=0), color="tab:green", label="genie, mean per-draw")
ax.plot(nu, np.mean(per_draw, axis=0), color="tab:blue",
        label="two-stage, mean per-draw")
ax.plot(nu, uatf, color="tab:red", ls="--", label="two-stage, hardening bound")
ax.set_xlabel("subcarrier")
ax.set_ylabel("rate (bit/s/Hz)")
ax.set_title(f"aged beam, {DRAWS} fading draws")
ax.grid(alpha=0.3)
ax.legend()
fig.tight_layout()

out_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), "output")
os.makedirs(out_dir, exist_ok=True)
png = os.path.join(out_dir, "su_link_walkthrough.png")
fig.savefig(png, dpi=130)
print(f"\nwrote {png}")
