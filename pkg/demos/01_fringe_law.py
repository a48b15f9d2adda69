"""
Single-photon interference in cascaded AMZs
============================================

A pulse entering Alice's asymmetric Mach-Zehnder leaves as an early/late
pair.  Bob's matched AMZ splits each of those again, so three time slots
arrive at his outputs.  Only the middle slot interferes.
"""

# %%
import math

import numpy as np

from timebin_qkd.optics import (PORT_A, PORT_B, AmzParams, SourceParams, apply_amz,
                                slot_probabilities, source_pulse_pair)

lossless = AmzParams(insertion_loss_dB=0.0)
dphi = np.linspace(0, 2 * math.pi, 181)
probs = np.array([
    slot_probabilities(apply_amz(source_pulse_pair(SourceParams(),
                                                   AmzParams(insertion_loss_dB=0.0,
                                                             phase_rad=d)),
                                 lossless))
    for d in dphi
])

# %%
# The side slots carry 1/8 per port whatever the phase; the middle slot
# follows (1 +- cos) / 4 and always holds half of the photons.
print("side slots (min, max):", probs[:, [0, 2]].min(), probs[:, [0, 2]].max())
print("middle slot sum (min, max):", probs[:, 1].sum(axis=1).min(), probs[:, 1].sum(axis=1).max())
print("max deviation from fringe law:",
      np.abs(probs[:, 1, PORT_A] - (1 + np.cos(dphi)) / 4).max())

# %%
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, ax = plt.subplots()
    ax.plot(dphi, probs[:, 1, PORT_A], label="middle slot, port A")
    ax.plot(dphi, probs[:, 1, PORT_B], label="middle slot, port B")
    ax.plot(dphi, probs[:, 0, PORT_A], "--", label="early slot, port A")
    ax.set_xlabel("phase difference (rad)")
    ax.set_ylabel("probability")
    ax.legend()
    fig.savefig("fringe_law.png", dpi=120)
