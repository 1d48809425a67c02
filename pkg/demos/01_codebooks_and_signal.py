# %% [markdown]
# # Codebooks and the received signal
#
# A walk through the transmitter side: the sparse mapping matrix, the codebook
# set built on top of it, and one frame of superposed preamble and data.

# %%
import numpy as np

from gfscma.airlink import ScenarioConfig, frame_streams, sample_batch
from gfscma.models import gen_independent_preambles
from gfscma.scma_core import build_codebook_set, build_mapping_matrix, encode_block

# %% [markdown]
# Six layers share four resource elements, two per layer. Columns are the
# 2-subsets of {0, 1, 2, 3} in lexicographic order.

# %%
mapping = build_mapping_matrix(K_d=4, J=6, N_m=2)
print(mapping.entries)
print("overloading", mapping.overloading)

# %%
cbs = build_codebook_set(mapping, M=4)
print("codebook shape (J, M, K_d):", cbs.codewords.shape)
print("layer 3, bits 10 ->", np.round(encode_block(cbs, 3, [1, 0]), 3))

# %% [markdown]
# A desk-sized scenario: 12 users, two per codebook, 8-symbol preambles.

# %%
sc = ScenarioConfig(N=12, J=6, L=2, K_p=8, K_d=4, N_d=4, activity_prob=0.25)
preambles = gen_independent_preambles(sc.N, sc.K_p, "qpsk", seed=0)
batch = sample_batch(sc, cbs, snr_db=10.0, size=3, streams=frame_streams(0, 0))
frame = batch.frame(preambles)
for b in range(3):
    print("active users", np.flatnonzero(batch.delta[b]), "|y_p|^2 =", round(float(np.sum(abs(frame.y_p[b]) ** 2)), 3))

# %% [markdown]
# The same batch seen through a different preamble set keeps its activity,
# channel and noise draws, which is what makes comparisons between designs paired.

# %%
other = batch.frame(gen_independent_preambles(sc.N, sc.K_p, "gaussian", seed=1))
print(np.allclose(frame.y_d, other.y_d))
