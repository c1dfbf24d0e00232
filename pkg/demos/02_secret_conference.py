"""One-time-pad conference on top of a freshly agreed key."""
# %%
import numpy as np

from mqrsc.adversary import mutual_information
from mqrsc.channel import Network
from mqrsc.keyconf import Scheme1Config, run_key_agreement, run_secret_conference

rng = np.random.default_rng(7)
res = run_key_agreement(Scheme1Config(M=4, rounds=5_000, sample_ratio=0.054), Network.ideal(), None, rng)
print("shared key bits:", res.keys[0].size)

# %% [markdown]
# Each sender gets its own contiguous key segment, allocated in party order.
# Everyone else decrypts the broadcast ciphertext with the same segment.

# %%
messages = {s: rng.integers(0, 2, 16, dtype=np.uint8) for s in range(4)}
conf = run_secret_conference(res.keys, messages)
print("segments:", conf.segments, "consumed:", conf.consumed)
for r, got in conf.recovered.items():
    ok = all(np.array_equal(got[s], messages[s]) for s in got)
    print(f"party {r} decoded {len(got)} messages correctly: {ok}")

# %%
# the ciphertext on its own says nothing about the plaintext
key = rng.integers(0, 2, 50_000, dtype=np.uint8)
msg = rng.integers(0, 2, 50_000, dtype=np.uint8)
ct = run_secret_conference([key] * 3, {0: msg}).ciphertexts[0]
print(f"I(ciphertext; plaintext) = {mutual_information(ct, msg):.2e} bits")
