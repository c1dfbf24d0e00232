"""GHZ key agreement among three parties over an ideal network."""
# %%
import numpy as np

from mqrsc.channel import Network
from mqrsc.keyconf import RoundClass, Scheme1Config, run_key_agreement

rng = np.random.default_rng(2024)
cfg = Scheme1Config(M=3, rounds=20_000, sample_ratio=0.054)
print(f"X-basis probability p = {cfg.p:.4f}")
print(f"predicted raw-key rate = {cfg.predicted_rate(Network.ideal()):.4f}")

# %% [markdown]
# Every round: party A prepares a GHZ_3 state and keeps one particle.
# The other two particles go to B and C. All three pick Z or X and announce
# their choice. Rounds where everyone picked Z are candidate key bits.
# Rounds where everyone picked X are parity samples.

# %%
res = run_key_agreement(cfg, Network.ideal(), None, rng)
b = res.batch
for cls in RoundClass:
    print(f"{cls.name:<26} {b.count(cls):>6}")
print(f"empirical kept-Z rate = {b.count(RoundClass.KEPT_Z) / b.n:.4f}")

# %%
print("error estimate:", res.report)
print("decision:", res.decision)
keys = res.keys
print("raw key length:", keys[0].size)
print("first 32 bits of each party:")
for party, k in zip("ABC", keys):
    print(f"  {party}: {''.join(map(str, k[:32]))}")
assert all(np.array_equal(k, keys[0]) for k in keys)
