"""A reusable quantum key: GHZ systems stored and used to encrypt qubits."""
# %%
import numpy as np

from mqrsc.channel import Network
from mqrsc.qcore import make_ghz, reduced_density
from mqrsc.qcrypt import QuantumKeySystem, encrypt_bit, establish_quantum_key, reuse_check, run_message_round

rng = np.random.default_rng(11)
key, checks = establish_quantum_key(3, 200, 0.2, Network.ideal(), None, rng)
print(f"usable systems {key.usable_length}, checks {checks.n_checks}, parity errors {checks.parity_errors}")

# %% [markdown]
# The sender CNOTs its key qubit onto a fresh qubit T holding the message bit.
# On its own T is maximally mixed whatever the bit.

# %%
for m in (0, 1):
    rho = reduced_density(encrypt_bit(QuantumKeySystem(0, make_ghz(3)), m).state, "T")
    print(f"m={m}: rho_T =\n{np.round(rho.real, 12)}")

# %%
msg = rng.integers(0, 2, 64)
for sender in range(3):
    rep = run_message_round(key, sender, msg, Network.ideal(), None, rng)
    print(f"sender {sender}: accuracy {rep.accuracy(msg)}, systems used {len(set(rep.systems_used))}")
print("min GHZ fidelity after reuse:", min(s.ghz_fidelity() for s in key.usable()))

# %%
report, key = reuse_check(key, 0.1, rng)
print(f"reuse check consumed {report.n_checks}, key now {key.usable_length}, aborted={report.aborted}")
