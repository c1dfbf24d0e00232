"""GHZ-based multiparty secret conference simulator."""
from .adversary import AttackStrategy
from .channel import ClassicalBus, DetectorConfig, LinkConfig, Network
from .harness import ScenarioConfig, load_scenario, run_trials
from .keyconf import Scheme1Config, run_key_agreement, run_secret_conference
from .qcore import Basis, InvariantViolation, StateVector, make_ghz
from .qcrypt import QuantumKey, establish_quantum_key, reuse_check, run_message_round

__all__ = [
    "AttackStrategy",
    "Basis",
    "ClassicalBus",
    "DetectorConfig",
    "InvariantViolation",
    "LinkConfig",
    "Network",
    "QuantumKey",
    "ScenarioConfig",
    "Scheme1Config",
    "StateVector",
    "establish_quantum_key",
    "load_scenario",
    "make_ghz",
    "reuse_check",
    "run_key_agreement",
    "run_message_round",
    "run_secret_conference",
    "run_trials",
]
