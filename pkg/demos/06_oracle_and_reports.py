"""Cross-check the engine against exhaustive enumeration, then run a scenario file."""
# %%
from pathlib import Path

from mqrsc.harness import emit_report, load_scenario, oracle_tables, run_trials

report = oracle_tables(4)
print(report.render())

# %%
scenario = Path(__file__).resolve().parent.parent / "scenarios" / "keygen_m5_lossy.toml"
stats = run_trials(load_scenario(scenario, {"trials": 3}))
print(emit_report(stats, "text"))
