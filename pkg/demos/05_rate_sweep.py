"""Predicted against empirical raw-key rate over a small parameter grid."""
# %%
from mqrsc.harness import parse_scenario, render_sweep_csv, run_sweep

cfg = parse_scenario(
    {
        "scheme": 1, "M": 3, "seed": 5, "rounds": 50_000,
        "sweep": {"M": [3, 4, 5], "sample_ratio": [0.054, 0.5], "p_t": [1.0, 0.9], "p_d": [0.8]},
    }
)  # fmt: skip
cells = run_sweep(cfg)
print(render_sweep_csv(cells))
print(f"{sum(c.within_3sigma for c in cells)}/{len(cells)} cells within 3 sigma")
