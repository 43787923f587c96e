"""Writes the bundled scenario files."""
import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "scenarios"

Q_MAX = 15.0


def home(i, generation):
    return {
        "id": f"home{i:02d}",
        "battery": {
            "alpha": 0.9 ** (1 / 24),
            "beta": 0.9,
            "q_max": Q_MAX,
            "s_eff_min": -0.7 * Q_MAX,
            "s_eff_max": 0.7 * Q_MAX,
        },
        "flex": {"e_min": 0.2, "e_max": 4.0, "l_max": 12.0, "gamma1": 0.02, "gamma2": 0.002},
        "has_generation": generation,
    }


def base(name):
    return {
        "name": name,
        "steps": 48,
        "horizon": 24,
        "prosumers": [home(i, i % 2 == 0) for i in range(10)],
        "initial_states": [{"zeta": 0.0, "q": 0.0} for _ in range(10)],
        "profiles": {"synthetic": {"seed": 2019, "passive_consumers": 5}},
        "prices": {"peak": {"rho1": 0.015, "rho2": 0.05, "multiplier": 2.0, "windows": [[6, 10], [18, 22]]}},
        "aggregate_limits": {"constant": {"l_min": 0.0, "l_max": 60.0}},
        "shift_bounds": {"daily": {"midnight": 1.0}},
        "solver": {"algorithm": "direct", "tol": 1e-8},
    }


peak = base("ny_peak_shaving")
dist = base("disturbance_60pct")
dist["aggregate_limits"] = {"constant": {"l_min": 0.0, "l_max": 25.0}}
dist["disturbances"] = [
    {"kind": "aggregate_limit_scale", "start": 25, "duration": 5, "magnitude": 0.4, "visibility": "unforeseen"}
]
for s in (peak, dist):
    (OUT / f"{s['name']}.json").write_text(json.dumps(s, indent=2) + "\n")
