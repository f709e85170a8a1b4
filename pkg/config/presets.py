"""
Named simulation designs for `fdx simulate --preset`.

Each preset is plain data.  Grid presets list one scenario dict per row
(fields of src.simharness.ScenarioConfig); the counterexample preset lists
the equicorrelation values to sweep.
"""

from config import settings

# ---------------------------------------------------------------------------
# 1. Procedure columns
# ---------------------------------------------------------------------------
INDEPENDENT_PROCEDURES = [
    "sc", "bh", "gr", "lr", "proc2_oracle", "proc2_lfdr", "proc2_pi0",
]
HIERARCHICAL_PROCEDURES = ["proc2_empnull", "gr", "gr_recentered"]


def _iid_grid(pis, mus, m=5000):
    return [
        {"name": f"iid_pi{pi}_mu{mu}", "kind": "iid", "m": m, "pi": pi, "mu": mu}
        for pi in pis for mu in mus
    ]


# ---------------------------------------------------------------------------
# 2. Presets
# ---------------------------------------------------------------------------
PRESETS = {
    "table1": {
        "scenarios":  _iid_grid([0.1, 0.2, 0.3], [-1.5, -2.0, -2.5]),
        "procedures": INDEPENDENT_PROCEDURES,
        "gamma": 0.05, "alpha": 0.05, "alpha_fdr": 0.05,
        "reps": settings.DEFAULT_REPS,
    },
    "table6": {
        "scenarios":  [{"name": "iid_pi0", "kind": "iid", "m": 5000, "pi": 0.0, "mu": -2.0}],
        "procedures": INDEPENDENT_PROCEDURES,
        "gamma": 0.05, "alpha": 0.05, "alpha_fdr": 0.05,
        "reps": 1000,
    },
    "table7": {
        "scenarios":  _iid_grid([0.1, 0.3], [-1.5, -2.5]),
        "procedures": INDEPENDENT_PROCEDURES,
        "gamma": 0.05, "alpha": 0.05, "alpha_fdr": 0.05,
        "reps": 1000,
    },
    "table2": {
        "scenarios":  [{"name": "hierarchical", "kind": "hierarchical", "m": settings.HIERARCHICAL_M}],
        "procedures": HIERARCHICAL_PROCEDURES,
        "gamma": 0.1, "alpha": 0.05, "alpha_fdr": 0.05,
        "reps": settings.DEFAULT_REPS,
    },
    "table5": {
        "rhos": [0.01, 0.1, 0.3, 0.5, 0.7, 0.9],
        "reps": settings.COUNTEREXAMPLE_RUNS,
    },
}

COUNTEREXAMPLE_PRESETS = {"table5"}
PRESET_NAMES = sorted(PRESETS) + ["custom"]
