"""Small configs for every CLI subcommand, each running in well under a second."""

LATTICE = {"kind": "lattice", "d": 2, "radius": 6, "boundary": "absorbing"}
GROWTH_RATES = {"lambda_aa": 2.0, "lambda_ad": 2.0, "lambda_da": 2.0, "lambda_dd": 0.0, "delta": 0.0, "sigma": 1.0}
PARETO = {"kind": "pareto", "alpha": 0.5, "xm": 1.0}

SMALL = {
    "simulate": {"kind": "growth", "topology": LATTICE, "rates": GROWTH_RATES, "wake_law": PARETO,
                 "horizon": 30, "checkpoints": [3, 30], "max_radius": 12, "replicas": 2},
    "survival": {"kind": "survival", "topology": {"kind": "complete", "n": 3},
                 "rates": {**GROWTH_RATES, "lambda_dd": 1.0, "delta": 1.0},
                 "wake_law": {"kind": "pareto", "alpha": 0.8, "xm": 1.0}, "times": [5, 10], "replicas": 5},
    "dl-check": {"kind": "dl", "alpha": 0.5, "t": 100, "replicas": 300},
    "gap-check": {"kind": "gap", "alpha": 0.5, "times": [100, 1000], "eps": 0.25, "replicas": 300},
    "percolate": {"kind": "percolation", "d": 2, "p": 0.1, "n": 30, "replicas": 2},
    "coupling-check": {"kind": "coupling", "topology": {**LATTICE, "radius": 10}, "rates": GROWTH_RATES,
                       "wake_law": PARETO, "horizon": 3000, "p_c": 0.95, "replicas": 2},
    "recursion": {"kind": "recursion", "alpha": 0.8, "V_size": 3, "steps": 50, "replicas": 3},
}
