"""
Experiment presets
Each preset has a desk-scale variant (CI-sized) and a paper-scale variant
"""

from typing import Any, Dict

from sselab.core.exceptions import ConfigurationError

_DYADIC_STEPS = tuple(2.0 ** -j for j in range(2, 7))

_DESK = {"modes": 2 ** 6, "reference_step": 2.0 ** -11}

PRESETS: Dict[str, Dict[str, Any]] = {
    "fig1_linear_additive": {
        "subcommand": "strong-error",
        "common": {
            "exponent": 8.0, "initial": "zero", "potential": "none", "noise": "additive",
            "horizon": 0.5, "steps": _DYADIC_STEPS, "schemes": ("SEXP", "MP", "BEM"),
        },
        "desk": {**_DESK, "samples": 2000, "reference_scheme": "SEXP"},
        "paper": {"modes": 2 ** 8, "samples": 750000, "reference_step": 2.0 ** -10,
                  "reference_scheme": "MP"},
    },
    "fig2_energy_trace": {
        "subcommand": "trace",
        "common": {
            "exponent": 8.0, "initial": "zero", "potential": "none", "noise": "additive",
            "steps": (0.1,), "schemes": ("SEXP", "MP", "BEM"), "observable": "energy",
        },
        "desk": {"modes": 2 ** 6, "samples": 5000, "horizon": 10.0},
        "paper": {"modes": 2 ** 7, "samples": 10000, "horizon": 2500.0},
    },
    "fig3_mass_trace": {
        "subcommand": "trace",
        "common": {
            "exponent": 2.0, "initial": "zero", "potential": "none", "noise": "additive",
            "horizon": 10.0, "steps": (0.1,), "schemes": ("SEXP", "MP", "BEM"),
            "observable": "mass",
        },
        "desk": {"modes": 2 ** 6, "samples": 5000},
        "paper": {"modes": 2 ** 7, "samples": 10000},
    },
    "fig4_potential_error": {
        "subcommand": "strong-error",
        "common": {
            "exponent": 6.0, "initial": "bump", "potential": "bounded", "noise": "additive",
            "horizon": 0.5, "steps": _DYADIC_STEPS, "schemes": ("SEXP", "CN", "SEM"),
            "reference_scheme": "SEXP",
        },
        "desk": {**_DESK, "samples": 2000},
        "paper": {"modes": 2 ** 8, "samples": 750000, "reference_step": 2.0 ** -9},
    },
    "fig5_potential_mass": {
        "subcommand": "trace",
        "common": {
            "exponent": 2.0, "initial": "bump", "potential": "bounded", "noise": "additive",
            "horizon": 5.0, "schemes": ("SEXP", "CN", "SEM"), "observable": "mass",
        },
        # k and k/2 on shared paths expose the O(k) mass defect
        "desk": {"modes": 2 ** 6, "samples": 5000, "steps": (0.1, 0.05)},
        "paper": {"modes": 2 ** 7, "samples": 10000, "steps": (0.1,)},
    },
    "fig6_multiplicative_error": {
        "subcommand": "strong-error",
        "common": {
            "exponent": 5.1, "initial": "gaussian", "potential": "none",
            "noise": "multiplicative", "horizon": 0.5, "steps": _DYADIC_STEPS,
            "schemes": ("SEXP", "CN", "SEM"), "reference_scheme": "SEXP",
        },
        "desk": {**_DESK, "samples": 2000},
        "paper": {"modes": 2 ** 8, "samples": 750000, "reference_step": 2.0 ** -10},
    },
    "scalar_drift": {
        "subcommand": "scalar-test",
        # mode n = 1 of the linear problem: a = -n², b = λ_1^{1/2}
        "common": {"a": -1.0, "b": 1.0, "m0": 0.0, "k": 0.1},
        "desk": {"n_steps": 100},
        "paper": {"n_steps": 25000},
    },
}

DEFAULT_SEED = 20130601


def preset_values(name: str, scale: str) -> Dict[str, Any]:
    """Flat key-value settings of a preset at the given scale"""
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown preset '{name}', expected one of {sorted(PRESETS)}",
                                 key="preset") from None
    if scale not in ("desk", "paper"):
        raise ConfigurationError(f"unknown scale '{scale}', expected desk or paper", key="scale")
    values = {"subcommand": preset["subcommand"], "seed": DEFAULT_SEED}
    values.update(preset["common"])
    values.update(preset[scale])
    return values
