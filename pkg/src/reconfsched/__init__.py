"""Scheduling with reconfiguration delay: adaptive policies, baselines and a slotted simulator."""

from .core import ContractError, HysteresisFn, Schedule, WeightFn, weight
from .engine import SimParams, Trace, duty_cycle, lemma1_checker, run, run_reference
from .metrics import RunMetrics, stability_verdict, summarize
from .policies import PolicySpec, amw, check_gf_admissibility, dwell_bound, make_policy
from .traffic import load, nonuniform_rates, uniform_rates

__version__ = "0.1.0"

__all__ = [
    "ContractError", "HysteresisFn", "Schedule", "WeightFn", "weight",
    "SimParams", "Trace", "duty_cycle", "lemma1_checker", "run", "run_reference",
    "RunMetrics", "stability_verdict", "summarize",
    "PolicySpec", "amw", "check_gf_admissibility", "dwell_bound", "make_policy",
    "load", "nonuniform_rates", "uniform_rates",
]
