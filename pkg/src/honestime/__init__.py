"""Exact and Monte Carlo checks for progressive enlargement with honest times."""

from .corpus import FIXTURES, Scenario, fixture, random_corpus, random_scenario
from .enlargement import check_assumptions, enlarge, is_honest, survival_bundle
from .space import FiniteFilteredSpace, Rational, ValidationError, cond_expect, is_martingale

__all__ = [
    "FIXTURES",
    "FiniteFilteredSpace",
    "Rational",
    "Scenario",
    "ValidationError",
    "check_assumptions",
    "cond_expect",
    "enlarge",
    "fixture",
    "is_honest",
    "is_martingale",
    "random_corpus",
    "random_scenario",
    "survival_bundle",
]
