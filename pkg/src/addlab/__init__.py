"""Numerical laboratory for large deviations of strongly additive functions."""

from .arith import (AdditiveFunction, PrimeStats, TailTable, additive_values, empirical_tail, frac_alpha,
                    load_table, mean_value_direct, omega, prime_cdf, prime_stats, scaled, sieve_primes, table,
                    truncated_tail)
from .errors import (ConfigError, DomainError, NumericError, PrecisionWarning, PreconditionError, RangeError,
                     ResourceError)
from .psi import PsiDistribution, atom, lattice_detect, psi_from_prime_data, uniform

__all__ = [
    "AdditiveFunction", "PrimeStats", "TailTable", "additive_values", "empirical_tail", "frac_alpha",
    "load_table", "mean_value_direct", "omega", "prime_cdf", "prime_stats", "scaled", "sieve_primes", "table",
    "truncated_tail", "ConfigError", "DomainError", "NumericError", "PrecisionWarning", "PreconditionError",
    "RangeError", "ResourceError", "PsiDistribution", "atom", "lattice_detect", "psi_from_prime_data", "uniform",
]
