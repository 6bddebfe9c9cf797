"""Exact desk-scale laboratory for additivity of plain Kolmogorov complexity."""

from .bitcodec import (condition_encode, nat_to_bits, bits_to_nat, pair_decode, pair_encode,
                       selfdelim_decode, selfdelim_encode)
from .enumerator import INFINITY, ComplexityTable, build_table, load_cache, save_cache
from .lab import Lab
from .machine import PLAIN, PREFIX, describe, reference_machine, run

__version__ = "0.1.0"
