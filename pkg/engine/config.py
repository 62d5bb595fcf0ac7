"""
Configuration constants for the einsum engine.
Environment variables override the defaults at import time.
"""

import os

# --------------------------------------------------------------------------- #
# Semirings
# --------------------------------------------------------------------------- #
SEMIRING_NAMES = ("int", "float", "bool", "tropical")
DEFAULT_SEMIRING = os.environ.get("EINSUM_SEMIRING", "int")

# Relative tolerance for comparing float-semiring results
FLOAT_REL_TOL = 1e-9

# --------------------------------------------------------------------------- #
# Symbols
# --------------------------------------------------------------------------- #
# Letters handed out first when a rewrite needs readable fresh symbols
SYMBOL_POOL = "ijklmnpqrstuvwxyzabcdefgh"

# --------------------------------------------------------------------------- #
# Equivalence checking
# --------------------------------------------------------------------------- #
DEFAULT_TRIALS = int(os.environ.get("EINSUM_TRIALS", "32"))
DEFAULT_SEED = int(os.environ.get("EINSUM_SEED", "0"))

# Random entries are drawn from {0, ..., INT_ENTRY_MAX}
INT_ENTRY_MAX = 3
# Tropical entries from {0, ..., TROPICAL_ENTRY_MAX} plus +inf
TROPICAL_ENTRY_MAX = 7
TROPICAL_INF_PROBABILITY = 0.15

# Exhaustive mode enumerates every {0,1,2}-valued binding set
EXHAUSTIVE_VALUES = (0, 1, 2)
EXHAUSTIVE_MAX_ENTRIES = 12

# Axis length used when neither bindings nor --dims are given
DEFAULT_AXIS_LENGTH = 2

# --------------------------------------------------------------------------- #
# Random expression generator
# --------------------------------------------------------------------------- #
GENERATOR_SYMBOLS = "ijkl"
GENERATOR_DIMS = (1, 3)
GENERATOR_MAX_DEPTH = 2
GENERATOR_MAX_OPERANDS = 3
GENERATOR_MAX_ORDER = 3
# Total node budget (einsums, aggregates and leaves); deeper nesting becomes leaves once spent
GENERATOR_MAX_NODES = 40

NEST_PROBABILITY = 0.3
DUPLICATE_PROBABILITY = 0.15
DELTA_PROBABILITY = 0.1
ONES_PROBABILITY = 0.1
SCALAR_PROBABILITY = 0.1
AGGREGATE_PROBABILITY = 0.1
TAG_PROBABILITY = 0.1

# --------------------------------------------------------------------------- #
# Logging
# --------------------------------------------------------------------------- #
LOG_LEVEL = os.environ.get("EINSUM_LOG_LEVEL", "WARNING")
