"""
Einsum expressions over commutative semirings: parsing, validation,
reference evaluation and equivalence-preserving rewrites.
"""
