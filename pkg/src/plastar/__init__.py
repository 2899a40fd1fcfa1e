"""PLA* over tree-structured worlds: evaluation, lifted sampling, closure types
and an asymptotic elimination compiler."""

__version__ = "0.1.0"
