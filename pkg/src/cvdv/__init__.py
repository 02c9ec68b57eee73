"""CV to DV circuit transpiler with a truncated-Fock verification oracle."""

__version__ = "0.1.0"
