"""Executable Bass-Serre calculus: graphs of groups, ellipticity, deformation
moves, GBS and Grushko verdicts, and 2-orbifold QH bookkeeping."""

__version__ = "0.1.0"
