"""Fairness audit of collaborative-filtering recommenders across genders."""

__version__ = "0.1.0"
