"""Terrafall: domain-adaptive hazardous-terrain detection at desk scale."""

__version__ = "0.1.0"
