"""Littlewood-Paley analysis and mild Navier-Stokes solutions on the periodic torus."""

__version__ = "0.1.0"
