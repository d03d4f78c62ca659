"""Simulate correlated open quantum systems with transfer tensors and hierarchies."""

__version__ = "2026.10.19"
__author__ = "Kernelforge Developers"
__license__ = "License :: OSI Approved :: MIT License"
__status__ = "Alpha"
