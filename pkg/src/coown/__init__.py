"""Threshold co-ownership of encrypted files on ordinary object storage.

A file is split into units; each unit is encrypted with a key that exists
only as a threshold secret among its owners, and dispersed so that every
owner stores one token per unit.  Reading, writing and access grants need
the cooperation of t owners.
"""

__version__ = "0.1.0"
