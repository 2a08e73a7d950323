"""Event-level simulator for multi-bit quantum digital signatures carried by
temporal ghost imaging.

Indices for frames, slots and bins are 0-based everywhere (records, tables,
reports). Times are integer picoseconds.
"""

__version__ = "0.1.0"
