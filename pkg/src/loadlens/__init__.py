"""Cognitive-load classification from pupillometry and EEG.

Subpackages and modules follow the processing order: ``ingest``,
``epoching``, ``cleaning``, ``features``, ``balance``, ``models``,
``explain``, ``eval``, with ``pipeline`` and ``cli`` on top.
"""

__version__ = "0.1.0"
