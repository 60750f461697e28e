"""Design and analysis of two-stage adaptive survival trials.

Combination tests, conditional error, worst-case type I error when
first-stage follow-up is extended, corrected cutoffs and trial simulation.
"""

__version__ = "0.1.0"
