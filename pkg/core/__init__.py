"""
PhysioPred - Core analysis engine modules.

Signal preprocessing, ocular and cardiac feature extraction, statistics,
learners, fusion and LOSO evaluation, decoupled from the command line.
"""

__version__ = "0.2.0"
