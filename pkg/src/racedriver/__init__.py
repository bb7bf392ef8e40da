"""Adaptive probabilistic race-driver model.

Learning driving-line distributions from demonstrations, generalizing them to
unseen closed tracks, simulating laps with a preview driving policy, and
adapting the target trajectory lap by lap.
"""

__version__ = "0.1.0"
