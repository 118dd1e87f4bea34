"""Subgoal-based dynamic trajectory aggregation for reward shaping."""

__version__ = "0.1.0"
