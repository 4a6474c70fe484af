"""Desk-scale reference-game laboratory: synthetic scenes, learned semantics,
literal and pragmatic speakers, and the experiment pipelines that compare them."""

__version__ = "0.1.0"
