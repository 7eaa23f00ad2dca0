"""Curriculum-driven self-play training arena for service dialogue agents."""

__version__ = "0.1.0"
