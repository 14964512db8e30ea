"""Collaboration-regulation engine for dual gaze/pupil session streams."""

__version__ = "0.1.0"
