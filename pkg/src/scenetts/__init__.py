"""Desk-scale expressive TTS with prompt-based prosody transfer."""

__version__ = "0.1.0"
