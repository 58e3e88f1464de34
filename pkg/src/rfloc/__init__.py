"""Receptive-field localization laboratory: stimuli, networks, flows, metrics, ICA."""
__version__ = "0.1.0"
