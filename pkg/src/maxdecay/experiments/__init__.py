"""Experiments composed from the spectral, measure and geometry layers."""
