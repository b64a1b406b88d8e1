"""Finite-time tracking dynamics for time-varying distributed optimization."""
