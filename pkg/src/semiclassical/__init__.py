"""Semiclassical wave-packet, particle, phase-space and grid methods for
i eps d/dt psi = -(eps^2/2) Laplace psi + V psi."""

__version__ = "0.1.0"
