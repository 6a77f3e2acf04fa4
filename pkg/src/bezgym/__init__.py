"""Desk-scale training stack for humanoid soccer skills on a planar Bez analog."""

__version__ = "0.1.0"
