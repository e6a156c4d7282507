"""Chern numbers of finite tight-binding models by twisted-boundary and real-space routes."""
