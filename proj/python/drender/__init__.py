"""Differentiable surface rendering via rasterize-then-splat."""

from _core import icosphere, pose_silhouette_grad, render_mesh, splat_weight

__all__ = ["icosphere", "pose_silhouette_grad", "render_mesh", "splat_weight"]
