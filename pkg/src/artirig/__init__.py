"""Articulated implicit-shape reconstruction engine.

Fits a canonical SDF/color/feature field plus Gaussian neural bones and
blend-skinned time warps to synthetic articulated-object videos with
differentiable volume rendering, then extracts a posable mesh, skinning
weights, and a skeleton for interactive articulation.
"""

from .autodiff import Tensor, no_grad
