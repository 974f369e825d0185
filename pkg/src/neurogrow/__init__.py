"""Width-growing neural networks with a neuron-similarity regularizer."""

from .growth import GrowthPolicy, apply_growth, grow_hybrid, grow_random, grow_split, plan_growth
from .network import Conv2dLayer, DenseLayer, Network, backward, build_network, forward
from .similarity import (LayerSnapshot, RegConfig, combined_reg_loss, mean_offdiag_abs, reg_step,
                         similarity_loss_grad, similarity_map, weight_change_penalty)

__version__ = "0.1.0"

__all__ = [
    "Conv2dLayer", "DenseLayer", "GrowthPolicy", "LayerSnapshot", "Network", "RegConfig",
    "apply_growth", "backward", "build_network", "combined_reg_loss", "forward", "grow_hybrid",
    "grow_random", "grow_split", "mean_offdiag_abs", "plan_growth", "reg_step",
    "similarity_loss_grad", "similarity_map", "weight_change_penalty",
]
