"""Multi-level convolutional feature taps.

The backbone is a torchvision VGG16 built untrained and loaded from a
local parameter file; each named layer is read right after its
rectifier, so the stored features are the stage outputs the rest of the
network actually consumes. Features are written raw: no pooling, no
normalization, channels last.
"""

from __future__ import annotations

import numpy as np
import torch
from PIL import Image
from torchvision import models

# Index of each named convolution inside vgg16().features, plus its
# output channel count from the published VGG16-D configuration. The
# tap reads index + 1, the rectifier that follows the convolution.
VGG16_LAYERS = {
    "conv4_1": (17, 512),
    "conv4_3": (21, 512),
    "conv5_1": (24, 512),
    "conv5_3": (28, 512),
}

BACKBONES = {"vgg16": VGG16_LAYERS}


def layer_channels(backbone: str, layers: tuple[str, ...]) -> tuple[int, ...]:
    table = BACKBONES[backbone]
    return tuple(table[name][1] for name in layers)


def load_image(path: str, resize: int, mean: tuple[float, ...], std: tuple[float, ...]) -> torch.Tensor:
    """Decode, resize to a square, scale to [0, 1], normalize per channel.

    Returns a float32 ``[3, resize, resize]`` tensor.
    """
    with Image.open(path) as img:
        img = img.convert("RGB").resize((resize, resize), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - np.asarray(mean, dtype=np.float32)) / np.asarray(std, dtype=np.float32)
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))


class VisualExtractor:
    """Runs the convolutional stack once per image and captures the
    requested stage outputs in layer order."""

    def __init__(self, backbone: str, weights_path: str, layers: tuple[str, ...]):
        table = BACKBONES[backbone]
        self.layers = tuple(layers)
        self.taps = {table[name][0] + 1: name for name in layers}
        self.net = _build_features(backbone, weights_path)

    @torch.no_grad()
    def extract(self, image: torch.Tensor) -> list[np.ndarray]:
        """Feature maps as float32 ``[h, w, c]`` arrays, one per layer."""
        x = image.unsqueeze(0)
        captured: dict[str, np.ndarray] = {}
        last = max(self.taps)
        for index, module in enumerate(self.net):
            x = module(x)
            name = self.taps.get(index)
            if name is not None:
                captured[name] = np.ascontiguousarray(
                    x[0].permute(1, 2, 0).numpy(), dtype=np.float32
                )
            if index == last:
                break
        return [captured[name] for name in self.layers]


def _build_features(backbone: str, weights_path: str) -> torch.nn.Module:
    state = torch.load(weights_path, map_location="cpu", weights_only=True)
    if any(key.startswith("features.") for key in state):
        state = {
            key[len("features."):]: value
            for key, value in state.items()
            if key.startswith("features.")
        }
    net = models.vgg16(weights=None).features
    net.load_state_dict(state)
    net.eval()
    return net
