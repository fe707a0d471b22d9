import numpy as np
import pytest
import torch
from PIL import Image
from torchvision import models


@pytest.fixture(scope="session")
def weights_file(tmp_path_factory):
    """Seeded VGG16 convolutional weights saved as a local file; tests
    never download anything."""
    path = tmp_path_factory.mktemp("weights") / "vgg16_features.pth"
    torch.manual_seed(7)
    net = models.vgg16(weights=None)
    torch.save(net.features.state_dict(), str(path))
    return str(path)


@pytest.fixture(scope="session")
def image_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("images") / "scene.png"
    rng = np.random.default_rng(3)
    pixels = rng.integers(0, 256, size=(60, 80, 3), dtype=np.uint8)
    Image.fromarray(pixels).save(str(path))
    return str(path)


@pytest.fixture(scope="session")
def second_image_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("images") / "other.png"
    rng = np.random.default_rng(4)
    pixels = rng.integers(0, 256, size=(48, 48, 3), dtype=np.uint8)
    Image.fromarray(pixels).save(str(path))
    return str(path)
