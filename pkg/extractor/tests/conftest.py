import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def trunk():
    from densestyle_extractor import load_correspondence_trunk

    return load_correspondence_trunk(untrained=True)


@pytest.fixture(scope="session")
def metric_backbone():
    from densestyle_extractor import load_metric_backbone

    return load_metric_backbone(untrained=True)


@pytest.fixture
def make_image(tmp_path):
    def make(name, width, height, mode="RGB", seed=0):
        rng = np.random.default_rng(seed)
        if mode == "RGB":
            arr = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
        else:
            arr = rng.integers(0, 256, size=(height, width), dtype=np.uint8)
        path = tmp_path / name
        Image.fromarray(arr, mode=mode).save(path)
        return path

    return make


@pytest.fixture
def make_mask(tmp_path):
    def make(name, ids):
        path = tmp_path / name
        Image.fromarray(np.asarray(ids, dtype=np.uint16)).save(path)
        return path

    return make
