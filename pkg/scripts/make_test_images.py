"""Regenerate the bundled 128x128 test crops from scikit-image sample data.

All sources are public domain or CC0 per the scikit-image data README.
Requires scikit-image; the package itself does not.
"""

from pathlib import Path

import numpy as np
import skimage.data as sk
from PIL import Image

OUT = Path(__file__).resolve().parents[1] / "src" / "osr" / "data"
SIZE = 128

CROPS = {
    "train/astronaut.png": (sk.astronaut, 30, 170),
    "heldout/camera.png": (sk.camera, 60, 180),
    "heldout/coins.png": (sk.coins, 50, 50),
    "heldout/chelsea.png": (sk.chelsea, 60, 120),
    "heldout/rocket.png": (sk.rocket, 150, 250),
    "heldout/immunohistochemistry.png": (sk.immunohistochemistry, 100, 100),
}


def main():
    for name, (loader, r, c) in CROPS.items():
        crop = np.ascontiguousarray(loader()[r:r + SIZE, c:c + SIZE])
        path = OUT / name
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(crop).save(path)
        print(path, crop.shape)


if __name__ == "__main__":
    main()
