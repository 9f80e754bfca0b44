"""Zoom and image labels derived from 5-class lesion masks.

Mask classes: 0 normal, 1 benign calcification, 2 benign mass,
3 malignant calcification, 4 malignant mass. A region gets zoom label 1
exactly when its maximum class is malignant (3 or 4); benign lesions never
trigger a zoom.
"""

import numpy as np

from .errors import ConfigurationError
from .imageops import check_region

MALIGNANT_CLASSES = (3, 4)


class Mask:
    __slots__ = ("classes",)

    def __init__(self, classes):
        arr = np.array(classes, dtype=np.uint8)
        if arr.ndim != 2 or arr.size == 0:
            raise ConfigurationError(f"mask must be a non-empty 2-D array, got shape {arr.shape}")
        if arr.max() > 4:
            raise ConfigurationError(f"mask classes must lie in 0..4, found {int(arr.max())}")
        self.classes = arr

    @property
    def height(self):
        return self.classes.shape[0]

    @property
    def width(self):
        return self.classes.shape[1]

    @property
    def shape(self):
        return self.classes.shape


def _classes(mask):
    return mask.classes if isinstance(mask, Mask) else np.asarray(mask)


def zoom_label(mask, r):
    cls = _classes(mask)
    check_region(r, cls.shape[0], cls.shape[1])
    return int(cls[r.y0 : r.y1, r.x0 : r.x1].max() >= 3)


def image_label(mask):
    return int(_classes(mask).max() >= 3)


def node_zoom_labels(g, mask):
    cls = _classes(mask)
    root = g.nodes[0].region
    if (root.height, root.width) != cls.shape:
        raise ConfigurationError(
            f"mask {cls.shape[1]}x{cls.shape[0]} does not match graph image {root.width}x{root.height}"
        )
    # integral image of the malignant indicator: O(1) per region
    hit = (cls >= 3).astype(np.int64)
    integ = np.zeros((cls.shape[0] + 1, cls.shape[1] + 1), dtype=np.int64)
    integ[1:, 1:] = hit.cumsum(0).cumsum(1)
    out = []
    for n in g.nodes:
        r = n.region
        check_region(r, cls.shape[0], cls.shape[1])
        count = integ[r.y1, r.x1] - integ[r.y0, r.x1] - integ[r.y1, r.x0] + integ[r.y0, r.x0]
        out.append(int(count > 0))
    return out
