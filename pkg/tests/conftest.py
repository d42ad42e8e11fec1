import numpy as np
import pytest

from memaudit.embedder import FeatureSet, ReferenceEmbedderConfig
from memaudit.tensorio import DatasetManifest, ImageSlice, ManifestSample


def make_manifest(split: str, n: int, layers=None, name: str = "testset") -> DatasetManifest:
    return DatasetManifest(
        name=name,
        split=split,
        layers=list(layers or []),
        samples=[ManifestSample(id=f"{split}_{i:03d}", path=f"{split}_{i:03d}") for i in range(n)],
    )


def feature_set_from_matrix(mat: np.ndarray, split: str = "train", layer_id: int = 3) -> FeatureSet:
    manifest = make_manifest(split, mat.shape[0], layers=[layer_id])
    return FeatureSet(manifest=manifest, layers={layer_id: np.asarray(mat, dtype=np.float64)})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def smooth_image():
    """A smooth synthetic image for interpolation-sensitive tests."""
    size = 64
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = (
        0.4 * np.exp(-((yy - 20) ** 2 + (xx - 30) ** 2) / (2 * 12.0**2))
        + 0.5 * np.exp(-((yy - 42) ** 2 + (xx - 18) ** 2) / (2 * 9.0**2))
        + 0.3 * np.exp(-((yy - 33) ** 2 + (xx - 47) ** 2) / (2 * 14.0**2))
    )
    img = (img - img.min()) / (img.max() - img.min())
    return ImageSlice(img * 0.8 + 0.1)


@pytest.fixture
def small_embed_cfg():
    """Low-dimensional embedder so whitening stays well-conditioned in unit tests."""
    return ReferenceEmbedderConfig(grids=((4, 4), (2, 2)), layer_ids=(3, 7))
