import numpy as np

from app.domain.dataset import Dataset


def make_synthetic(n_train: int = 512, n_test: int = 256, num_classes: int = 10, seed: int = 0,
                   noise: float = 0.15, shape=(3, 32, 32)):
    """Noisy class prototypes in [0, 1]; a learnable stand-in when no files are present."""
    rng = np.random.default_rng(seed)
    prototypes = rng.random((num_classes,) + tuple(shape))

    def draw(count, split):
        labels = rng.integers(0, num_classes, size=count)
        images = prototypes[labels] + noise * rng.standard_normal((count,) + tuple(shape))
        return Dataset(np.clip(images, 0, 1).astype(np.float32), labels, num_classes, split, "synthetic")

    return draw(n_train, "train"), draw(n_test, "test")
