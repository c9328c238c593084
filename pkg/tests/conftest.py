import numpy as np
import pytest

from rankprune import mlp_engine


@pytest.fixture
def worked_example_model():
    """Two-layer 2-2-2 model with the worked-example weight matrices."""
    return mlp_engine.MlpModel([
        mlp_engine.Layer([[1, 2], [3, 4]], [0, 0], "identity"),
        mlp_engine.Layer([[5, 6], [7, 8]], [0, 0], "identity"),
    ])


@pytest.fixture(scope="session")
def digits_dataset():
    """Handwritten-digit images in 28x28 MNIST geometry (upscaled from the
    bundled 8x8 scikit-learn digits) with labels; used where the real MNIST
    files are not available."""
    from sklearn.datasets import load_digits
    d = load_digits()
    imgs = d.images / 16.0  # (n, 8, 8) in [0, 1]
    big = np.kron(imgs, np.ones((3, 3)))          # (n, 24, 24)
    big = np.pad(big, ((0, 0), (2, 2), (2, 2)))   # (n, 28, 28)
    xs = big.reshape(len(imgs), 784)
    return xs, d.target.astype(np.int64)
