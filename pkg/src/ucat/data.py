"""Synthetic classification data living in the unit hypercube."""
from dataclasses import asdict, dataclass

import numpy as np

__all__ = ["SyntheticDatasetSpec", "Dataset", "gen_data", "nearest_centroid_accuracy"]


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    """Gaussian class clouds around orthogonal directions.

    Class means are ``class_separation`` times orthonormal directions in
    ``R^input_dim``; samples add isotropic noise with std ``noise_sigma``.
    Everything is then mapped into ``[0, 1]^input_dim`` by a fixed affine
    squash and clipped.
    """

    n_classes: int = 10
    input_dim: int = 32
    n_train: int = 2000
    n_test: int = 500
    class_separation: float = 1.0
    noise_sigma: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if min(self.input_dim, self.n_train, self.n_test) < 1:
            raise ValueError("dimensions and sample counts must be positive")
        if self.noise_sigma < 0 or self.class_separation <= 0:
            raise ValueError("noise_sigma must be >= 0 and class_separation > 0")
        if self.input_dim < self.n_classes:
            raise ValueError(
                f"cannot place {self.n_classes} orthogonal class directions in "
                f"{self.input_dim} dimensions")

    @property
    def squash_scale(self):
        return 1.0 / (2.0 * (self.class_separation + 4.0 * self.noise_sigma))


@dataclass
class Dataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    header: dict

    @property
    def n_classes(self):
        return int(self.header["n_classes"])


def nearest_centroid_accuracy(X, y, n_classes):
    """Accuracy of classifying each row by its closest class mean."""
    means = np.stack([X[y == k].mean(axis=0) for k in range(n_classes)])
    d2 = ((X[:, None, :] - means[None]) ** 2).sum(axis=2)
    return float(np.mean(np.argmin(d2, axis=1) == y))


def gen_data(spec=SyntheticDatasetSpec()):
    rng = np.random.default_rng(spec.seed)
    q, _ = np.linalg.qr(rng.standard_normal((spec.input_dim, spec.n_classes)))
    means = spec.class_separation * q.T

    def draw(n):
        y = rng.integers(0, spec.n_classes, n)
        z = means[y] + spec.noise_sigma * rng.standard_normal((n, spec.input_dim))
        return np.clip(0.5 + spec.squash_scale * z, 0.0, 1.0), y

    X_train, y_train = draw(spec.n_train)
    X_test, y_test = draw(spec.n_test)
    header = dict(asdict(spec), squash_offset=0.5, squash_scale=spec.squash_scale, clip=[0.0, 1.0])
    if len(np.unique(y_train)) == spec.n_classes:
        header["nearest_centroid_train_acc"] = nearest_centroid_accuracy(X_train, y_train, spec.n_classes)
    return Dataset(X_train, y_train, X_test, y_test, header)
