"""Container for a functional response with scalar covariates."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import GridMismatchError, IngestError
from .fungrid import Grid


@dataclass(frozen=True, eq=False)
class FunctionalDataset:
    """N curves on a common grid plus an N x Q covariate matrix.

    ``grid_offset`` and ``grid_scale`` record the affine map from the
    original time axis to [0, 1]: ``original = offset + scale * s``.
    """

    grid: Grid
    Y: np.ndarray
    X: np.ndarray
    ids: tuple = None
    covariate_names: tuple = None
    grid_offset: float = 0.0
    grid_scale: float = 1.0
    covariate_encodings: dict = field(default_factory=dict)

    def __post_init__(self):
        Y = np.array(self.Y, dtype=float)
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim != 2:
            raise IngestError("response must be a 2-D array")
        if Y.shape[1] != self.grid.size:
            raise GridMismatchError(
                f"response has {Y.shape[1]} columns but grid has {self.grid.size} points"
            )
        if X.shape[0] != Y.shape[0]:
            raise IngestError(f"{Y.shape[0]} curves but {X.shape[0]} covariate rows")
        ids = self.ids
        if ids is None:
            ids = tuple(str(i + 1) for i in range(Y.shape[0]))
        ids = tuple(str(i) for i in ids)
        if len(ids) != Y.shape[0]:
            raise IngestError("one identifier per curve is required")
        names = self.covariate_names
        if names is None:
            names = tuple(f"X{q + 1}" for q in range(X.shape[1]))
        names = tuple(names)
        if len(names) != X.shape[1] or len(set(names)) != len(names):
            raise IngestError("covariate names must be unique, one per column")
        Y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n_subjects(self):
        return self.Y.shape[0]

    @property
    def n_points(self):
        return self.Y.shape[1]

    @property
    def n_covariates(self):
        return self.X.shape[1]

    def original_points(self):
        return self.grid_offset + self.grid_scale * self.grid.points
