"""Least-squares estimators on vector and screw sets.

Two estimators drive the task-frame derivation:

* ``avof`` -- the average vector orientation frame: SVD of the uncentered
  covariance of a 3-vector set, giving the dominant direction and the main
  directions of variation;
* ``asip`` -- the average screw-axes intersection point: the point with
  minimal average screw moment, i.e. the regularized least-squares
  approximate intersection of a set of screw axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Screw, ScrewKind

CONDITION_LIMIT = 1e12


@dataclass
class AvofResult:
    """Orientation frame of a vector set with its dispersion statistics.

    ``covariance`` is the uncentered covariance divided by its trace, so it
    is dimensionless with unit trace.  ``singular_values`` carry the squared
    magnitudes along the frame axes; ``mean_sq_norm`` is their sum.
    """

    frame: np.ndarray
    covariance: np.ndarray
    singular_values: np.ndarray
    mean_sq_norm: float


@dataclass
class AsipResult:
    """Approximate intersection point of screw axes with its covariance.

    ``sigma_hat_sq`` is the residual variance estimate; ``normal_matrix`` is
    the (regularized) normal-equations matrix of the least-squares problem,
    kept because ``covariance**-1 = normal_matrix / sigma_hat_sq`` is the
    numerically safe way to form information weights.
    """

    point: np.ndarray
    covariance: np.ndarray
    sigma_hat_sq: float
    singular_vectors: np.ndarray
    normal_matrix: np.ndarray

    def information(self) -> np.ndarray:
        """Inverse covariance; raises for an exact (zero-residual) fit."""
        if self.sigma_hat_sq == 0.0:
            raise ZeroDivisionError("exact fit has zero covariance")
        return self.normal_matrix / self.sigma_hat_sq


def as_screw_array(screws) -> np.ndarray:
    """Normalize a screw collection to an (N,6) float array.

    Accepts an (N,6) array or a sequence of ``Screw`` objects of one kind;
    mixed kinds are rejected.
    """
    if isinstance(screws, np.ndarray):
        arr = np.asarray(screws, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 6:
            raise ValueError(f"expected an (N,6) screw array, got {arr.shape}")
        return arr
    screws = list(screws)
    if screws and isinstance(screws[0], Screw):
        kinds = {s.kind for s in screws}
        if len(kinds) > 1:
            raise ValueError("cannot mix screw kinds in one estimation")
        return np.stack([s.as_array() for s in screws])
    return as_screw_array(np.asarray(screws, dtype=float))


def avof(vectors: np.ndarray) -> AvofResult:
    """Average vector orientation frame of a set of 3-vectors.

    The first frame column is the dominant (magnitude-weighted average)
    direction, sign-fixed towards the mean vector; the third column is
    forced right-handed by a cross product.
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vectors.shape[0] < 1 or vectors.shape[1] != 3:
        raise ValueError("avof needs at least one 3-vector")
    C_c = vectors.T @ vectors / vectors.shape[0]
    trace = float(np.trace(C_c))
    if trace < 1e-15:
        raise ValueError("degenerate vector set: all vectors (near) zero")
    U, sigma, _ = np.linalg.svd(C_c)
    if U[:, 0] @ vectors.mean(axis=0) < 0.0:
        U[:, 0] = -U[:, 0]
    U[:, 2] = np.cross(U[:, 0], U[:, 1])
    return AvofResult(frame=U, covariance=C_c / trace,
                      singular_values=sigma, mean_sq_norm=trace)


def asip(screws, epsilon: float = 0.0, p0: np.ndarray | None = None) -> AsipResult:
    """Point with minimal average screw moment, with covariance.

    Solves ``argmin_p mean_i |a_i x p + b_i|^2 + epsilon |p - p0|^2``.
    With ``epsilon = 0`` the axis directions must not be all (near)
    parallel, otherwise the normal matrix is singular.
    """
    arr = as_screw_array(screws)
    if arr.shape[0] < 2:
        raise ValueError("asip needs at least two screws")
    if epsilon < 0.0:
        raise ValueError("epsilon must be >= 0")
    p0 = np.zeros(3) if p0 is None else np.asarray(p0, dtype=float).reshape(3)
    a, b = arr[:, :3], arr[:, 3:]
    n = arr.shape[0]

    # mean of [a]x [a]x^T  ==  mean(|a|^2) I - mean(a a^T)
    gram = a.T @ a / n
    A = np.trace(gram) * np.eye(3) - gram
    M = A + epsilon * np.eye(3)
    if np.linalg.cond(M) > CONDITION_LIMIT:
        raise ValueError("parallel or vanishing screw axes; supply epsilon > 0")
    rhs = np.cross(a, b).mean(axis=0) + epsilon * p0
    M_inv = np.linalg.inv(M)
    point = M_inv @ rhs

    residuals = np.cross(a, point[None, :]) + b
    sigma_hat_sq = float(np.sum(residuals**2)) / (n * (3 * n - 3))
    covariance = sigma_hat_sq * M_inv
    U, _, _ = np.linalg.svd(covariance)
    return AsipResult(point=point, covariance=covariance, sigma_hat_sq=sigma_hat_sq,
                      singular_vectors=U, normal_matrix=M)


def mean_subtract(screws):
    """Subtract the componentwise mean screw from every screw in the set.

    Removes any constant moment component, reducing a constant-moment set
    to a minimal-moment one.  Returns the same container type it was given.
    """
    arr = as_screw_array(screws)
    if arr.shape[0] < 2:
        raise ValueError("mean_subtract needs at least two screws")
    centered = arr - arr.mean(axis=0)
    if isinstance(screws, np.ndarray):
        return centered
    screws = list(screws)
    if screws and isinstance(screws[0], Screw):
        kind = screws[0].kind
        return [Screw.from_array(row, kind) for row in centered]
    return centered


@dataclass
class ConsistencyReport:
    """Agreement between the point and orientation covariance structures."""

    max_relative_deviation: float
    singular_vector_mismatch: float
    holds: bool


def avof_asip_consistency(vectors: np.ndarray, screws, tol: float = 1e-8) -> ConsistencyReport:
    """Check C_point == sigma^2/trace(C_c) (I - C_frame)^-1 on shared data.

    ``vectors`` must be the directional parts of ``screws``; regularization
    must be off.  An exact intersection (zero residual) satisfies the
    relation degenerately with both sides zero.
    """
    frame_result = avof(vectors)
    point_result = asip(screws, epsilon=0.0)
    lhs = point_result.covariance
    rhs = (point_result.sigma_hat_sq / frame_result.mean_sq_norm
           * np.linalg.inv(np.eye(3) - frame_result.covariance))
    scale = max(np.abs(lhs).max(), np.abs(rhs).max())
    if scale == 0.0:
        return ConsistencyReport(0.0, 0.0, True)
    deviation = float(np.abs(lhs - rhs).max() / scale)
    # singular vectors agree up to column sign: compare absolute dot products
    dots = np.abs(np.sum(point_result.singular_vectors * frame_result.frame, axis=0))
    # frame columns are ordered by decreasing data spread, point covariance
    # by decreasing uncertainty; both orderings coincide through the relation
    mismatch = float(np.max(1.0 - dots))
    return ConsistencyReport(deviation, mismatch, deviation < tol)
