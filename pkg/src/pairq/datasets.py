"""Vector file IO and synthetic benchmark data.

Files use the common .fvecs/.ivecs layout: each record is a little-endian
int32 dimension followed by that many little-endian float32 (or int32)
values. All records in a file must share one dimension.

Synthetic data draws zero-mean Gaussians with controlled anisotropy. The
covariance spectrum is lambda_i = scale^2 * exp(-decay * i / (dim - 1))
under a seeded random orthogonal basis, so the covariance condition number
is exp(decay). Databases and queries get independent bases, which is what
makes the query-aware transforms differ from plain rotation learning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, psd_sqrt


def _read_records(path, dtype: np.dtype) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) == 0:
        return np.empty((0, 0), dtype=dtype)
    if len(raw) % 4 != 0:
        raise ValueError(f"{path}: size {len(raw)} is not a multiple of 4")
    dim = int(np.frombuffer(raw[:4], dtype="<i4")[0])
    if dim < 1:
        raise ValueError(f"{path}: first record has dimension {dim}")
    record = 4 * (dim + 1)
    if len(raw) % record != 0:
        raise ValueError(f"{path}: truncated record at end of file")
    table = np.frombuffer(raw, dtype="<i4").reshape(-1, dim + 1)
    if not (table[:, 0] == dim).all():
        bad = int(np.flatnonzero(table[:, 0] != dim)[0])
        raise ValueError(
            f"{path}: record {bad} has dimension {table[bad, 0]}, expected {dim}"
        )
    payload = np.frombuffer(raw, dtype=dtype).reshape(-1, dim + 1)[:, 1:]
    return np.ascontiguousarray(payload)


def read_fvecs(path) -> np.ndarray:
    """Read a float32 vector file as an (N, dim) float32 array.

    Non-finite values are kept but reported through a warning.
    """
    out = _read_records(path, np.dtype("<f4"))
    if out.size and not np.isfinite(out).all():
        warnings.warn(f"{path}: file contains non-finite values", RuntimeWarning)
    return out


def read_ivecs(path) -> np.ndarray:
    """Read an int32 vector file as an (N, dim) int32 array."""
    return _read_records(path, np.dtype("<i4"))


def _write_records(path, data: np.ndarray, dtype: np.dtype) -> None:
    if data.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {data.shape}")
    n, dim = data.shape
    if n > 0 and dim < 1:
        raise ValueError("records must have at least one component")
    body = np.empty((n, dim + 1), dtype="<i4")
    body[:, 0] = dim
    body[:, 1:] = np.ascontiguousarray(data, dtype=dtype).view("<i4")
    with open(path, "wb") as fh:
        fh.write(body.tobytes())


def write_fvecs(path, data) -> None:
    """Write an (N, dim) array as float32 records (values are cast)."""
    arr = np.asarray(data, dtype="<f4")
    _write_records(path, arr, np.dtype("<f4"))


def write_ivecs(path, data) -> None:
    """Write an (N, dim) integer array as int32 records."""
    arr = np.asarray(data)
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"expected integers, got dtype {arr.dtype}")
    info = np.iinfo(np.int32)
    if arr.size and (arr.min() < info.min or arr.max() > info.max):
        raise ValueError("values do not fit in int32")
    _write_records(path, arr.astype("<i4"), np.dtype("<i4"))


@dataclass
class SyntheticSpec:
    """Shape of a synthetic benchmark draw.

    ``database_decay`` and ``query_decay`` set the log condition number of
    the respective covariances. Explicit covariance matrices override the
    decay spectra when given and must be positive semidefinite.
    """

    dim: int
    num_database: int
    num_train_queries: int
    num_eval_queries: int
    database_decay: float = 0.0
    query_decay: float = 0.0
    database_scale: float = 1.0
    query_scale: float = 1.0
    database_cov: np.ndarray | None = None
    query_cov: np.ndarray | None = None


@dataclass(eq=False)
class SyntheticData:
    database: np.ndarray
    train_queries: np.ndarray
    eval_queries: np.ndarray


def _orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    # Fix signs so the factorization is unique and the draw canonical.
    return q * np.sign(np.diag(r))


def _factor(spec_cov, dim, decay, scale, rng) -> np.ndarray:
    """A matrix F with F F^T equal to the requested covariance."""
    if spec_cov is not None:
        cov = as_matrix(spec_cov, "covariance")
        if cov.shape != (dim, dim):
            raise ValueError(f"covariance shape {cov.shape}, expected ({dim}, {dim})")
        return psd_sqrt(cov)
    if dim == 1:
        lams = np.array([1.0])
    else:
        lams = np.exp(-decay * np.arange(dim) / (dim - 1))
    basis = _orthogonal(dim, rng)
    return scale * (basis * np.sqrt(lams))


def gen_synthetic(spec: SyntheticSpec, seed: int = 0) -> SyntheticData:
    """Draw database and query samples from the Gaussians a SyntheticSpec describes.

    Identical spec and seed give bit-identical arrays. Bases are drawn
    first (database then query), then the three sample blocks in order.
    """
    if spec.dim < 1:
        raise ValueError(f"dim must be >= 1, got {spec.dim}")
    for name in ("num_database", "num_train_queries", "num_eval_queries"):
        if getattr(spec, name) < 0:
            raise ValueError(f"{name} must be >= 0")
    rng = np.random.default_rng(seed)
    db_factor = _factor(
        spec.database_cov, spec.dim, spec.database_decay, spec.database_scale, rng
    )
    q_factor = _factor(
        spec.query_cov, spec.dim, spec.query_decay, spec.query_scale, rng
    )
    database = rng.standard_normal((spec.num_database, spec.dim)) @ db_factor.T
    train_q = rng.standard_normal((spec.num_train_queries, spec.dim)) @ q_factor.T
    eval_q = rng.standard_normal((spec.num_eval_queries, spec.dim)) @ q_factor.T
    return SyntheticData(database=database, train_queries=train_q, eval_queries=eval_q)


def second_moment_condition(queries) -> float:
    """Condition number of the mean query outer-product matrix."""
    q = as_matrix(queries, "queries")
    moment = (q.T @ q) / max(q.shape[0], 1)
    w = np.linalg.eigvalsh(moment)
    if w[-1] <= 0.0:
        return float("inf")
    smallest = max(w[0], 0.0)
    return float("inf") if smallest == 0.0 else float(w[-1] / smallest)
