"""Latent factor model: entity matrix A and per-relation interaction matrices.

The model scores a directed cell (i, j, k) with the bilinear form
``a_i^T R_k a_j`` where ``a_i`` is row i of A (N x r) and ``R_k`` is a full,
generally asymmetric r x r matrix.  Under the Bernoulli reading the score is
the natural parameter and ``sigmoid(score)`` the cell probability.

Models are immutable after fit/load; scoring is pure and thread-safe.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ModelFileError
from .tensor import DENSE_CAP_DEFAULT, SparseAdjacencyTensor

_MAGIC = b"RELF"
_FORMAT_VERSION = 1

# Tightest open-interval bounds representable in binary64.
_PROB_FLOOR = np.nextafter(0.0, 1.0)
_PROB_CEIL = np.nextafter(1.0, 0.0)

SOLVERS = ("als", "logit")
INITS = ("random", "nvecs")


def sigmoid(x):
    """Numerically stable logistic function, elementwise.

    Computes 1/(1+exp(-x)) for x >= 0 and exp(x)/(1+exp(x)) otherwise, so the
    exponential argument is never positive and cannot overflow.  Saturates to
    exactly 0.0 / 1.0 for |x| beyond ~745 / ~37.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class Hyperparams:
    """Fit configuration shared by both solvers.

    ``init=None`` resolves per solver: eigenvector start for ALS (its quality
    is initialization-sensitive), seeded random for the logistic solver (the
    eigenvector start can land in a saturated region of the sigmoid).
    """

    rank: int
    lambda_a: float = 10.0
    lambda_r: float = 10.0
    solver: str = "als"
    max_iter: int = 500
    tol: float = 1e-5
    seed: int = 0
    init: str | None = None

    def validate(self) -> None:
        if self.rank < 1:
            raise ConfigError(f"rank must be >= 1, got {self.rank}")
        if self.lambda_a < 0 or self.lambda_r < 0:
            raise ConfigError("regularization weights must be >= 0")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be > 0, got {self.tol}")
        if self.init is not None and self.init not in INITS:
            raise ConfigError(f"init must be one of {INITS}, got {self.init!r}")

    def resolved_init(self) -> str:
        if self.init is not None:
            return self.init
        return "nvecs" if self.solver == "als" else "random"

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "lambda_a": self.lambda_a,
            "lambda_r": self.lambda_r,
            "solver": self.solver,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "seed": self.seed,
            "init": self.init,
        }


class FactorModel:
    """Fitted factors: A (N x r) and a length-K sequence of r x r matrices."""

    __slots__ = ("A", "R", "rank")

    def __init__(self, A: np.ndarray, R, rank: int | None = None):
        A = np.ascontiguousarray(A, dtype=np.float64)
        if A.ndim != 2:
            raise ValueError(f"A must be 2-D, got shape {A.shape}")
        r = A.shape[1] if rank is None else rank
        if A.shape[1] != r:
            raise ValueError(f"rank {r} inconsistent with A shape {A.shape}")
        mats = []
        for k, Rk in enumerate(R):
            Rk = np.ascontiguousarray(Rk, dtype=np.float64)
            if Rk.shape != (r, r):
                raise ValueError(f"R[{k}] has shape {Rk.shape}, expected ({r}, {r})")
            mats.append(Rk)
        if not np.all(np.isfinite(A)) or any(not np.all(np.isfinite(m)) for m in mats):
            raise ValueError("model contains non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "R", tuple(mats))
        object.__setattr__(self, "rank", r)

    def __setattr__(self, name, value):
        raise AttributeError("FactorModel is immutable")

    def __eq__(self, other) -> bool:
        if not isinstance(other, FactorModel):
            return NotImplemented
        return (
            self.rank == other.rank
            and self.A.shape == other.A.shape
            and len(self.R) == len(other.R)
            and np.array_equal(self.A, other.A)
            and all(np.array_equal(a, b) for a, b in zip(self.R, other.R))
        )

    def __repr__(self) -> str:
        return f"FactorModel(N={self.n_entities}, K={self.n_relations}, rank={self.rank})"

    @property
    def n_entities(self) -> int:
        return self.A.shape[0]

    @property
    def n_relations(self) -> int:
        return len(self.R)

    def _check_indices(self, i: int, j: int, k: int) -> None:
        n = self.n_entities
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"entity index out of range [0, {n}): ({i}, {j})")
        if not (0 <= k < self.n_relations):
            raise IndexError(f"relation index {k} out of range [0, {self.n_relations})")

    def score(self, i: int, j: int, k: int) -> float:
        """Bilinear score a_i^T R_k a_j (left product first)."""
        self._check_indices(i, j, k)
        return float(np.dot(np.dot(self.A[i], self.R[k]), self.A[j]))

    def score_slice(self, k: int, *, cap: int = DENSE_CAP_DEFAULT) -> np.ndarray:
        """Dense N x N score matrix A R_k A^T for relation k."""
        if not (0 <= k < self.n_relations):
            raise IndexError(f"relation index {k} out of range [0, {self.n_relations})")
        if self.n_entities > cap:
            from .errors import DenseCapError

            raise DenseCapError(
                f"dense scores for N={self.n_entities} entities exceed the cap of {cap}"
            )
        return (self.A @ self.R[k]) @ self.A.T

    def predict_proba(self, i: int, j: int, k: int) -> float:
        """Bernoulli parameter sigmoid(score), clamped into the open (0, 1)."""
        p = sigmoid(self.score(i, j, k))
        return float(min(max(p, _PROB_FLOOR), _PROB_CEIL))


def clip_proba(p):
    """Clamp probabilities into the open interval (0, 1), elementwise."""
    return np.clip(p, _PROB_FLOOR, _PROB_CEIL)


def init_model(
    n_entities: int,
    n_relations: int,
    hp: Hyperparams,
    tensor: SparseAdjacencyTensor | None = None,
    *,
    dense_cap: int = DENSE_CAP_DEFAULT,
) -> FactorModel:
    """Build the starting factors; deterministic for fixed (N, K, seed, init).

    ``random`` draws all entries i.i.d. Normal(0, 0.1^2) from one seeded
    generator (A first, then R_0..R_{K-1}).  ``nvecs`` sets A's columns to
    the leading eigenvectors of the summed symmetrized slices and the R_k to
    their exact ridge optimum given that A; it needs the tensor.
    """
    hp.validate()
    if n_entities < 1 or n_relations < 1:
        raise ConfigError(f"need N >= 1 and K >= 1, got N={n_entities}, K={n_relations}")
    r = hp.rank
    init = hp.resolved_init()
    if init == "random":
        rng = np.random.default_rng(hp.seed)
        A = rng.normal(0.0, 0.1, size=(n_entities, r))
        R = rng.normal(0.0, 0.1, size=(n_relations, r, r))
        return FactorModel(A, list(R))

    # nvecs
    if tensor is None:
        raise ConfigError("init='nvecs' requires the tensor")
    if r > n_entities:
        raise ConfigError(f"init='nvecs' needs rank <= N, got rank={r} > N={n_entities}")
    summed = np.zeros((n_entities, n_entities))
    for k in range(n_relations):
        Xk = tensor.dense_slice(k, cap=dense_cap)
        summed += Xk + Xk.T
    eigvals, eigvecs = np.linalg.eigh(summed)
    A = eigvecs[:, ::-1][:, :r]
    from .als import _update_r_dense  # deferred: als imports this module

    slices = [tensor.dense_slice(k, cap=dense_cap) for k in range(n_relations)]
    R = _update_r_dense(slices, A, hp.lambda_r)
    return FactorModel(A, R)


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(
    model: FactorModel,
    path: str | Path,
    *,
    solver: str | None = None,
    hyperparams: dict | None = None,
    dataset_checksum: str | None = None,
) -> None:
    """Write the binary model file.

    Layout: 4-byte magic, uint32 little-endian header length, UTF-8 JSON
    header (format version, N, K, r, solver, hyperparams, dataset checksum),
    then row-major binary64 little-endian payloads for A and each R_k.
    The float payload round-trips bit-exactly.
    """
    header = {
        "format_version": _FORMAT_VERSION,
        "n_entities": model.n_entities,
        "n_relations": model.n_relations,
        "rank": model.rank,
        "solver": solver,
        "hyperparams": hyperparams,
        "dataset_checksum": dataset_checksum,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [_MAGIC, struct.pack("<I", len(header_bytes)), header_bytes]
    parts.append(np.ascontiguousarray(model.A, dtype="<f8").tobytes())
    for Rk in model.R:
        parts.append(np.ascontiguousarray(Rk, dtype="<f8").tobytes())
    _atomic_write_bytes(Path(path), b"".join(parts))


def read_model_header(path: str | Path) -> dict:
    """Parse and validate the JSON header of a model file."""
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != _MAGIC:
        raise ModelFileError(f"{path}: not a model file (bad magic)")
    (header_len,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + header_len:
        raise ModelFileError(f"{path}: truncated header")
    try:
        header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"{path}: corrupt header: {exc}") from exc
    version = header.get("format_version")
    if version != _FORMAT_VERSION:
        raise ModelFileError(
            f"{path}: unsupported format version {version!r} (expected {_FORMAT_VERSION})"
        )
    for key in ("n_entities", "n_relations", "rank"):
        if not isinstance(header.get(key), int) or header[key] < 0:
            raise ModelFileError(f"{path}: header field {key!r} missing or invalid")
    return header


def load_model(path: str | Path) -> FactorModel:
    """Read a model file back; inverse of save_model for the factor payload."""
    path = Path(path)
    header = read_model_header(path)
    data = path.read_bytes()
    (header_len,) = struct.unpack("<I", data[4:8])
    payload = data[8 + header_len :]
    n, k, r = header["n_entities"], header["n_relations"], header["rank"]
    expected = 8 * (n * r + k * r * r)
    if len(payload) != expected:
        raise ModelFileError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} "
            f"for N={n}, K={k}, rank={r} (truncated or inconsistent dimensions)"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    A = flat[: n * r].reshape(n, r)
    R = [flat[n * r + t * r * r : n * r + (t + 1) * r * r].reshape(r, r) for t in range(k)]
    try:
        return FactorModel(A, R)
    except ValueError as exc:
        raise ModelFileError(f"{path}: invalid factor payload: {exc}") from exc
