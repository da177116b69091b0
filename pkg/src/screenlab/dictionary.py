"""Dense dictionaries: column storage, screening reduction, spectral norms, file IO."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

UNIT_NORM_TOL = 1e-9

_DSMX_MAGIC = b"DSMX"
_DSMX_VERSION = 1
_DSMX_HEADER = struct.Struct("<4sIQQ")


def index_set(values, size=None):
    """Validate and return a strictly increasing int64 index array.

    `size`, when given, bounds the indices to ``[0, size)``.
    """
    arr = np.asarray(values, dtype=np.int64).ravel()
    if arr.size and np.any(np.diff(arr) <= 0):
        raise ValueError("index set must be strictly increasing")
    if size is not None and arr.size and (arr[0] < 0 or arr[-1] >= size):
        raise ValueError(f"indices must lie in [0, {size})")
    return arr


def complement(kept, size):
    """Indices of ``[0, size)`` not present in the sorted array `kept`."""
    mask = np.ones(size, dtype=bool)
    mask[kept] = False
    return np.flatnonzero(mask).astype(np.int64)


class Dictionary:
    """Dense N x K real matrix whose columns are the candidate atoms.

    Columns are stored Fortran-ordered so that the column selections performed
    by screening stay contiguous. Instances are immutable (`data` is marked
    read-only); `reduce` returns a new Dictionary.
    """

    __slots__ = ("data", "col_norm_checked")

    def __init__(self, data, check_unit_norms=True):
        arr = np.array(data, dtype=np.float64, order="F")
        if arr.ndim != 2:
            raise ValueError("dictionary data must be a 2-D matrix")
        n, k = arr.shape
        if n < 1 or k < 1:
            raise ValueError("dictionary must have at least one row and one column")
        if check_unit_norms:
            norms = np.linalg.norm(arr, axis=0)
            worst = float(np.max(np.abs(norms - 1.0))) if norms.size else 0.0
            if worst > UNIT_NORM_TOL:
                raise ValueError(
                    f"columns must have unit l2 norm (worst deviation {worst:.3e})"
                )
        arr.setflags(write=False)
        self.data = arr
        self.col_norm_checked = bool(check_unit_norms)

    @classmethod
    def _wrap(cls, arr, col_norm_checked):
        self = cls.__new__(cls)
        arr = np.asfortranarray(arr)
        arr.setflags(write=False)
        self.data = arr
        self.col_norm_checked = col_norm_checked
        return self

    @property
    def n_rows(self):
        return self.data.shape[0]

    @property
    def n_cols(self):
        return self.data.shape[1]

    def apply(self, x):
        """Return ``D @ x`` for a coefficient vector over the current columns."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise ValueError(f"expected coefficient vector of length {self.n_cols}")
        return self.data @ x

    def correlate(self, v):
        """Return ``D.T @ v``, the column correlations with an observation-space vector."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n_rows,):
            raise ValueError(f"expected observation-space vector of length {self.n_rows}")
        return self.data.T @ v

    def column(self, i):
        return self.data[:, i]

    def reduce(self, kept_prev, kept_next):
        """Sub-dictionary obtained by keeping only the columns in `kept_next`.

        Both arguments are sorted *original* column indices; this dictionary is
        assumed to hold exactly the `kept_prev` columns, in order. `kept_next`
        must be a subset of `kept_prev`.
        """
        kept_prev = index_set(kept_prev)
        kept_next = index_set(kept_next)
        if kept_prev.size != self.n_cols:
            raise ValueError("kept_prev does not match the current column count")
        pos = np.searchsorted(kept_prev, kept_next)
        if np.any(pos >= kept_prev.size) or np.any(kept_prev[np.minimum(pos, kept_prev.size - 1)] != kept_next):
            raise ValueError("kept_next must be a subset of kept_prev")
        if kept_next.size == kept_prev.size:
            return self
        if kept_next.size == 0:
            return Dictionary._wrap(self.data[:, :0], self.col_norm_checked)
        return Dictionary._wrap(self.data[:, pos], self.col_norm_checked)


def _power_top_eig(mat, tol=1e-10, max_iters=5000):
    """Largest eigenvalue of mat.T @ mat via matrix-free power iteration.

    Iterates a deterministic two-vector block (all-ones plus an alternating
    ramp) on the smaller side of the Gram operator and stops once the top
    Rayleigh value is stable to `tol`. The second direction guards against a
    start vector that happens to be nearly orthogonal to the top eigenvector,
    where a single-vector iteration can stall on a lower eigenvalue.
    """
    n_rows, n_cols = mat.shape
    if n_cols <= n_rows:
        dim = n_cols
        op = lambda q: mat.T @ (mat @ q)
    else:
        dim = n_rows
        op = lambda q: mat @ (mat.T @ q)
    cols = [np.ones(dim)]
    if dim > 1:
        alt = np.ones(dim)
        alt[1::2] = -1.0
        cols.append(alt)
    q, _ = np.linalg.qr(np.stack(cols, axis=1))
    lam = None
    for it in range(max_iters):
        z = op(q)
        h = q.T @ z
        lam_new = float(np.linalg.eigvalsh(0.5 * (h + h.T))[-1])
        if lam is not None and abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return max(lam_new, 0.0)
        lam = lam_new
        if not np.any(z):
            # the whole block fell in the null space; restart along basis axes
            q = np.zeros((dim, q.shape[1]))
            for j in range(q.shape[1]):
                q[(it + j) % dim, j] = 1.0
            lam = None
            continue
        q, _ = np.linalg.qr(z)
    return max(lam, 0.0)


def spectral_norm(dictionary, cols):
    """Largest singular value of the sub-matrix given by the columns `cols`."""
    cols = index_set(cols, dictionary.n_cols)
    if cols.size == 0:
        raise ValueError("spectral_norm requires a nonempty column set")
    return float(np.sqrt(_power_top_eig(dictionary.data[:, cols])))


def operator_norm(dictionary):
    """Largest singular value of the whole dictionary."""
    return float(np.sqrt(_power_top_eig(dictionary.data)))


@dataclass(frozen=True)
class GroupPartition:
    """Partition of the column indices into weighted groups.

    `groups` are sorted original-index arrays, pairwise disjoint and covering
    ``[0, K)``. `spectral_norms[g]` holds the largest singular value of the
    sub-dictionary of group g, computed once at construction; screening never
    splits a group, so these stay valid for every reduced problem.
    """

    groups: tuple
    weights: np.ndarray
    spectral_norms: np.ndarray
    group_of: np.ndarray
    order: np.ndarray
    offsets: np.ndarray

    @classmethod
    def build(cls, dictionary, groups, weights=None):
        k = dictionary.n_cols
        groups = tuple(index_set(g, k) for g in groups)
        if any(g.size == 0 for g in groups):
            raise ValueError("groups must be nonempty")
        group_of = np.full(k, -1, dtype=np.int64)
        for gid, g in enumerate(groups):
            if np.any(group_of[g] != -1):
                raise ValueError("groups must be pairwise disjoint")
            group_of[g] = gid
        if np.any(group_of < 0):
            raise ValueError("groups must cover every column index")
        if weights is None:
            weights = np.sqrt([g.size for g in groups])
        weights = np.array(weights, dtype=np.float64)
        if weights.shape != (len(groups),) or np.any(weights <= 0):
            raise ValueError("need one strictly positive weight per group")
        norms = np.array([spectral_norm(dictionary, g) for g in groups])
        sizes = np.array([g.size for g in groups], dtype=np.int64)
        offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        order = np.concatenate(groups)
        # instances are shared across concurrent runs; freeze the buffers
        for arr in (weights, norms, group_of, order, offsets, *groups):
            arr.setflags(write=False)
        return cls(groups, weights, norms, group_of, order, offsets)

    @property
    def n_groups(self):
        return len(self.groups)

    @property
    def size(self):
        return self.group_of.size

    def group_sizes(self):
        return np.array([g.size for g in self.groups], dtype=np.int64)

    def group_norms(self, vec):
        """Per-group l2 norms of a full-length coefficient or correlation vector."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ValueError(f"expected vector of length {self.size}")
        sq = vec[self.order] ** 2
        return np.sqrt(np.add.reduceat(sq, self.offsets))

    def layout(self, kept=None):
        """Group layout over a reduced coefficient vector indexed by `kept`.

        `kept` must be a union of whole groups (screening removes groups
        atomically); ``None`` means all columns.
        """
        if kept is None:
            return GroupLayout(
                group_ids=np.arange(self.n_groups, dtype=np.int64),
                weights=self.weights.copy(),
                order=self.order.copy(),
                offsets=self.offsets.copy(),
            )
        kept = index_set(kept, self.size)
        kept_gids = np.unique(self.group_of[kept]) if kept.size else np.empty(0, np.int64)
        total = int(sum(self.groups[g].size for g in kept_gids))
        if total != kept.size:
            raise ValueError("kept indices must cover whole groups")
        parts = [np.searchsorted(kept, self.groups[g]) for g in kept_gids]
        sizes = np.array([p.size for p in parts], dtype=np.int64)
        offsets = np.concatenate(([0], np.cumsum(sizes)[:-1])) if sizes.size else np.zeros(0, np.int64)
        order = np.concatenate(parts) if parts else np.zeros(0, np.int64)
        return GroupLayout(
            group_ids=kept_gids,
            weights=self.weights[kept_gids],
            order=order,
            offsets=offsets,
        )


@dataclass(frozen=True)
class GroupLayout:
    """Positions of surviving groups inside a reduced coefficient vector."""

    group_ids: np.ndarray
    weights: np.ndarray
    order: np.ndarray
    offsets: np.ndarray

    @property
    def n_groups(self):
        return self.group_ids.size

    def norms(self, vec):
        if self.order.size == 0:
            return np.zeros(0)
        sq = np.asarray(vec)[self.order] ** 2
        return np.sqrt(np.add.reduceat(sq, self.offsets))

    def penalty(self, vec):
        """Weighted sum of group norms (the group-sparsity regularizer value)."""
        return float(self.weights @ self.norms(vec))

    def prox(self, vec, t):
        """Group soft-thresholding with threshold ``t * weight`` per group."""
        if t < 0:
            raise ValueError("threshold must be nonnegative")
        vec = np.asarray(vec, dtype=np.float64)
        norms = self.norms(vec)
        sizes = np.diff(np.append(self.offsets, self.order.size))
        safe = np.where(norms > 0.0, norms, 1.0)
        factors = np.where(norms > 0.0, np.maximum(1.0 - t * self.weights / safe, 0.0), 0.0)
        out = np.zeros_like(vec)
        out[self.order] = vec[self.order] * np.repeat(factors, sizes)
        return out


def write_dsmx(path, matrix):
    """Write a dense float64 matrix in the DSMX container format.

    Layout: magic ``DSMX``, u32 version, u64 rows, u64 cols, then row-major
    IEEE-754 little-endian float64 payload.
    """
    arr = np.ascontiguousarray(matrix, dtype="<f8")
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError("DSMX stores 2-D matrices")
    with open(path, "wb") as fh:
        fh.write(_DSMX_HEADER.pack(_DSMX_MAGIC, _DSMX_VERSION, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def read_dsmx(path):
    """Read a DSMX file back into an (rows, cols) float64 array."""
    with open(path, "rb") as fh:
        header = fh.read(_DSMX_HEADER.size)
        if len(header) != _DSMX_HEADER.size:
            raise ValueError(f"{path}: truncated DSMX header")
        magic, version, rows, cols = _DSMX_HEADER.unpack(header)
        if magic != _DSMX_MAGIC:
            raise ValueError(f"{path}: not a DSMX file")
        if version != _DSMX_VERSION:
            raise ValueError(f"{path}: unsupported DSMX version {version}")
        payload = fh.read()
    expected = rows * cols * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)


def read_csv_matrix(path):
    """Read a comma-separated matrix, one row per line."""
    arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return arr


def read_matrix(path):
    """Read a matrix from DSMX (detected by magic bytes) or CSV."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == _DSMX_MAGIC:
        return read_dsmx(path)
    return read_csv_matrix(path)


def write_group_file(path, groups, weights=None):
    """Write groups as ``weight;i1,i2,...`` lines (0-based indices)."""
    lines = []
    for gid, g in enumerate(groups):
        idx = ",".join(str(int(i)) for i in g)
        if weights is None:
            lines.append(f";{idx}")
        else:
            lines.append(f"{weights[gid]!r};{idx}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_group_file(path):
    """Parse a group file into (groups, weights).

    Each line is ``weight;i1,i2,...``; a missing weight (no semicolon, or an
    empty weight field) defaults to ``sqrt(group size)``.
    """
    groups = []
    weights = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if ";" in line:
                head, tail = line.split(";", 1)
            else:
                head, tail = "", line
            try:
                idx = sorted(int(tok) for tok in tail.split(",") if tok.strip())
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad index list") from exc
            if not idx:
                raise ValueError(f"{path}:{lineno}: empty group")
            if head.strip():
                w = float(head)
            else:
                w = float(np.sqrt(len(idx)))
            groups.append(np.asarray(idx, dtype=np.int64))
            weights.append(w)
    return groups, np.asarray(weights, dtype=np.float64)
