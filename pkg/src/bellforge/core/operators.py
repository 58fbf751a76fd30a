"""Dense complex-matrix algebra on labelled tensor-product spaces.

Operators are plain 2-D ``complex128`` numpy arrays. Tensor products use the
Kronecker convention with the left factor major, so ``tensor(a, b)[i*db + k, j*db + l]
== a[i, j] * b[k, l]``; every multipartite expression in the package is laid out
in this order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import numpy.typing as npt
from loguru import logger

from .config import TOL
from .errors import DimensionMismatch, InvariantError

Operator = npt.NDArray[np.complex128]


def as_operator(x) -> Operator:
    op = np.asarray(x, dtype=np.complex128)
    if op.ndim == 1:
        op = op.reshape(-1, 1)
    if op.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got an array with shape {op.shape}")
    return op


def frozen(op) -> Operator:
    """Read-only copy; domain values keep their matrices immutable."""
    out = np.array(op, dtype=np.complex128, copy=True)
    out.flags.writeable = False
    return out


def identity(d: int) -> Operator:
    return np.eye(d, dtype=np.complex128)


def ket(i: int, d: int) -> Operator:
    v = np.zeros((d, 1), dtype=np.complex128)
    v[i, 0] = 1.0
    return v


def projector(i: int, d: int) -> Operator:
    p = np.zeros((d, d), dtype=np.complex128)
    p[i, i] = 1.0
    return p


def basis_projector(values: Sequence[int], dims: Sequence[int]) -> Operator:
    """|v1 v2 ...><v1 v2 ...| on the product of `dims` (1 x 1 identity when empty)."""
    if len(values) != len(dims):
        raise DimensionMismatch(f"{len(values)} values for {len(dims)} factors")
    return tensor_all(*(projector(v, d) for v, d in zip(values, dims)))


# ---------- labelled spaces ----------
@dataclass(frozen=True)
class FactorSpace:
    labels: tuple[str, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.labels) != len(self.dims):
            raise DimensionMismatch(f"{len(self.labels)} labels for {len(self.dims)} dims")
        if len(set(self.labels)) != len(self.labels):
            raise InvariantError("labels not unique", str(self.labels))
        if any(d < 1 for d in self.dims):
            raise InvariantError("non-positive dimension", str(self.dims))

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise InvariantError("unknown label", repr(label)) from None

    def dim_of(self, labels: Iterable[str]) -> int:
        return int(np.prod([self.dims[self.index(lab)] for lab in labels], dtype=np.int64))

    def keep(self, keep: Iterable[str]) -> "FactorSpace":
        keep = set(keep)
        for lab in keep:
            self.index(lab)
        pairs = [(lab, d) for lab, d in zip(self.labels, self.dims) if lab in keep]
        return FactorSpace(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def reordered(self, order: Sequence[str]) -> "FactorSpace":
        return FactorSpace(tuple(order), tuple(self.dims[self.index(lab)] for lab in order))

    def with_dims(self, updates: dict[str, int]) -> "FactorSpace":
        return FactorSpace(self.labels, tuple(updates.get(lab, d) for lab, d in zip(self.labels, self.dims)))

    def __add__(self, other: "FactorSpace") -> "FactorSpace":
        return FactorSpace(self.labels + other.labels, self.dims + other.dims)


def _check_square(op: Operator, space: FactorSpace) -> None:
    if op.shape != (space.dim, space.dim):
        raise DimensionMismatch(f"operator {op.shape} on space of dimension {space.dim} {space.labels}")


# ---------- products and traces ----------
def tensor(a, b) -> Operator:
    return np.kron(as_operator(a), as_operator(b))


def tensor_all(*ops) -> Operator:
    if not ops:
        return np.ones((1, 1), dtype=np.complex128)
    return reduce(tensor, ops)


def partial_trace(op, space: FactorSpace, keep: Iterable[str]) -> Operator:
    """Trace out every factor of `space` not in `keep`; kept factors stay in their original order."""
    op = as_operator(op)
    _check_square(op, space)
    kept = space.keep(keep)
    n = len(space.dims)
    keep_idx = [i for i, lab in enumerate(space.labels) if lab in set(kept.labels)]
    drop_idx = [i for i in range(n) if i not in keep_idx]
    if not drop_idx:
        return op.copy()
    t = op.reshape(space.dims + space.dims)
    t = t.transpose(keep_idx + drop_idx + [n + i for i in keep_idx] + [n + i for i in drop_idx])
    dk, dd = kept.dim, op.shape[0] // kept.dim
    return np.einsum("ijkj->ik", t.reshape(dk, dd, dk, dd))


def permute_factors(op, space: FactorSpace, order: Sequence[str]) -> Operator:
    """Re-express `op` with its tensor factors arranged as `order` (a permutation of space.labels)."""
    op = as_operator(op)
    _check_square(op, space)
    if sorted(order) != sorted(space.labels):
        raise InvariantError("unknown label", f"{tuple(order)} is not a permutation of {space.labels}")
    n = len(space.dims)
    perm = [space.index(lab) for lab in order]
    t = op.reshape(space.dims + space.dims).transpose(perm + [n + i for i in perm])
    return t.reshape(op.shape)


def _apply_rows(f: Operator, mat: Operator, row_dims: Sequence[int], targets: Sequence[int],
                out_dims: Sequence[int]) -> Operator:
    """Multiply `f` into the row factors `targets` of `mat`; returns the new matrix."""
    cols = mat.shape[1]
    k = len(targets)
    t = mat.reshape(tuple(row_dims) + (cols,))
    t = np.moveaxis(t, list(targets), list(range(k)))
    rest = t.shape[k:]
    t = f @ t.reshape(f.shape[1], -1)
    t = t.reshape(tuple(out_dims) + rest)
    t = np.moveaxis(t, list(range(k)), list(targets))
    new_rows = list(row_dims)
    for i, d in zip(targets, out_dims):
        new_rows[i] = d
    return t.reshape(int(np.prod(new_rows, dtype=np.int64)), cols)


def apply_local(f, op, space: FactorSpace, targets: Sequence[str],
                output_dims: Sequence[int] | None = None) -> tuple[Operator, FactorSpace]:
    """Return ``(F ⊗ I) op (F ⊗ I)†`` with F acting on `targets` (in that order).

    F may be rectangular: `output_dims` then gives the new dimensions of the
    targeted factors, and the returned space carries them.
    """
    f = as_operator(f)
    op = as_operator(op)
    _check_square(op, space)
    idx = [space.index(lab) for lab in targets]
    in_dims = [space.dims[i] for i in idx]
    out_dims = list(in_dims if output_dims is None else output_dims)
    if len(out_dims) != len(idx):
        raise DimensionMismatch(f"{len(out_dims)} output dims for {len(idx)} targets")
    if f.shape != (int(np.prod(out_dims)), int(np.prod(in_dims))):
        raise DimensionMismatch(f"operator {f.shape} on factors {tuple(targets)} of dims {tuple(in_dims)}")
    new_space = space.with_dims(dict(zip(targets, out_dims)))
    half = _apply_rows(f, op, space.dims, idx, out_dims)            # F X
    full = _apply_rows(f, half.conj().T, space.dims, idx, out_dims)  # F (F X)†
    return full.conj().T, new_space


# ---------- predicates ----------
def hermiticity_error(op) -> float:
    op = as_operator(op)
    if op.shape[0] != op.shape[1]:
        return float("inf")
    return float(np.max(np.abs(op - op.conj().T), initial=0.0))


def is_hermitian(op, tol: float = TOL.eig) -> bool:
    return hermiticity_error(op) <= tol


def is_psd(op, tol: float = TOL.eig) -> bool:
    return is_hermitian(op, tol) and float(np.linalg.eigvalsh(as_operator(op))[0]) >= -tol


def is_unitary(op, tol: float = TOL.compare) -> bool:
    op = as_operator(op)
    if op.shape[0] != op.shape[1]:
        return False
    return float(np.max(np.abs(op.conj().T @ op - identity(op.shape[0])))) <= tol


def is_projector(op, tol: float = TOL.compare) -> bool:
    op = as_operator(op)
    return is_hermitian(op, tol) and float(np.max(np.abs(op @ op - op), initial=0.0)) <= tol


def max_entry_distance(a, b) -> float:
    return float(np.max(np.abs(as_operator(a) - as_operator(b)), initial=0.0))


# ---------- spectral ----------
def hermitian_eig(op, tol: float = TOL.eig) -> tuple[np.ndarray, Operator]:
    """Eigenvalues in descending order and the matching eigenvector columns."""
    op = as_operator(op)
    err = hermiticity_error(op)
    if err > tol:
        raise InvariantError("not Hermitian", f"max |A - A†| = {err:.3g}")
    h = (op + op.conj().T) / 2
    w, v = np.linalg.eigh(h)
    return w[::-1].copy(), v[:, ::-1].copy()


def psd_sqrt(op, tol: float = TOL.eig) -> Operator:
    w, v = hermitian_eig(op, tol)
    if w.size and w[-1] < -tol:
        raise InvariantError("not PSD", f"smallest eigenvalue {w[-1]:.3g}")
    root = np.sqrt(np.clip(w, 0.0, None))
    return (v * root) @ v.conj().T


def trace_distance(a, b) -> float:
    a, b = as_operator(a), as_operator(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    w, _ = hermitian_eig(a - b, tol=TOL.compare)
    return 0.5 * float(np.sum(np.abs(w)))


# ---------- random generators (tests, demos) ----------
def random_unitary(d: int, rng: np.random.Generator) -> Operator:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_isometry(rows: int, cols: int, rng: np.random.Generator) -> Operator:
    """A `rows` x `cols` matrix with orthonormal columns (rows >= cols)."""
    if rows < cols:
        raise DimensionMismatch(f"isometry needs rows >= cols, got {rows} x {cols}")
    return random_unitary(rows, rng)[:, :cols]


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> Operator:
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    rho = rho / np.trace(rho).real
    logger.trace("random density operator of dimension {} and rank {}", d, rank)
    return (rho + rho.conj().T) / 2
