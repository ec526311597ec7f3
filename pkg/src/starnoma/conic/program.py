"""Small dense PSD-cone programs over real scalars and complex Hermitian blocks.

A Hermitian block ``X`` of order n is parametrized by n**2 reals: the real
parts of the upper triangle followed by the imaginary parts of the strict
upper triangle. Its PSD constraint is imposed on the real embedding
``[[Re X, -Im X], [Im X, Re X]]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERS = "max_iters"
NUMERICAL_ERROR = "numerical_error"

DEFAULT_TOL = 1e-7


class Affine:
    """Affine function ``sum(coef . z[offset:offset+len]) + const`` of the program variables."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=(), const=0.0):
        self.terms = list(terms)
        self.const = float(const)

    @staticmethod
    def lift(x) -> "Affine":
        return x if isinstance(x, Affine) else Affine((), float(x))

    def __add__(self, other):
        other = Affine.lift(other)
        return Affine(self.terms + other.terms, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Affine([(o, -c) for o, c in self.terms], -self.const)

    def __sub__(self, other):
        return self + (-Affine.lift(other))

    def __rsub__(self, other):
        return Affine.lift(other) - self

    def __mul__(self, k):
        if isinstance(k, Affine):
            raise TypeError("products of variables are not affine")
        k = float(k)
        return Affine([(o, k * c) for o, c in self.terms], k * self.const)

    __rmul__ = __mul__

    def dense(self, n: int) -> np.ndarray:
        row = np.zeros(n)
        for off, coef in self.terms:
            row[off : off + len(coef)] += coef
        return row

    def evaluate(self, z: np.ndarray) -> float:
        return float(sum(coef @ z[off : off + len(coef)] for off, coef in self.terms) + self.const)


def asum(items) -> Affine:
    out = Affine()
    for it in items:
        out = out + it
    return out


@dataclass(frozen=True)
class Scalar:
    name: str
    offset: int

    @property
    def expr(self) -> Affine:
        return Affine([(self.offset, np.ones(1))])


@dataclass(frozen=True)
class HermitianVar:
    name: str
    offset: int
    n: int

    @property
    def size(self) -> int:
        return self.n * self.n

    def trace_with(self, H) -> Affine:
        """``Tr(X H)`` for a Hermitian coefficient matrix ``H``."""
        return Affine([(self.offset, trace_coefficients(np.asarray(H, dtype=complex)))])

    def trace(self) -> Affine:
        return self.trace_with(np.eye(self.n))

    def quad(self, e) -> Affine:
        """``e^H X e``."""
        e = np.asarray(e, dtype=complex)
        return self.trace_with(np.outer(e, e.conj()))

    def diag(self, i: int) -> Affine:
        return Affine([(self.offset + _diag_index(self.n, i), np.ones(1))])


@lru_cache(maxsize=None)
def _layout(n: int):
    iu = np.triu_indices(n)
    iu1 = np.triu_indices(n, 1)
    return iu, iu1


def _diag_index(n: int, i: int) -> int:
    iu, _ = _layout(n)
    return int(np.flatnonzero((iu[0] == i) & (iu[1] == i))[0])


def trace_coefficients(H: np.ndarray) -> np.ndarray:
    n = H.shape[0]
    iu, iu1 = _layout(n)
    re = H.real[iu] * np.where(iu[0] == iu[1], 1.0, 2.0)
    im = 2.0 * H.imag[iu1]
    return np.concatenate([re, im])


def hermitian_from_params(x: np.ndarray, n: int) -> np.ndarray:
    iu, iu1 = _layout(n)
    k = len(iu[0])
    X = np.zeros((n, n), dtype=complex)
    X[iu] = x[:k]
    X[iu1] += 1j * x[k:]
    return X + np.triu(X, 1).conj().T


@lru_cache(maxsize=None)
def embedding_svec_map(n: int):
    """Sparse map (rows, cols, vals) from block parameters to svec of the real embedding."""
    iu, iu1 = _layout(n)
    nre = len(iu[0])
    re_idx = np.zeros((n, n), dtype=int)
    re_idx[iu] = np.arange(nre)
    re_idx = np.triu(re_idx) + np.triu(re_idx, 1).T
    im_idx = np.full((n, n), -1)
    im_idx[iu1] = nre + np.arange(len(iu1[0]))
    rows, cols, vals = [], [], []
    pos = 0
    for J in range(2 * n):
        for I in range(J + 1):
            scale = 1.0 if I == J else np.sqrt(2.0)
            a, p = I % n, I // n
            bb, q = J % n, J // n
            if p == q:
                col, sign = re_idx[a, bb], 1.0
            else:
                # lower-left block holds +Im X, upper-right -Im X
                sign = 1.0 if p == 1 else -1.0
                if a < bb:
                    col = im_idx[a, bb]
                elif a > bb:
                    col, sign = im_idx[bb, a], -sign
                else:
                    col = -1
            if col >= 0:
                rows.append(pos)
                cols.append(col)
                vals.append(sign * scale)
            pos += 1
    return np.array(rows), np.array(cols), np.array(vals)


def svec_len(k: int) -> int:
    return k * (k + 1) // 2


def svec_to_matrix(s: np.ndarray, k: int) -> np.ndarray:
    """Inverse of the upper-triangular, column-major, sqrt(2)-scaled svec."""
    M = np.zeros((k, k))
    idx = 0
    for j in range(k):
        for i in range(j + 1):
            v = s[idx] if i == j else s[idx] / np.sqrt(2.0)
            M[i, j] = M[j, i] = v
            idx += 1
    return M


@dataclass
class ConicProgram:
    """Linear objective, linear (in)equalities and PSD constraints.

    Build with :meth:`scalar`, :meth:`hermitian`, :meth:`add_eq`,
    :meth:`add_le`, :meth:`add_ge`, :meth:`add_lmi`; pass to :func:`solve`.
    """

    num_vars: int = 0
    scalars: list = field(default_factory=list)
    blocks: list = field(default_factory=list)
    eqs: list = field(default_factory=list)
    ineqs: list = field(default_factory=list)  # expr <= 0
    lmis: list = field(default_factory=list)  # k x k nested lists of Affine
    objective: Affine = field(default_factory=Affine)
    sense: str = "min"
    labels: dict = field(default_factory=dict)

    def scalar(self, name: str, lower=None, upper=None) -> Affine:
        v = Scalar(name, self.num_vars)
        self.num_vars += 1
        self.scalars.append(v)
        if lower is not None:
            self.add_ge(v.expr, lower)
        if upper is not None:
            self.add_le(v.expr, upper)
        return v.expr

    def hermitian(self, name: str, n: int) -> HermitianVar:
        X = HermitianVar(name, self.num_vars, n)
        self.num_vars += X.size
        self.blocks.append(X)
        return X

    def _tag(self, kind: str, label):
        if label is not None:
            self.labels.setdefault(label, []).append((kind, len(getattr(self, kind)) - 1))

    def add_eq(self, lhs, rhs=0.0, label=None):
        self.eqs.append(Affine.lift(lhs) - rhs)
        self._tag("eqs", label)

    def add_le(self, lhs, rhs=0.0, label=None):
        self.ineqs.append(Affine.lift(lhs) - rhs)
        self._tag("ineqs", label)

    def add_ge(self, lhs, rhs=0.0, label=None):
        self.ineqs.append(Affine.lift(rhs) - lhs)
        self._tag("ineqs", label)

    def add_lmi(self, matrix, label=None):
        k = len(matrix)
        if any(len(row) != k for row in matrix):
            raise ValueError("LMI must be square")
        self.lmis.append([[Affine.lift(e) for e in row] for row in matrix])
        self._tag("lmis", label)

    def add_hyperbolic(self, x, a, label=None):
        """``x * a >= 1`` with ``x, a >= 0``."""
        self.add_lmi(hyperbolic_as_psd(x, a), label=label)

    def minimize(self, expr):
        self.objective, self.sense = Affine.lift(expr), "min"

    def maximize(self, expr):
        self.objective, self.sense = Affine.lift(expr), "max"

    def count(self, label) -> int:
        return len(self.labels.get(label, []))

    @property
    def num_constraints(self) -> int:
        return len(self.eqs) + len(self.ineqs) + len(self.lmis)

    def standard_form(self):
        """``(c, c0, A, b, cones)`` with ``A z + s = b``, ``s`` in the cone product.

        ``cones`` is a list of ``(kind, dim)`` with kind in zero/nonneg/psd;
        psd dims are matrix orders.
        """
        n = self.num_vars
        rows, b, cones = [], [], []
        blocks_rows = []
        for group, kind in ((self.eqs, "zero"), (self.ineqs, "nonneg")):
            if group:
                for e in group:
                    rows.append(e.dense(n))
                    b.append(-e.const)
                cones.append((kind, len(group)))
        A_dense = np.array(rows).reshape(len(rows), n)
        extra_rows, extra_b = [], []
        for lmi in self.lmis:
            k = len(lmi)
            for j in range(k):
                for i in range(j + 1):
                    scale = 1.0 if i == j else np.sqrt(2.0)
                    e = lmi[i][j]
                    extra_rows.append(-scale * e.dense(n))
                    extra_b.append(scale * e.const)
            cones.append(("psd", k))
        if extra_rows:
            A_dense = np.vstack([A_dense, np.array(extra_rows)])
            b.extend(extra_b)
        c = self.objective.dense(n)
        c0 = self.objective.const
        if self.sense == "max":
            c, c0 = -c, -c0
        # block PSD cones are appended as sparse triplets
        r0 = A_dense.shape[0]
        trip_r, trip_c, trip_v = [], [], []
        for X in self.blocks:
            rr, cc, vv = embedding_svec_map(X.n)
            trip_r.append(rr + r0)
            trip_c.append(cc + X.offset)
            trip_v.append(-vv)
            r0 += svec_len(2 * X.n)
            b.extend([0.0] * svec_len(2 * X.n))
            cones.append(("psd", 2 * X.n))
            blocks_rows.append(X)
        return c, c0, A_dense, (trip_r, trip_c, trip_v), np.array(b, dtype=float), cones


def hyperbolic_as_psd(x, a):
    """2x2 block ``[[x, 1], [1, a]]``; PSD iff ``x, a >= 0`` and ``x * a >= 1``."""
    return [[Affine.lift(x), Affine.lift(1.0)], [Affine.lift(1.0), Affine.lift(a)]]


def dump_triplets(program: ConicProgram, path) -> None:
    """Write the standard form as plain-text triplets for external checking."""
    import scipy.sparse as sp

    c, c0, A_dense, (tr, tc, tv), b, cones = program.standard_form()
    A = _assemble(A_dense, tr, tc, tv, len(b), program.num_vars)
    A = sp.coo_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"# vars {program.num_vars} rows {len(b)} sense {program.sense} offset {c0!r}\n")
        fh.write("# cones " + " ".join(f"{k}:{d}" for k, d in cones) + "\n")
        for i, v in enumerate(c):
            if v != 0.0:
                fh.write(f"c {i} {v!r}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"A {i} {j} {v!r}\n")
        for i, v in enumerate(b):
            if v != 0.0:
                fh.write(f"b {i} {v!r}\n")


def _assemble(A_dense, tr, tc, tv, nrows, ncols):
    import scipy.sparse as sp

    top = sp.csc_matrix(A_dense) if A_dense.size else sp.csc_matrix((A_dense.shape[0], ncols))
    if tr:
        r = np.concatenate(tr) - A_dense.shape[0]
        low = sp.csc_matrix(
            (np.concatenate(tv), (r, np.concatenate(tc))), shape=(nrows - A_dense.shape[0], ncols)
        )
        return sp.vstack([top, low], format="csc")
    return top
