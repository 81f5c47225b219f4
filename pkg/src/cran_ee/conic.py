"""Small conic-program IR and interior-point backend bridge.

The optimization subproblems need four constraint families: linear,
rotated second-order cones (for the quadratic difference-of-convex
surrogates), exponential cones (for scalar logs), and PSD blocks (for the
covariances and the log-det construction).  This module provides exactly
that, nothing more: a flat real variable vector, sparse linear expressions,
typed cone constraints, and a lowering to a conic interior-point solver.

Complex Hermitian matrix variables are handled by declaring their real
degrees of freedom (upper-triangle real parts and strict-upper imaginary
parts) and writing the standard real embedding

    R(H) = [[Re H, -Im H], [Im H, Re H]]

as an affine image of those variables, so H is PSD iff the embedded block
is, and `Re tr(A H)` couplings are exact by construction.  Note tr R(H) =
2 tr H; the numeric :func:`embed_hermitian` helper carries that doubling,
the variable-level API does not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse


class ConicError(Exception):
    """Malformed program construction or lowering."""


class NonHermitianError(ConicError):
    def __init__(self, deviation: float, tol: float):
        super().__init__(f"matrix is not Hermitian: deviation {deviation:.3e} > {tol:.0e}")
        self.deviation, self.tol = deviation, tol


OPTIMAL = "optimal"
NEAR_OPTIMAL = "near-optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"


class LinExpr:
    """Sparse affine expression c . x + d over program variable indices."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Optional[Dict[int, float]] = None, const: float = 0.0):
        self.terms = terms if terms is not None else {}
        self.const = float(const)

    @staticmethod
    def constant(c: float) -> "LinExpr":
        return LinExpr({}, c)

    def copy(self) -> "LinExpr":
        return LinExpr(dict(self.terms), self.const)

    def add_term(self, idx: int, coeff: float) -> None:
        if coeff == 0.0:
            return
        new = self.terms.get(idx, 0.0) + coeff
        if new == 0.0:
            self.terms.pop(idx, None)
        else:
            self.terms[idx] = new

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, LinExpr):
            for i, c in other.terms.items():
                out.add_term(i, c)
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({i: -c for i, c in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-other if isinstance(other, LinExpr) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        s = float(scalar)
        if s == 0.0:
            return LinExpr()
        return LinExpr({i: c * s for i, c in self.terms.items()}, self.const * s)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[i] for i, c in self.terms.items())

    def render(self, names: Dict[int, str]) -> str:
        parts = [f"{c:+.12g}*{names.get(i, f'x{i}')}" for i, c in sorted(self.terms.items())]
        if self.const != 0.0 or not parts:
            parts.append(f"{self.const:+.12g}")
        return " ".join(parts)


def as_expr(v) -> LinExpr:
    return v if isinstance(v, LinExpr) else LinExpr.constant(float(v))


@dataclass
class _Constraint:
    kind: str                      # zero | nonneg | soc | rsoc | exp | psd
    exprs: list                    # flat list, or list of rows for psd
    label: str = ""


@dataclass
class SolveResult:
    """Outcome of one conic solve, keyed back to declared variable names."""

    status: str
    objective: float
    values: Dict[str, Union[float, np.ndarray]]
    iterations: int
    primal_residual: float
    dual_residual: float
    raw_status: str = ""
    x: Optional[np.ndarray] = None

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, NEAR_OPTIMAL)


class SymmetricBlock:
    """Real symmetric matrix variable (entries for i <= j, mirrored below)."""

    def __init__(self, name: str, dim: int, index: Dict[Tuple[int, int], int]):
        self.name, self.dim, self._index = name, dim, index

    def entry(self, i: int, j: int) -> LinExpr:
        if i > j:
            i, j = j, i
        return LinExpr({self._index[(i, j)]: 1.0})

    def matexpr(self) -> list:
        return [[self.entry(i, j) for j in range(self.dim)] for i in range(self.dim)]

    def trace_expr(self) -> LinExpr:
        out = LinExpr()
        for i in range(self.dim):
            out.add_term(self._index[(i, i)], 1.0)
        return out


class HermitianBlock:
    """Complex Hermitian matrix variable via its real degrees of freedom.

    ``re_index[(i, j)]`` (i <= j) holds Re H_ij; ``im_index[(i, j)]``
    (i < j) holds Im H_ij.  The PSD constraint is placed on the affine real
    embedding, so solved values are Hermitian PSD up to solver tolerance.
    """

    def __init__(self, name: str, dim: int,
                 re_index: Dict[Tuple[int, int], int],
                 im_index: Dict[Tuple[int, int], int]):
        self.name, self.dim = name, dim
        self._re, self._im = re_index, im_index

    def re_entry(self, i: int, j: int) -> LinExpr:
        if i > j:
            i, j = j, i
        return LinExpr({self._re[(i, j)]: 1.0})

    def im_entry(self, i: int, j: int) -> LinExpr:
        if i == j:
            return LinExpr()
        if i > j:
            return LinExpr({self._im[(j, i)]: -1.0})
        return LinExpr({self._im[(i, j)]: 1.0})

    def trace_inner(self, a: np.ndarray) -> LinExpr:
        """Exact ``Re tr(A H)`` for a numeric Hermitian coefficient A."""
        a = np.asarray(a, dtype=complex)
        if a.shape != (self.dim, self.dim):
            raise ConicError(f"coefficient shape {a.shape} != block dim {self.dim}")
        dev = float(np.max(np.abs(a - a.conj().T)))
        if dev > 1e-9 * max(1.0, float(np.max(np.abs(a)))):
            raise NonHermitianError(dev, 1e-9)
        out = LinExpr()
        for i in range(self.dim):
            out.add_term(self._re[(i, i)], float(a[i, i].real))
            for j in range(i + 1, self.dim):
                out.add_term(self._re[(i, j)], 2.0 * float(a[i, j].real))
                out.add_term(self._im[(i, j)], 2.0 * float(a[i, j].imag))
        return out

    def block_trace(self, rows: slice) -> LinExpr:
        """Real trace of the (rows, rows) diagonal sub-block."""
        out = LinExpr()
        for i in range(*rows.indices(self.dim)):
            out.add_term(self._re[(i, i)], 1.0)
        return out

    def embedded(self) -> list:
        """Affine 2n x 2n real-embedding matrix [[X, -Y], [Y, X]]."""
        n = self.dim
        top = [[self.re_entry(i, j) for j in range(n)]
               + [-1.0 * self.im_entry(i, j) for j in range(n)] for i in range(n)]
        bot = [[self.im_entry(i, j) for j in range(n)]
               + [self.re_entry(i, j) for j in range(n)] for i in range(n)]
        return top + bot

    def extract(self, x: np.ndarray) -> np.ndarray:
        h = np.zeros((self.dim, self.dim), dtype=complex)
        for (i, j), idx in self._re.items():
            h[i, j] += x[idx]
            if i != j:
                h[j, i] += x[idx]
        for (i, j), idx in self._im.items():
            h[i, j] += 1j * x[idx]
            h[j, i] += -1j * x[idx]
        return h


def embed_hermitian(h: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Real symmetric embedding [[Re H, -Im H], [Im H, Re H]] of a Hermitian H.

    PSD iff H is PSD; eigenvalues are those of H with doubled multiplicity,
    so the trace doubles (callers coupling traces through the embedding must
    halve them).
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ConicError(f"expected a square matrix, got {h.shape}")
    dev = float(np.max(np.abs(h - h.conj().T)))
    if dev > tol * max(1.0, float(np.max(np.abs(h)))):
        raise NonHermitianError(dev, tol)
    x, y = h.real, h.imag
    return np.block([[x, -y], [y, x]])


def deembed_hermitian(s: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed_hermitian`, averaging out solver asymmetry."""
    s = np.asarray(s, dtype=float)
    n2 = s.shape[0]
    if s.ndim != 2 or s.shape[1] != n2 or n2 % 2:
        raise ConicError(f"expected an even-dimension square matrix, got {s.shape}")
    n = n2 // 2
    x = 0.5 * (s[:n, :n] + s[n:, n:])
    y = 0.5 * (s[n:, :n] - s[:n, n:])
    h = 0.5 * (x + x.T) + 0.5j * (y - y.T)
    return h


class ConicProgram:
    """Linear objective over a flat real variable vector plus typed cones."""

    def __init__(self):
        self.num_vars = 0
        self._names: Dict[int, str] = {}
        self._scalars: Dict[str, int] = {}
        self._vectors: Dict[str, List[int]] = {}
        self._sym_blocks: Dict[str, SymmetricBlock] = {}
        self._herm_blocks: Dict[str, HermitianBlock] = {}
        self._constraints: List[_Constraint] = []
        self._objective = LinExpr()
        self._maximize = True
        self._aux = 0

    # -- variable declaration ------------------------------------------------

    def _new_var(self, name: str) -> int:
        idx = self.num_vars
        self.num_vars += 1
        self._names[idx] = name
        return idx

    def _check_fresh(self, name: str):
        if (name in self._scalars or name in self._vectors
                or name in self._sym_blocks or name in self._herm_blocks):
            raise ConicError(f"variable {name!r} already declared")

    def scalar(self, name: str) -> LinExpr:
        self._check_fresh(name)
        idx = self._new_var(name)
        self._scalars[name] = idx
        return LinExpr({idx: 1.0})

    def vector(self, name: str, size: int) -> List[LinExpr]:
        self._check_fresh(name)
        idxs = [self._new_var(f"{name}[{i}]") for i in range(size)]
        self._vectors[name] = idxs
        return [LinExpr({i: 1.0}) for i in idxs]

    def symmetric_psd(self, name: str, dim: int) -> SymmetricBlock:
        self._check_fresh(name)
        index = {}
        for j in range(dim):
            for i in range(j + 1):
                index[(i, j)] = self._new_var(f"{name}[{i},{j}]")
        blk = SymmetricBlock(name, dim, index)
        self._sym_blocks[name] = blk
        self.add_psd(blk.matexpr(), label=f"{name} psd")
        return blk

    def hermitian_psd(self, name: str, dim: int) -> HermitianBlock:
        self._check_fresh(name)
        re_index, im_index = {}, {}
        for j in range(dim):
            for i in range(j + 1):
                re_index[(i, j)] = self._new_var(f"{name}.re[{i},{j}]")
        for j in range(dim):
            for i in range(j):
                im_index[(i, j)] = self._new_var(f"{name}.im[{i},{j}]")
        blk = HermitianBlock(name, dim, re_index, im_index)
        self._herm_blocks[name] = blk
        self.add_psd(blk.embedded(), label=f"{name} psd (embedded)")
        return blk

    # -- objective and constraints --------------------------------------------

    def set_objective(self, expr: LinExpr, maximize: bool = True) -> None:
        self._objective = as_expr(expr)
        self._maximize = maximize

    def add_eq(self, expr, label: str = "") -> None:
        """expr == 0."""
        self._constraints.append(_Constraint("zero", [as_expr(expr)], label))

    def add_nonneg(self, expr, label: str = "") -> None:
        """expr >= 0."""
        self._constraints.append(_Constraint("nonneg", [as_expr(expr)], label))

    def add_le(self, lhs, rhs, label: str = "") -> None:
        self.add_nonneg(as_expr(rhs) - as_expr(lhs), label)

    def add_soc(self, bound, parts: Sequence, label: str = "") -> None:
        """bound >= 2-norm of parts."""
        self._constraints.append(
            _Constraint("soc", [as_expr(bound)] + [as_expr(p) for p in parts], label))

    def add_rsoc(self, x, y, parts: Sequence, label: str = "") -> None:
        """2*x*y >= sum of squares of parts (x, y >= 0 implied)."""
        self._constraints.append(
            _Constraint("rsoc", [as_expr(x), as_expr(y)] + [as_expr(p) for p in parts],
                        label))

    def add_exp(self, x, y, z, label: str = "") -> None:
        """y * exp(x / y) <= z with y > 0 (closure taken by the cone)."""
        self._constraints.append(
            _Constraint("exp", [as_expr(x), as_expr(y), as_expr(z)], label))

    def add_psd(self, matexpr: Sequence[Sequence], label: str = "") -> None:
        """Affine symmetric matrix expression is positive semidefinite."""
        dim = len(matexpr)
        rows = []
        for i, row in enumerate(matexpr):
            if len(row) != dim:
                raise ConicError(f"psd block row {i} has length {len(row)}, expected {dim}")
            rows.append([as_expr(e) for e in row])
        self._constraints.append(_Constraint("psd", rows, label))

    # -- spec'd encodings ------------------------------------------------------

    def add_quad_le_affine(self, quad, rhs, label: str = "") -> None:
        """quad^2 <= rhs with quad affine and rhs affine (rhs >= 0 implied)."""
        self.add_rsoc(as_expr(rhs), LinExpr.constant(0.5), [as_expr(quad)], label)

    def add_log_upper(self, z, g, label: str = "") -> None:
        """z <= log(1 + g): exponential-cone hypograph of the rate logarithm."""
        self.add_exp(as_expr(z), LinExpr.constant(1.0), 1.0 + as_expr(g), label)

    def add_logdet_lower(self, matexpr: Sequence[Sequence], v, label: str = "") -> None:
        """v <= log det(A) for an affine symmetric PSD matrix expression A.

        Standard construction: an upper-triangular auxiliary block Z with
        diagonal D couples to A through ``[[diag(D), Z], [Z^T, A]] >= 0``,
        which forces ``prod(D) <= det A``; per-diagonal exponential cones
        then cap v by ``sum log D_ii``.
        """
        n = len(matexpr)
        tag = f"logdet{self._aux}"
        self._aux += 1
        zvars = {}
        for i in range(n):
            for j in range(i, n):
                zvars[(i, j)] = self.scalar(f"_{tag}.z[{i},{j}]")
        ts = self.vector(f"_{tag}.t", n)
        zero = LinExpr()
        big = []
        for i in range(n):
            big.append([zvars[(i, i)] if i == r else zero for r in range(n)]
                       + [zvars[(i, j)] if j >= i else zero for j in range(n)])
        for i in range(n):
            big.append([zvars[(j, i)] if i >= j else zero for j in range(n)]
                       + [as_expr(matexpr[i][j]) for j in range(n)])
        self.add_psd(big, label=f"{label or tag} coupling")
        for i in range(n):
            # t_i <= log D_ii  <=>  exp(t_i) <= D_ii
            self.add_exp(ts[i], LinExpr.constant(1.0), zvars[(i, i)],
                         label=f"{label or tag} diag {i}")
        total = LinExpr()
        for t in ts:
            total = total + t
        self.add_nonneg(total - as_expr(v), label=f"{label or tag} sum")

    # -- introspection ----------------------------------------------------------

    def dump(self) -> str:
        """Cone-by-cone plain-text listing of the program."""
        out = [f"vars {self.num_vars}"]
        sense = "maximize" if self._maximize else "minimize"
        out.append(f"{sense} {self._objective.render(self._names)}")
        for c in self._constraints:
            head = c.kind + (f"  # {c.label}" if c.label else "")
            out.append(head)
            if c.kind == "psd":
                for row in c.exprs:
                    out.append("  [ " + " | ".join(e.render(self._names) for e in row) + " ]")
            else:
                for e in c.exprs:
                    out.append("  " + e.render(self._names))
        return "\n".join(out) + "\n"

    def evaluate_objective(self, x: np.ndarray) -> float:
        return self._objective.value(x)

    def cone_counts(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for c in self._constraints:
            out[c.kind] = out.get(c.kind, 0) + 1
        return out

    def psd_dims(self) -> List[int]:
        return [len(c.exprs) for c in self._constraints if c.kind == "psd"]

    def assignment(self, values: Dict[str, Union[float, np.ndarray]]) -> np.ndarray:
        """Variable vector with the named quantities set (others left at 0).

        Scalars take floats, vectors 1-d arrays, symmetric blocks real
        matrices, Hermitian blocks complex matrices.
        """
        x = np.zeros(self.num_vars)
        for name, val in values.items():
            if name in self._scalars:
                x[self._scalars[name]] = float(val)
            elif name in self._vectors:
                idxs = self._vectors[name]
                arr = np.asarray(val, dtype=float).ravel()
                if arr.size != len(idxs):
                    raise ConicError(f"{name}: expected {len(idxs)} entries, got {arr.size}")
                for i, idx in enumerate(idxs):
                    x[idx] = arr[i]
            elif name in self._sym_blocks:
                blk = self._sym_blocks[name]
                mat = np.asarray(val, dtype=float)
                for (i, j), idx in blk._index.items():
                    x[idx] = 0.5 * (mat[i, j] + mat[j, i])
            elif name in self._herm_blocks:
                blk = self._herm_blocks[name]
                mat = np.asarray(val, dtype=complex)
                for (i, j), idx in blk._re.items():
                    x[idx] = 0.5 * (mat[i, j] + np.conj(mat[j, i])).real
                for (i, j), idx in blk._im.items():
                    x[idx] = (0.5 * (mat[i, j] + np.conj(mat[j, i]))).imag
            else:
                raise ConicError(f"unknown variable {name!r}")
        return x

    def constraint_slacks(self, x: np.ndarray) -> List[Tuple[str, str, float]]:
        """(kind, label, slack) per constraint; slack >= 0 means satisfied.

        zero rows report the negated absolute residual so the same sign
        convention applies everywhere.
        """
        out = []
        for c in self._constraints:
            if c.kind == "zero":
                s = -abs(c.exprs[0].value(x))
            elif c.kind == "nonneg":
                s = c.exprs[0].value(x)
            elif c.kind == "soc":
                vals = [e.value(x) for e in c.exprs]
                s = vals[0] - float(np.linalg.norm(vals[1:]))
            elif c.kind == "rsoc":
                vals = [e.value(x) for e in c.exprs]
                s = min(2.0 * vals[0] * vals[1] - float(np.sum(np.square(vals[2:]))),
                        vals[0], vals[1])
            elif c.kind == "exp":
                xv, yv, zv = (e.value(x) for e in c.exprs)
                if yv > 0:
                    s = zv - yv * np.exp(xv / yv)
                else:  # closure: y = 0 requires x <= 0, z >= 0
                    s = min(zv, -xv) if yv == 0 else -np.inf
            else:  # psd
                mat = np.array([[e.value(x) for e in row] for row in c.exprs])
                s = float(np.linalg.eigvalsh(0.5 * (mat + mat.T))[0])
            out.append((c.kind, c.label, float(s)))
        return out

    def extract_values(self, x: np.ndarray) -> Dict[str, Union[float, np.ndarray]]:
        vals: Dict[str, Union[float, np.ndarray]] = {}
        for name, idx in self._scalars.items():
            if not name.startswith("_"):
                vals[name] = float(x[idx])
        for name, idxs in self._vectors.items():
            if not name.startswith("_"):
                vals[name] = np.array([x[i] for i in idxs])
        for name, blk in self._sym_blocks.items():
            mat = np.zeros((blk.dim, blk.dim))
            for (i, j), idx in blk._index.items():
                mat[i, j] = mat[j, i] = x[idx]
            vals[name] = mat
        for name, blk in self._herm_blocks.items():
            vals[name] = blk.extract(x)
        return vals


# ---------------------------------------------------------------------------
# lowering to the interior-point backend


class ConicBackend:
    """Anything that can solve a ConicProgram."""

    def solve(self, program: ConicProgram) -> SolveResult:  # pragma: no cover
        raise NotImplementedError


def _svec_rows(rows: List[List[LinExpr]]) -> List[LinExpr]:
    """Scaled upper-triangle column-major vectorization of a matrix expression."""
    dim = len(rows)
    rt2 = np.sqrt(2.0)
    out = []
    for j in range(dim):
        for i in range(j + 1):
            e = 0.5 * (rows[i][j] + rows[j][i])  # symmetrize defensively
            out.append(e if i == j else rt2 * e)
    return out


class ClarabelBackend(ConicBackend):
    """Interior-point conic solve via Clarabel.

    Default tolerances are 1e-8 on feasibility and duality gap, matching the
    internally rescaled problems this package builds.
    """

    def __init__(self, feas_tol: float = 1e-8, gap_tol: float = 1e-8,
                 max_iter: int = 200, verbose: bool = False):
        self.feas_tol, self.gap_tol = feas_tol, gap_tol
        self.max_iter, self.verbose = max_iter, verbose

    _STATUS_MAP = {
        "Solved": OPTIMAL,
        "AlmostSolved": NEAR_OPTIMAL,
        "PrimalInfeasible": INFEASIBLE,
        "AlmostPrimalInfeasible": INFEASIBLE,
        "DualInfeasible": UNBOUNDED,
        "AlmostDualInfeasible": UNBOUNDED,
    }

    def solve(self, program: ConicProgram) -> SolveResult:
        import clarabel

        n = program.num_vars
        trip_i: List[int] = []
        trip_j: List[int] = []
        trip_v: List[float] = []
        b: List[float] = []
        cones = []
        row = 0

        def push(expr: LinExpr):
            nonlocal row
            for idx, coeff in expr.terms.items():
                trip_i.append(row)
                trip_j.append(idx)
                trip_v.append(-coeff)
            b.append(expr.const)
            row += 1

        # group zero and nonneg rows first so they form two big cones
        zeros = [c for c in program._constraints if c.kind == "zero"]
        nonnegs = [c for c in program._constraints if c.kind == "nonneg"]
        others = [c for c in program._constraints
                  if c.kind not in ("zero", "nonneg")]
        if zeros:
            for c in zeros:
                push(c.exprs[0])
            cones.append(clarabel.ZeroConeT(len(zeros)))
        if nonnegs:
            for c in nonnegs:
                push(c.exprs[0])
            cones.append(clarabel.NonnegativeConeT(len(nonnegs)))
        for c in others:
            if c.kind == "soc":
                for e in c.exprs:
                    push(e)
                cones.append(clarabel.SecondOrderConeT(len(c.exprs)))
            elif c.kind == "rsoc":
                x, y, parts = c.exprs[0], c.exprs[1], c.exprs[2:]
                push(x + y)
                push(x - y)
                for p in parts:
                    push(np.sqrt(2.0) * p)
                cones.append(clarabel.SecondOrderConeT(2 + len(parts)))
            elif c.kind == "exp":
                for e in c.exprs:
                    push(e)
                cones.append(clarabel.ExponentialConeT())
            elif c.kind == "psd":
                for e in _svec_rows(c.exprs):
                    push(e)
                cones.append(clarabel.PSDTriangleConeT(len(c.exprs)))
            else:  # pragma: no cover
                raise ConicError(f"unknown constraint kind {c.kind!r}")

        a_mat = sparse.csc_matrix(
            (trip_v, (trip_i, trip_j)), shape=(row, n), dtype=float)
        p_mat = sparse.csc_matrix((n, n), dtype=float)
        q = np.zeros(n)
        sign = -1.0 if program._maximize else 1.0
        for idx, coeff in program._objective.terms.items():
            q[idx] = sign * coeff

        settings = clarabel.DefaultSettings()
        settings.verbose = self.verbose
        settings.max_iter = self.max_iter
        settings.tol_feas = self.feas_tol
        settings.tol_gap_abs = self.gap_tol
        settings.tol_gap_rel = self.gap_tol
        solver = clarabel.DefaultSolver(p_mat, q, a_mat, np.array(b), cones, settings)
        sol = solver.solve()

        raw = str(sol.status)
        status = self._STATUS_MAP.get(raw, NUMERICAL_FAILURE)
        x = np.asarray(sol.x, dtype=float)
        finite = np.all(np.isfinite(x))
        if status in (OPTIMAL, NEAR_OPTIMAL) and not finite:
            status = NUMERICAL_FAILURE
        values = program.extract_values(x) if finite else {}
        objective = program.evaluate_objective(x) if finite else float("nan")
        return SolveResult(
            status=status,
            objective=objective,
            values=values,
            iterations=int(getattr(sol, "iterations", 0)),
            primal_residual=float(getattr(sol, "r_prim", np.nan)),
            dual_residual=float(getattr(sol, "r_dual", np.nan)),
            raw_status=raw,
            x=x if finite else None,
        )


class ScsBackend(ConicBackend):
    """First-order splitting solve via SCS.

    Reaches moderate accuracy only, but its convergence does not depend on
    strict complementarity, so it keeps moving on problems whose solution
    sits on a degenerate face of the PSD cone -- exactly where interior-point
    step sizes collapse.  Suited as a rescue stage, not as the default.
    """

    def __init__(self, eps: float = 1e-7, max_iters: int = 50_000,
                 verbose: bool = False):
        self.eps, self.max_iters, self.verbose = eps, max_iters, verbose

    @staticmethod
    def _map_status(raw: str) -> str:
        if raw.startswith("solved (inaccurate"):
            return NEAR_OPTIMAL
        if raw.startswith("solved"):
            return OPTIMAL
        if raw.startswith("infeasible"):
            return INFEASIBLE
        if raw.startswith("unbounded"):
            return UNBOUNDED
        return NUMERICAL_FAILURE

    def solve(self, program: ConicProgram) -> SolveResult:
        import scs

        n = program.num_vars
        trip_i: List[int] = []
        trip_j: List[int] = []
        trip_v: List[float] = []
        b: List[float] = []
        row = 0

        def push(expr: LinExpr):
            nonlocal row
            for idx, coeff in expr.terms.items():
                trip_i.append(row)
                trip_j.append(idx)
                trip_v.append(-coeff)
            b.append(expr.const)
            row += 1

        # SCS fixes the cone order globally: zero, nonneg, SOC, PSD, exp.
        by_kind = {k: [c for c in program._constraints if c.kind == k]
                   for k in ("zero", "nonneg", "soc", "rsoc", "exp", "psd")}
        for c in by_kind["zero"]:
            push(c.exprs[0])
        for c in by_kind["nonneg"]:
            push(c.exprs[0])
        q_sizes = []
        for c in by_kind["soc"] + by_kind["rsoc"]:
            if c.kind == "soc":
                for e in c.exprs:
                    push(e)
                q_sizes.append(len(c.exprs))
            else:
                x, y, parts = c.exprs[0], c.exprs[1], c.exprs[2:]
                push(x + y)
                push(x - y)
                for p in parts:
                    push(np.sqrt(2.0) * p)
                q_sizes.append(2 + len(parts))
        s_sizes = []
        rt2 = np.sqrt(2.0)
        for c in by_kind["psd"]:
            rows = c.exprs
            dim = len(rows)
            # lower triangle, column-major, off-diagonals scaled by sqrt(2)
            for j in range(dim):
                for i in range(j, dim):
                    e = 0.5 * (rows[i][j] + rows[j][i])
                    push(e if i == j else rt2 * e)
            s_sizes.append(dim)
        for c in by_kind["exp"]:
            for e in c.exprs:
                push(e)

        a_mat = sparse.csc_matrix(
            (trip_v, (trip_i, trip_j)), shape=(row, n), dtype=float)
        c_vec = np.zeros(n)
        sign = -1.0 if program._maximize else 1.0
        for idx, coeff in program._objective.terms.items():
            c_vec[idx] = sign * coeff

        cone = dict(z=len(by_kind["zero"]), l=len(by_kind["nonneg"]),
                    q=q_sizes, s=s_sizes, ep=len(by_kind["exp"]))
        sol = scs.solve(dict(A=a_mat, b=np.array(b), c=c_vec), cone,
                        eps_abs=self.eps, eps_rel=self.eps,
                        max_iters=self.max_iters, verbose=self.verbose)
        info = sol["info"]
        raw = str(info.get("status", "failed"))
        status = self._map_status(raw)
        x = np.asarray(sol["x"], dtype=float)
        finite = x.size == n and bool(np.all(np.isfinite(x)))
        if status in (OPTIMAL, NEAR_OPTIMAL) and not finite:
            status = NUMERICAL_FAILURE
        values = program.extract_values(x) if finite else {}
        objective = program.evaluate_objective(x) if finite else float("nan")
        return SolveResult(
            status=status,
            objective=objective,
            values=values,
            iterations=int(info.get("iter", 0)),
            primal_residual=float(info.get("res_pri", np.nan)),
            dual_residual=float(info.get("res_dual", np.nan)),
            raw_status=raw,
            x=x if finite else None,
        )


_DEFAULT_BACKEND: Optional[ConicBackend] = None


def default_backend() -> ConicBackend:
    global _DEFAULT_BACKEND
    if _DEFAULT_BACKEND is None:
        _DEFAULT_BACKEND = ClarabelBackend()
    return _DEFAULT_BACKEND


def solve(program: ConicProgram, backend: Optional[ConicBackend] = None) -> SolveResult:
    """Solve the program with the given (or default interior-point) backend."""
    return (backend or default_backend()).solve(program)
