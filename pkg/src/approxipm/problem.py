"""Bound-constrained problems: minimize f(x) subject to l <= x <= u.

Problem file grammar (UTF-8, line oriented, ``#`` starts a comment)::

    qp <n>
    H
    <i> <j> <value>        # zero-based, any number of lines
    c
    <n values>             # may wrap over several lines
    l
    <n values>             # ``-inf`` allowed
    u
    <n values>             # ``inf`` allowed
    const                  # optional section
    <value>

Section keywords stand alone on their line. ``H`` triplets are read as
lower-triangle entries: an entry with ``j > i`` is mirrored to ``(j, i)``
and duplicates are summed. ``serialize`` writes the canonical form, which
``parse_problem`` reads back to an identical problem.
"""

from __future__ import annotations

import enum
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import AsymmetricHessian, CrossedBounds, ProblemFormatError

# Above this dimension the Hessian is kept in CSR form.
DENSE_LIMIT = 512
_SYMMETRY_RTOL = 1e-12

Evaluator = Callable[[np.ndarray], tuple]


class BoundClass(enum.Enum):
    LOWER_ONLY = "lower-only"
    UPPER_ONLY = "upper-only"
    TWO_SIDED = "two-sided"
    FREE = "free"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class BoundedProblem:
    """A smooth objective with extended-real bounds.

    ``objective(x)`` must return ``(f, grad, hess)`` where ``hess`` is a
    symmetric ``n x n`` array (dense or scipy sparse).
    """

    def __init__(self, lower: Sequence[float], upper: Sequence[float], objective: Evaluator):
        self.lower = _frozen(lower)
        self.upper = _frozen(upper)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        self.n = self.lower.size
        self._objective = objective
        self.has_lower = np.isfinite(self.lower)
        self.has_upper = np.isfinite(self.upper)
        self.has_lower.setflags(write=False)
        self.has_upper.setflags(write=False)

    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        f, g, h = self._objective(np.asarray(x, dtype=float))
        return float(f), np.asarray(g, dtype=float), h

    def value(self, x: np.ndarray) -> float:
        return self.evaluate(x)[0]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)[1]

    def hessian(self, x: np.ndarray):
        return self.evaluate(x)[2]

    def interior_probe(self) -> np.ndarray:
        """A point strictly inside the bounds (used by ``validate``)."""
        return clip_interior(np.zeros(self.n), self.lower, self.upper)


class QuadraticProblem(BoundedProblem):
    """f(x) = 1/2 x'Hx + c'x + constant with H given as triplets.

    With ``storage="lower"`` (the canonical form) triplets are folded onto
    the lower triangle, so H is symmetric by construction. ``storage="full"``
    takes the triplets literally; ``validate`` then catches asymmetry.
    """

    def __init__(
        self,
        n: int,
        rows: Iterable[int],
        cols: Iterable[int],
        vals: Iterable[float],
        linear: Sequence[float],
        lower: Sequence[float],
        upper: Sequence[float],
        constant: float = 0.0,
        storage: str = "lower",
    ):
        rows = np.asarray(list(rows), dtype=np.int64)
        cols = np.asarray(list(cols), dtype=np.int64)
        vals = np.asarray(list(vals), dtype=float)
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("triplet arrays must have equal length")
        bad = (rows < 0) | (rows >= n) | (cols < 0) | (cols >= n)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise IndexError(f"Hessian triplet ({rows[k]}, {cols[k]}) out of range for n={n}")
        if storage == "lower":
            r = np.maximum(rows, cols)
            c = np.minimum(rows, cols)
        elif storage == "full":
            r, c = rows, cols
        else:
            raise ValueError(f"unknown storage {storage!r}")
        coo = sp.coo_matrix((vals, (r, c)), shape=(n, n))
        coo.sum_duplicates()
        self.storage = storage
        self._tri = coo.tocsr()
        if storage == "lower":
            diag = sp.diags(self._tri.diagonal())
            full = (self._tri + self._tri.T - diag).tocsr()
        else:
            full = self._tri
        self._h_sparse = full
        self._h_dense = full.toarray() if n <= DENSE_LIMIT else None
        if self._h_dense is not None:
            self._h_dense.setflags(write=False)
        self.linear = _frozen(linear)
        if self.linear.shape != (n,):
            raise ValueError(f"linear term must have length {n}")
        self.constant = float(constant)
        super().__init__(lower, upper, self._evaluate_quadratic)
        if self.n != n:
            raise ValueError(f"bounds must have length {n}")

    @property
    def H(self):
        """Full symmetric Hessian: ndarray when n <= 512, CSR otherwise."""
        return self._h_dense if self._h_dense is not None else self._h_sparse

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Canonical stored triplets sorted by (row, col)."""
        coo = self._tri.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def _evaluate_quadratic(self, x):
        hx = self.H @ x
        return 0.5 * x @ hx + self.linear @ x + self.constant, hx + self.linear, self.H

    def hessian_diagonal(self) -> np.ndarray:
        return self._h_sparse.diagonal()

    @classmethod
    def from_dense(cls, H, linear, lower, upper, constant: float = 0.0) -> "QuadraticProblem":
        H = np.asarray(H, dtype=float)
        r, c = np.nonzero(np.tril(H))
        return cls(H.shape[0], r, c, H[r, c], linear, lower, upper, constant)


def clip_interior(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Clip x into [l + d, u - d] with d = min(1, (u - l)/4) per component."""
    width = upper - lower
    d = np.where(np.isfinite(width), np.minimum(1.0, width / 4.0), 1.0)
    lo = np.where(np.isfinite(lower), lower + d, -np.inf)
    hi = np.where(np.isfinite(upper), upper - d, np.inf)
    return np.clip(x, lo, hi)


def validate(problem: BoundedProblem) -> None:
    """Raise CrossedBounds or AsymmetricHessian for an ill-posed problem."""
    crossed = ~(problem.lower < problem.upper)
    if crossed.any():
        raise CrossedBounds(int(np.flatnonzero(crossed)[0]))
    H = problem.hessian(problem.interior_probe())
    H = H.toarray() if sp.issparse(H) else np.asarray(H, dtype=float)
    delta = np.abs(H - H.T)
    scale = max(1.0, float(np.abs(H).max(initial=0.0)))
    if delta.max(initial=0.0) > _SYMMETRY_RTOL * scale:
        i, j = np.unravel_index(int(np.argmax(np.triu(delta))), delta.shape)
        raise AsymmetricHessian(int(i), int(j), float(delta[i, j]))


def bound_classes(problem: BoundedProblem) -> list[BoundClass]:
    out = []
    for lo, hi in zip(problem.has_lower, problem.has_upper):
        if lo and hi:
            out.append(BoundClass.TWO_SIDED)
        elif lo:
            out.append(BoundClass.LOWER_ONLY)
        elif hi:
            out.append(BoundClass.UPPER_ONLY)
        else:
            out.append(BoundClass.FREE)
    return out


_SECTIONS = ("H", "c", "l", "u", "const")


def _to_float(tok: str, line: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ProblemFormatError(f"not a number: {tok!r}", line) from None


def parse_problem(text: str) -> QuadraticProblem:
    n = None
    section = None
    triplets: list[tuple[int, int, float, int]] = []
    vectors: dict[str, list[float]] = {"c": [], "l": [], "u": [], "const": []}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if n is None:
            if toks[0] != "qp" or len(toks) != 2:
                raise ProblemFormatError("expected header 'qp <n>'", lineno)
            try:
                n = int(toks[1])
            except ValueError:
                raise ProblemFormatError(f"bad dimension {toks[1]!r}", lineno) from None
            if n < 1:
                raise ProblemFormatError("dimension must be positive", lineno)
            continue
        if len(toks) == 1 and toks[0] in _SECTIONS:
            section = toks[0]
            if section in seen:
                raise ProblemFormatError(f"duplicate section {section!r}", lineno)
            seen.add(section)
            continue
        if section is None:
            raise ProblemFormatError(f"data outside of a section: {line!r}", lineno)
        if section == "H":
            if len(toks) != 3:
                raise ProblemFormatError("Hessian entries need 'i j value'", lineno)
            try:
                i, j = int(toks[0]), int(toks[1])
            except ValueError:
                raise ProblemFormatError(f"bad index in {line!r}", lineno) from None
            if not (0 <= i < n and 0 <= j < n):
                raise ProblemFormatError(f"index ({i}, {j}) out of range for n={n}", lineno)
            triplets.append((i, j, _to_float(toks[2], lineno), lineno))
        else:
            vectors[section].extend(_to_float(t, lineno) for t in toks)
    if n is None:
        raise ProblemFormatError("missing 'qp <n>' header")
    for name in ("c", "l", "u"):
        if name not in seen:
            raise ProblemFormatError(f"missing section {name!r}")
        if len(vectors[name]) != n:
            raise ProblemFormatError(f"section {name!r} has {len(vectors[name])} values, expected {n}")
    if "const" in seen and len(vectors["const"]) != 1:
        raise ProblemFormatError("section 'const' takes exactly one value")
    constant = vectors["const"][0] if vectors["const"] else 0.0
    rows = [t[0] for t in triplets]
    cols = [t[1] for t in triplets]
    vals = [t[2] for t in triplets]
    return QuadraticProblem(n, rows, cols, vals, vectors["c"], vectors["l"], vectors["u"], constant)


def _fmt(v: float) -> str:
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def serialize(problem: QuadraticProblem) -> str:
    if problem.storage != "lower":
        raise ValueError("only lower-triangle problems have a canonical file form")
    lines = [f"qp {problem.n}", "H"]
    for i, j, v in zip(*problem.triplets()):
        lines.append(f"{i} {j} {_fmt(v)}")
    for name, vec in (("c", problem.linear), ("l", problem.lower), ("u", problem.upper)):
        lines.append(name)
        lines.append(" ".join(_fmt(v) for v in vec))
    if problem.constant != 0.0:
        lines += ["const", _fmt(problem.constant)]
    return "\n".join(lines) + "\n"


def read_problem(path) -> QuadraticProblem:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read())


def write_problem(problem: QuadraticProblem, path, header: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        fh.write(serialize(problem))
