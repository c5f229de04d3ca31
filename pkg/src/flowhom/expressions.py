"""Symbolic scalar/vector fields with exact derivatives.

Fields are polynomial/trigonometric expressions in the ambient
coordinates, parsed by sympy and compiled to vectorized numpy callables.
Derivatives come from the expression tree, so linearization spectra are
exact up to floating point.  Quotient constructions that only exist
numerically are wrapped as `NumericVectorField` with Richardson
finite-difference Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

_ALLOWED_FUNCS = {"sin", "cos", "tan", "tanh", "sqrt", "exp", "pi", "Abs"}


def default_vars(dim: int) -> list[str]:
    if dim <= 3:
        return ["x", "y", "z"][:dim]
    return [f"x{i + 1}" for i in range(dim)]


def parse_expr(text: str, var_names: list[str]) -> sp.Expr:
    """Parse a coordinate expression, restricted to a safe function set."""
    local = {name: sp.Symbol(name, real=True) for name in var_names}
    local.update({name: getattr(sp, name) for name in _ALLOWED_FUNCS})
    expr = sp.sympify(text, locals=local)
    extra = {str(s) for s in expr.free_symbols} - set(var_names)
    if extra:
        raise ValueError(f"unknown symbols {sorted(extra)} in expression {text!r}")
    return expr


def _compile(symbols: list[sp.Symbol], exprs: list[sp.Expr]):
    fn = sp.lambdify(symbols, exprs, modules="numpy")

    def call(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cols = [pts[:, i] for i in range(pts.shape[1])]
        vals = fn(*cols)
        out = np.empty((pts.shape[0], len(exprs)))
        for j, v in enumerate(vals):
            out[:, j] = v  # broadcasts constants
        return out

    return call


@dataclass
class ScalarField:
    """Smooth scalar function given by one expression."""

    expr: sp.Expr
    symbols: list[sp.Symbol]
    _val: object = field(init=False, repr=False)
    _grad: object = field(init=False, repr=False)

    def __post_init__(self):
        self._val = _compile(self.symbols, [self.expr])
        self._grad = _compile(self.symbols, [sp.diff(self.expr, s) for s in self.symbols])

    @classmethod
    def parse(cls, text: str, var_names: list[str]) -> "ScalarField":
        syms = [sp.Symbol(n, real=True) for n in var_names]
        return cls(parse_expr(text, var_names), syms)

    @property
    def dim(self) -> int:
        return len(self.symbols)

    def value(self, points) -> np.ndarray:
        return self._val(points)[:, 0]

    def value_at(self, point) -> float:
        return float(self.value(np.atleast_2d(point))[0])

    def gradient(self, points) -> np.ndarray:
        return self._grad(points)

    def hessian_at(self, point) -> np.ndarray:
        pt = np.asarray(point, dtype=float)
        H = sp.hessian(self.expr, self.symbols)
        fn = sp.lambdify(self.symbols, H, modules="numpy")
        return np.asarray(fn(*pt), dtype=float)


@dataclass
class SymbolicVectorField:
    """Vector field with components given by expressions."""

    exprs: list[sp.Expr]
    symbols: list[sp.Symbol]
    _val: object = field(init=False, repr=False)
    _jac: object = field(init=False, repr=False)

    def __post_init__(self):
        self._val = _compile(self.symbols, list(self.exprs))
        partials = [sp.diff(e, s) for e in self.exprs for s in self.symbols]
        self._jac = _compile(self.symbols, partials)

    @classmethod
    def parse(cls, texts: list[str], var_names: list[str]) -> "SymbolicVectorField":
        syms = [sp.Symbol(n, real=True) for n in var_names]
        return cls([parse_expr(t, var_names) for t in texts], syms)

    @classmethod
    def from_gradient(cls, f: ScalarField) -> "SymbolicVectorField":
        return cls([sp.diff(f.expr, s) for s in f.symbols], f.symbols)

    @classmethod
    def sphere_gradient(cls, f: ScalarField) -> "SymbolicVectorField":
        """|x|^2 grad f - <grad f, x> x; tangent to every sphere |x| = const."""
        syms = f.symbols
        r2 = sum(s**2 for s in syms)
        grads = [sp.diff(f.expr, s) for s in syms]
        radial = sum(g * s for g, s in zip(grads, syms))
        exprs = [sp.expand(r2 * g - radial * s) for g, s in zip(grads, syms)]
        return cls(exprs, syms)

    @property
    def dim(self) -> int:
        return len(self.symbols)

    def value(self, points) -> np.ndarray:
        return self._val(points)

    def value_at(self, point) -> np.ndarray:
        return self.value(np.atleast_2d(point))[0]

    def jacobian_batch(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.dim
        return self._jac(pts).reshape(pts.shape[0], d, d)

    def jacobian_at(self, point) -> np.ndarray:
        return self.jacobian_batch(np.atleast_2d(point))[0]

    def scaled(self, factor: float) -> "SymbolicVectorField":
        return SymbolicVectorField([factor * e for e in self.exprs], self.symbols)


class NumericScalarField:
    """Scalar function backed by a callable; gradient by central differences."""

    def __init__(self, dim: int, value_fn, fd_step: float = 1e-6):
        self.dim = dim
        self._value_fn = value_fn
        self._h = fd_step

    def value(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self._value_fn(pts), dtype=float).ravel()

    def value_at(self, point) -> float:
        return float(self.value(np.atleast_2d(point))[0])

    def gradient(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty_like(pts)
        for i in range(self.dim):
            shift = np.zeros(self.dim)
            shift[i] = self._h
            out[:, i] = (self.value(pts + shift) - self.value(pts - shift)) / (2 * self._h)
        return out


class NumericVectorField:
    """Vector field backed by a callable; derivatives by Richardson FD."""

    def __init__(self, dim: int, value_fn, jac_fn=None, fd_step: float = 1e-5):
        self.dim = dim
        self._value_fn = value_fn
        self._jac_fn = jac_fn
        self._h = fd_step

    def value(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self._value_fn(pts), dtype=float)

    def value_at(self, point) -> np.ndarray:
        return self.value(np.atleast_2d(point))[0]

    def _fd_jac(self, point, h: float) -> np.ndarray:
        d = self.dim
        shifts = np.zeros((2 * d, d))
        for i in range(d):
            shifts[2 * i, i] = h
            shifts[2 * i + 1, i] = -h
        vals = self.value(np.asarray(point)[None, :] + shifts)
        cols = [(vals[2 * i] - vals[2 * i + 1]) / (2 * h) for i in range(d)]
        return np.stack(cols, axis=1)

    def jacobian_at(self, point) -> np.ndarray:
        if self._jac_fn is not None:
            return np.asarray(self._jac_fn(np.asarray(point, dtype=float)), dtype=float)
        coarse = self._fd_jac(point, self._h)
        fine = self._fd_jac(point, self._h / 2.0)
        return (4.0 * fine - coarse) / 3.0

    def jacobian_batch(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([self.jacobian_at(p) for p in pts])


@dataclass
class FieldFamily:
    """Vector field family v_s(x), symbolic in the coordinates and one parameter."""

    exprs: list[sp.Expr]
    symbols: list[sp.Symbol]
    param: sp.Symbol
    _val: object = field(init=False, repr=False)

    def __post_init__(self):
        self._val = _compile(self.symbols + [self.param], list(self.exprs))

    @classmethod
    def parse(cls, texts: list[str], var_names: list[str], param_name: str = "s") -> "FieldFamily":
        names = var_names + [param_name]
        syms = [sp.Symbol(n, real=True) for n in names]
        exprs = [parse_expr(t, names) for t in texts]
        return cls(exprs, syms[:-1], syms[-1])

    @property
    def dim(self) -> int:
        return len(self.symbols)

    def value(self, points, svals) -> np.ndarray:
        """Evaluate at (N, dim) points with per-point parameter values (N,)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        s = np.broadcast_to(np.asarray(svals, dtype=float), (pts.shape[0],))
        joint = np.column_stack([pts, s])
        return self._val(joint)

    def at(self, s: float) -> SymbolicVectorField:
        sub = [sp.simplify(e.subs(self.param, s)) for e in self.exprs]
        return SymbolicVectorField(sub, self.symbols)

    @classmethod
    def linear_blend(cls, v0: SymbolicVectorField, v1: SymbolicVectorField,
                     param_name: str = "s") -> "FieldFamily":
        """Straight-line homotopy parametrized over s in [-1, 1]."""
        s = sp.Symbol(param_name, real=True)
        lo, hi = (1 - s) / 2, (1 + s) / 2
        exprs = [sp.expand(lo * a + hi * b) for a, b in zip(v0.exprs, v1.exprs)]
        return cls(exprs, v0.symbols, s)
