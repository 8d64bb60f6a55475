"""Simplified step-N Euler scheme for RDEs driven by increment grids.

One step maps ``y`` to

    y + sum_{k=1}^{N} 1/k! sum_{i_1..i_k} V_{i_1}...V_{i_k} I(y) dx^{i_1}...dx^{i_k}

where the vector fields act as first-order differential operators and
``I`` is the identity.  Products of increments replace the iterated
integrals, so no Levy area has to be simulated.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .fbm import IncrementGrid


class VectorFieldSet:
    """``count`` vector fields on R^``dim``, evaluated through composed words.

    Subclasses implement :meth:`word`, returning ``V_{i_1}...V_{i_k} I(y)``
    for a word ``(i_1, ..., i_k)`` of zero-based field indices.
    """

    dim: int
    count: int

    def word(self, y, word):
        raise NotImplementedError

    def max_word_length(self):
        return None

    def increment(self, y, dx, order):
        return word_sum_increment(self, y, dx, order)


class LinearVectorFields(VectorFieldSet):
    """Linear fields ``V_i(y) = A_i y``.

    Composition reverses matrix order:
    ``V_{i_1}...V_{i_k} I(y) = A_{i_k} ... A_{i_1} y``.
    """

    def __init__(self, matrices):
        m = np.asarray(matrices, dtype=float)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise DomainError("matrices must have shape (d, e, e)")
        self.matrices = m
        self.count, self.dim = m.shape[0], m.shape[1]

    def word(self, y, word):
        v = np.asarray(y, dtype=float)
        for i in word:
            v = self.matrices[i] @ v
        return v

    def driver_matrix(self, dx):
        """``B = sum_i dx^i A_i``."""
        return np.tensordot(np.asarray(dx, dtype=float), self.matrices, axes=1)

    def increment(self, y, dx, order):
        b = self.driver_matrix(dx)
        term = np.asarray(y, dtype=float)
        total = np.zeros_like(term)
        for k in range(1, order + 1):
            term = b @ term / k
            total = total + term
        return total


class SmoothVectorFields(VectorFieldSet):
    """Nonlinear fields with analytic derivatives supplied by the caller.

    ``value(y)`` returns shape ``(d, e)`` (row ``i`` is ``V_i(y)``),
    ``jacobian(y)`` shape ``(d, e, e)`` with ``[i, a, b] = dV_i^a / dy_b``,
    ``hessian(y)`` shape ``(d, e, e, e)`` with second derivatives in the
    last two axes.  Words up to length three are supported.
    """

    def __init__(self, value, jacobian, hessian=None, *, dim, count):
        self.value, self.jacobian, self.hessian = value, jacobian, hessian
        self.dim, self.count = dim, count

    def max_word_length(self):
        return 3 if self.hessian is not None else 2

    def word(self, y, word):
        y = np.asarray(y, dtype=float)
        k = len(word)
        V = self.value(y)
        if k == 1:
            return V[word[0]]
        DV = self.jacobian(y)
        if k == 2:
            i1, i2 = word
            return DV[i2] @ V[i1]
        if k == 3 and self.hessian is not None:
            i1, i2, i3 = word
            D2 = self.hessian(y)[i3]
            return np.einsum("abc,b,c->a", D2, V[i2], V[i1]) + DV[i3] @ (DV[i2] @ V[i1])
        raise DomainError(f"words of length {k} are not supported by these fields")


def word_sum_increment(fields: VectorFieldSet, y, dx, order):
    """The scheme increment by explicit enumeration of all d^k words."""
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (fields.count,):
        raise DomainError(f"increment has shape {dx.shape}, expected ({fields.count},)")
    limit = fields.max_word_length()
    if limit is not None and order > limit:
        raise DomainError(f"order {order} exceeds supported word length {limit}")
    total = np.zeros(fields.dim)
    for k in range(1, order + 1):
        for w in itertools.product(range(fields.count), repeat=k):
            coeff = np.prod(dx[list(w)])
            if coeff:
                total += coeff / math.factorial(k) * fields.word(y, w)
    return total


def linear_step_matrix(B, N):
    """``I + B + B^2/2! + ... + B^N/N!``."""
    if N < 1:
        raise DomainError("N must be at least 1")
    B = np.asarray(B, dtype=float)
    out = np.eye(B.shape[0])
    term = np.eye(B.shape[0])
    for k in range(1, N + 1):
        term = term @ B / k
        out = out + term
    return out


def check_order(order, hurst):
    """Validate the scheme order against the Hurst index of the driver.

    Step-2 suffices only in the Brownian regime (H >= 1/2); rougher drivers
    need step-3.
    """
    if order not in (2, 3):
        raise DomainError(f"scheme order must be 2 or 3, got {order}")
    if order == 2 and hurst < 0.5:
        raise DomainError(f"step-2 scheme requires H >= 1/2, got H={hurst}")
    return order


def simplified_euler_step(y, dx, fields: VectorFieldSet, order):
    y = np.asarray(y, dtype=float)
    if y.shape != (fields.dim,):
        raise DomainError(f"state has shape {y.shape}, expected ({fields.dim},)")
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (fields.count,):
        raise DomainError(f"increment has shape {dx.shape}, expected ({fields.count},)")
    return y + fields.increment(y, dx, order)


@dataclass
class GridPath:
    """Scheme output on a uniform grid, linearly interpolated in between."""

    times: np.ndarray
    states: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.stack([np.interp(t, self.times, s) for s in self.states.T], axis=-1)
        return out

    @property
    def terminal(self):
        return self.states[-1]


def simplified_euler_path(y0, grid: IncrementGrid, fields: VectorFieldSet, order) -> GridPath:
    if grid.n_components != fields.count:
        raise DomainError(f"grid has {grid.n_components} components, fields need {fields.count}")
    states = np.empty((grid.n_steps + 1, fields.dim))
    states[0] = y0
    for k in range(grid.n_steps):
        states[k + 1] = simplified_euler_step(states[k], grid.increments[:, k], fields, order)
    return GridPath(grid.times(), states)


def solve_linear_batch(y0, increments, matrices, order, keep_path=False):
    """Run the scheme with linear fields for many paths at once.

    ``increments`` has shape ``(paths, d, n)``.  Returns terminal states of
    shape ``(paths, e)``, or every grid state ``(paths, n + 1, e)`` when
    ``keep_path`` is set.
    """
    inc = np.asarray(increments, dtype=float)
    A = np.asarray(matrices, dtype=float)
    P, d, n = inc.shape
    e = A.shape[1]
    # columns i*e:(i+1)*e of v @ stacked hold v @ A_i^T = (A_i v)^T
    stacked = np.concatenate([a.T for a in A], axis=1)
    y = np.broadcast_to(np.asarray(y0, dtype=float), (P, e)).copy()
    path = np.empty((P, n + 1, e)) if keep_path else None
    if keep_path:
        path[:, 0] = y
    for k in range(n):
        dx = inc[:, :, k]
        term = y
        for j in range(1, order + 1):
            av = (term @ stacked).reshape(P, d, e)
            term = np.einsum("pd,pde->pe", dx, av) / j
            y = y + term
        if keep_path:
            path[:, k + 1] = y
    return path if keep_path else y


def exact_linear_1d(a, x_T, y0):
    """Pathwise solution ``y0 exp(a x_T)`` of the scalar linear equation."""
    return y0 * np.exp(a * np.asarray(x_T, dtype=float))


def _terminal(path_or_state):
    if isinstance(path_or_state, GridPath):
        return path_or_state.terminal
    return np.asarray(path_or_state, dtype=float)


def norm_excess(y):
    """``(|y| - 1)^+`` on terminal states (last axis is the state)."""
    return np.maximum(np.linalg.norm(y, axis=-1) - 1.0, 0.0)


def positive_norm(y):
    """``|y| 1{y^1 > 0}`` on terminal states."""
    y = np.asarray(y, dtype=float)
    return np.where(y[..., 0] > 0, np.linalg.norm(y, axis=-1), 0.0)


def first_coordinate(y):
    return np.asarray(y, dtype=float)[..., 0]


def functional_f(path) -> float:
    return float(norm_excess(_terminal(path)))


def functional_g(path) -> float:
    return float(positive_norm(_terminal(path)))


FUNCTIONALS = {"f": norm_excess, "g": positive_norm, "terminal": first_coordinate}


SPHERE_A1 = np.array([[0.0, 1.0, 2.0], [-1.0, 0.0, 0.5], [-2.0, -0.5, 0.0]])
SPHERE_A2 = np.array([[0.0, 0.7, 0.9], [-0.7, 0.0, 1.0], [-0.9, -1.0, 0.0]])


def sphere_problem():
    """Linear fields with antisymmetric matrices on R^3, started on S^2."""
    return LinearVectorFields([SPHERE_A1, SPHERE_A2]), np.array([1.0, 0.0, 0.0])


@dataclass
class Problem:
    """A linear RDE on ``[0, horizon]``; picklable so it can cross processes.

    ``scalar_a`` is set for the scalar problem ``dy = a y dx``, which has
    the closed-form solution used as a convergence oracle.
    """

    name: str
    fields: LinearVectorFields
    y0: np.ndarray
    horizon: float = 1.0
    scalar_a: float | None = None

    @property
    def n_drivers(self):
        return self.fields.count

    def terminal_batch(self, increments, order):
        return solve_linear_batch(self.y0, increments, self.fields.matrices, order)

    def exact_terminal(self, increments):
        """Exact terminal states for the scalar problem; shape ``(paths, 1)``."""
        if self.scalar_a is None:
            raise DomainError(f"problem {self.name!r} has no closed-form solution")
        x_T = np.asarray(increments)[:, 0, :].sum(axis=-1)
        return exact_linear_1d(self.scalar_a, x_T, self.y0[0])[:, None]


def make_problem(name: str) -> Problem:
    """``"sphere"`` or ``"scalar-linear:a"`` (``V(y) = a y`` on R, default a=1)."""
    if name == "sphere":
        fields, y0 = sphere_problem()
        return Problem("sphere", fields, y0)
    if name.startswith("scalar-linear"):
        _, _, tail = name.partition(":")
        try:
            a = float(tail) if tail else 1.0
        except ValueError:
            raise DomainError(f"bad coefficient in problem {name!r}") from None
        return Problem(f"scalar-linear:{a!r}", LinearVectorFields([[[a]]]), np.array([1.0]), scalar_a=a)
    raise DomainError(f"unknown problem {name!r}; expected 'sphere' or 'scalar-linear:a'")
