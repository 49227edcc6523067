"""Minimal array-valued automatic differentiation.

Three mechanisms, all operating on numpy arrays batched over quadrature
points:

* ``Dual`` -- forward-mode dual numbers, used by :func:`jvp`.
* ``Tape``/``Var`` -- a reverse-mode tape, used by :func:`vjp` and
  :func:`grad`.  A built tape also supports forward sweeps, which lets a
  single linearization serve both Jacobian-vector and vector-Jacobian
  products (see :func:`linearize`).
* :func:`freeze` -- stop-gradient: identity on values, zero derivative.

Plain ``numpy`` arrays act as constants everywhere, so functions written
with the generic helpers (:func:`tanh`, :func:`matmul`, ...) can be
evaluated with ndarrays, ``Dual`` or ``Var`` inputs interchangeably.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "NonFiniteError",
    "Dual",
    "Tape",
    "Var",
    "LinearizedMap",
    "jvp",
    "vjp",
    "grad",
    "freeze",
    "linearize",
    "tanh",
    "sin",
    "cos",
    "exp",
    "matmul",
    "concat",
    "asum",
    "mlp_input_derivatives",
]

#: Eagerly abort on NaN/Inf produced by any primitive. Can be disabled for
#: speed in tight inner loops that are known finite.
CHECK_FINITE = True


class NonFiniteError(ArithmeticError):
    """A primitive produced a NaN or Inf value."""


def _check_finite(value, where):
    if not CHECK_FINITE:
        return
    arr = np.asarray(value)
    if arr.dtype.kind not in "fc":
        return
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(np.atleast_1d(arr)))
        raise NonFiniteError(f"non-finite value in '{where}' at index {tuple(bad[0])}")


def _unbroadcast(g, shape):
    """Reduce a gradient ``g`` to ``shape``, undoing numpy broadcasting."""
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Reverse-mode tape
# ---------------------------------------------------------------------------


class Tape:
    """Ordered record of primitive operations for one trace."""

    def __init__(self):
        self.nodes = []

    def leaf(self, value):
        return Var(np.asarray(value, dtype=float), self, (), ())

    def forward_sweep(self, leaf, out, tangent):
        """Propagate a tangent from ``leaf`` to ``out`` (tape-based JVP)."""
        tangents = [None] * len(self.nodes)
        tangents[leaf.index] = np.asarray(tangent, dtype=float)
        for node in self.nodes[leaf.index + 1 :]:
            acc = None
            for parent, (push, _) in zip(node.parents, node.edges):
                t = tangents[parent.index]
                if t is None:
                    continue
                c = push(t)
                acc = c if acc is None else acc + c
            tangents[node.index] = acc
        t = tangents[out.index]
        if t is None:
            return np.zeros(np.shape(out.value))
        return np.broadcast_to(t, np.shape(out.value)).copy()

    def reverse_sweep(self, out, leaf, cotangent):
        """Pull a cotangent back from ``out`` to ``leaf`` (tape-based VJP)."""
        cots = [None] * len(self.nodes)
        cots[out.index] = np.broadcast_to(
            np.asarray(cotangent, dtype=float), np.shape(out.value)
        )
        for node in reversed(self.nodes[leaf.index : out.index + 1]):
            g = cots[node.index]
            if g is None:
                continue
            for parent, (_, pull) in zip(node.parents, node.edges):
                c = pull(g)
                prev = cots[parent.index]
                cots[parent.index] = c if prev is None else prev + c
        g = cots[leaf.index]
        if g is None:
            return np.zeros(np.shape(leaf.value))
        return np.asarray(g, dtype=float)


class Var:
    """A tape node wrapping an ndarray value.

    ``parents`` and ``edges`` encode, for each parent, the local
    pushforward (tangent -> output tangent contribution) and pullback
    (output cotangent -> parent cotangent contribution).
    """

    __slots__ = ("value", "tape", "parents", "edges", "index")

    # defer to the reflected operators instead of elementwise object math
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, value, tape, parents, edges):
        _check_finite(value, type(self).__name__)
        self.value = value
        self.tape = tape
        self.parents = parents
        self.edges = edges
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return np.shape(self.value)

    @property
    def ndim(self):
        return np.ndim(self.value)

    def _node(self, value, parents, edges):
        return Var(value, self.tape, parents, edges)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Var):
            val = self.value + other.value
            return self._node(
                val,
                (self, other),
                (
                    (lambda t: t, lambda g: _unbroadcast(g, self.shape)),
                    (lambda t: t, lambda g: _unbroadcast(g, other.shape)),
                ),
            )
        c = np.asarray(other)
        return self._node(
            self.value + c,
            (self,),
            ((lambda t: t, lambda g: _unbroadcast(g, self.shape)),),
        )

    __radd__ = __add__

    def __neg__(self):
        return self._node(-self.value, (self,), ((lambda t: -t, lambda g: -g),))

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Var):
            a, b = self.value, other.value
            return self._node(
                a * b,
                (self, other),
                (
                    (lambda t: t * b, lambda g: _unbroadcast(g * b, self.shape)),
                    (lambda t: a * t, lambda g: _unbroadcast(g * a, other.shape)),
                ),
            )
        c = np.asarray(other)
        return self._node(
            self.value * c,
            (self,),
            ((lambda t: t * c, lambda g: _unbroadcast(g * c, self.shape)),),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return self * other ** (-1.0)
        return self * (1.0 / np.asarray(other))

    def __rtruediv__(self, other):
        return self ** (-1.0) * other

    def __pow__(self, n):
        if isinstance(n, Var):
            raise TypeError("only constant exponents are supported")
        val = self.value**n
        d = n * self.value ** (n - 1)
        return self._node(
            val, (self,), ((lambda t: d * t, lambda g: d * g),)
        )

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    # -- structural ops -----------------------------------------------------

    def __getitem__(self, idx):
        shape = self.shape

        def pull(g):
            z = np.zeros(shape)
            np.add.at(z, idx, g)
            return z

        return self._node(self.value[idx], (self,), ((lambda t: t[idx], pull),))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return self._node(
            self.value.reshape(shape),
            (self,),
            ((lambda t: t.reshape(shape), lambda g: g.reshape(old)),),
        )

    @property
    def T(self):
        return self._node(
            self.value.T, (self,), ((lambda t: t.T, lambda g: g.T),)
        )

    def sum(self, axis=None):
        shape = self.shape

        def pull(g):
            if axis is None:
                return np.broadcast_to(g, shape)
            ge = np.expand_dims(g, axis)
            return np.broadcast_to(ge, shape)

        return self._node(
            self.value.sum(axis=axis),
            (self,),
            ((lambda t: t.sum(axis=axis), pull),),
        )

    # -- elementwise nonlinearities ------------------------------------------

    def _unary(self, val, deriv):
        return self._node(val, (self,), ((lambda t: deriv * t, lambda g: deriv * g),))

    def tanh(self):
        v = np.tanh(self.value)
        return self._unary(v, 1.0 - v * v)

    def sin(self):
        return self._unary(np.sin(self.value), np.cos(self.value))

    def cos(self):
        return self._unary(np.cos(self.value), -np.sin(self.value))

    def exp(self):
        v = np.exp(self.value)
        return self._unary(v, v)


def _matmul_var(a, b):
    """Matmul with at least one Var operand (1D/2D combinations)."""
    aval = a.value if isinstance(a, Var) else np.asarray(a)
    bval = b.value if isinstance(b, Var) else np.asarray(b)
    val = aval @ bval
    parents, edges = [], []
    if isinstance(a, Var):
        if aval.ndim == 1 and bval.ndim == 2:
            pull_a = lambda g: bval @ g
        elif aval.ndim == 2 and bval.ndim == 1:
            pull_a = lambda g: np.outer(g, bval)
        elif aval.ndim == 2 and bval.ndim == 2:
            pull_a = lambda g: g @ bval.T
        else:  # 1D @ 1D inner product
            pull_a = lambda g: g * bval
        parents.append(a)
        edges.append((lambda t: t @ bval, pull_a))
    if isinstance(b, Var):
        if bval.ndim == 1 and aval.ndim == 2:
            pull_b = lambda g: aval.T @ g
        elif bval.ndim == 2 and aval.ndim == 1:
            pull_b = lambda g: np.outer(aval, g)
        elif bval.ndim == 2 and aval.ndim == 2:
            pull_b = lambda g: aval.T @ g
        else:
            pull_b = lambda g: g * aval
        parents.append(b)
        edges.append((lambda t: aval @ t, pull_b))
    tape = a.tape if isinstance(a, Var) else b.tape
    return Var(val, tape, tuple(parents), tuple(edges))


def _concat_var(parts, tape):
    vals = [p.value if isinstance(p, Var) else np.asarray(p, float) for p in parts]
    val = np.concatenate(vals)
    offsets = np.cumsum([0] + [v.shape[0] for v in vals])
    parents, edges = [], []
    for i, p in enumerate(parts):
        if not isinstance(p, Var):
            continue
        lo, hi = offsets[i], offsets[i + 1]
        size = val.shape[0]

        def push(t, lo=lo, hi=hi, size=size, tail=val.shape[1:]):
            z = np.zeros((size,) + tail)
            z[lo:hi] = t
            return z

        parents.append(p)
        edges.append((push, lambda g, lo=lo, hi=hi: g[lo:hi]))
    return Var(val, tape, tuple(parents), tuple(edges))


# ---------------------------------------------------------------------------
# Forward-mode duals
# ---------------------------------------------------------------------------


class Dual:
    """Forward-mode dual number over ndarrays: primal + directional tangent."""

    __slots__ = ("primal", "tangent")

    # defer to the reflected operators instead of elementwise object math
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, primal, tangent):
        self.primal = np.asarray(primal, dtype=float)
        self.tangent = np.asarray(tangent, dtype=float)
        _check_finite(self.primal, "Dual")
        _check_finite(self.tangent, "Dual tangent")

    @property
    def shape(self):
        return self.primal.shape

    @property
    def ndim(self):
        return self.primal.ndim

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.primal + other.primal, self.tangent + other.tangent)
        return Dual(self.primal + other, np.broadcast_to(self.tangent, np.broadcast_shapes(self.shape, np.shape(other))))

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.primal, -self.tangent)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.primal * other.primal,
                self.tangent * other.primal + self.primal * other.tangent,
            )
        other = np.asarray(other)
        return Dual(self.primal * other, self.tangent * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * other ** (-1.0)
        return self * (1.0 / np.asarray(other))

    def __rtruediv__(self, other):
        return self ** (-1.0) * other

    def __pow__(self, n):
        return Dual(self.primal**n, n * self.primal ** (n - 1) * self.tangent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return Dual(self.primal[idx], self.tangent[idx])

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Dual(self.primal.reshape(shape), self.tangent.reshape(shape))

    @property
    def T(self):
        return Dual(self.primal.T, self.tangent.T)

    def sum(self, axis=None):
        return Dual(self.primal.sum(axis=axis), self.tangent.sum(axis=axis))

    def tanh(self):
        v = np.tanh(self.primal)
        return Dual(v, (1.0 - v * v) * self.tangent)

    def sin(self):
        return Dual(np.sin(self.primal), np.cos(self.primal) * self.tangent)

    def cos(self):
        return Dual(np.cos(self.primal), -np.sin(self.primal) * self.tangent)

    def exp(self):
        v = np.exp(self.primal)
        return Dual(v, v * self.tangent)


def _matmul_dual(a, b):
    if isinstance(a, Dual) and isinstance(b, Dual):
        return Dual(a.primal @ b.primal, a.tangent @ b.primal + a.primal @ b.tangent)
    if isinstance(a, Dual):
        b = np.asarray(b)
        return Dual(a.primal @ b, a.tangent @ b)
    a = np.asarray(a)
    return Dual(a @ b.primal, a @ b.tangent)


# ---------------------------------------------------------------------------
# Generic helpers (dispatch on ndarray / Dual / Var)
# ---------------------------------------------------------------------------


def tanh(x):
    if isinstance(x, (Dual, Var)):
        return x.tanh()
    return np.tanh(x)


def sin(x):
    if isinstance(x, (Dual, Var)):
        return x.sin()
    return np.sin(x)


def cos(x):
    if isinstance(x, (Dual, Var)):
        return x.cos()
    return np.cos(x)


def exp(x):
    if isinstance(x, (Dual, Var)):
        return x.exp()
    return np.exp(x)


def matmul(a, b):
    if isinstance(a, Var) or isinstance(b, Var):
        return _matmul_var(a, b)
    if isinstance(a, Dual) or isinstance(b, Dual):
        return _matmul_dual(a, b)
    return np.asarray(a) @ np.asarray(b)


def concat(parts):
    """Concatenate along the leading axis, mixing Vars/Duals with constants."""
    var = next((p for p in parts if isinstance(p, Var)), None)
    if var is not None:
        return _concat_var(parts, var.tape)
    if any(isinstance(p, Dual) for p in parts):
        primals = [p.primal if isinstance(p, Dual) else np.asarray(p, float) for p in parts]
        tangents = [
            p.tangent if isinstance(p, Dual) else np.zeros(np.shape(p)) for p in parts
        ]
        return Dual(np.concatenate(primals), np.concatenate(tangents))
    return np.concatenate([np.asarray(p) for p in parts])


def asum(x, axis=None):
    if isinstance(x, (Dual, Var)):
        return x.sum(axis=axis)
    return np.sum(x, axis=axis)


def freeze(x):
    """Stop-gradient: same values, all derivative paths cut."""
    if isinstance(x, Var):
        return x.value
    if isinstance(x, Dual):
        return x.primal
    return x


def primal_value(x):
    """Plain ndarray value of an ndarray/Dual/Var."""
    if isinstance(x, Var):
        return x.value
    if isinstance(x, Dual):
        return x.primal
    return np.asarray(x)


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def jvp(f, theta, v):
    """Jacobian-vector product J_theta f(theta) @ v via dual lifting."""
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    if theta.shape != v.shape:
        raise ValueError(f"tangent shape {v.shape} != parameter shape {theta.shape}")
    out = f(Dual(theta, v))
    if isinstance(out, Dual):
        return np.asarray(out.tangent, dtype=float)
    return np.zeros(np.shape(out))


def vjp(f, theta, w):
    """Vector-Jacobian product J_theta f(theta)^T @ w via a reverse tape."""
    theta = np.asarray(theta, dtype=float)
    tape = Tape()
    leaf = tape.leaf(theta)
    out = f(leaf)
    w = np.asarray(w, dtype=float)
    if not isinstance(out, Var):
        if w.shape != np.shape(out):
            raise ValueError(f"cotangent shape {w.shape} != output shape {np.shape(out)}")
        return np.zeros_like(theta)
    if w.shape != out.shape:
        raise ValueError(f"cotangent shape {w.shape} != output shape {out.shape}")
    return tape.reverse_sweep(out, leaf, w)


def grad(loss, theta):
    """Gradient of a scalar map of theta."""
    theta = np.asarray(theta, dtype=float)
    tape = Tape()
    leaf = tape.leaf(theta)
    out = loss(leaf)
    value = primal_value(out)
    if np.ndim(value) != 0:
        raise ValueError("grad expects a scalar-valued map")
    _check_finite(value, "loss")
    if not isinstance(out, Var):
        return np.zeros_like(theta)
    return tape.reverse_sweep(out, leaf, np.asarray(1.0))


class LinearizedMap:
    """A map f traced at a point, exposing value, jvp and vjp.

    The trace stores the local partials of every primitive at ``theta``,
    so both sweeps evaluate the exact Jacobian of f at that point.
    """

    def __init__(self, f, theta):
        theta = np.asarray(theta, dtype=float)
        self.tape = Tape()
        self.leaf = self.tape.leaf(theta)
        self.out = f(self.leaf)
        if not isinstance(self.out, Var):
            raise ValueError("map output does not depend on theta")
        self.value = np.asarray(self.out.value, dtype=float)
        self.input_dim = theta.shape[0]
        self.output_dim = self.value.shape[0]

    def jvp(self, v):
        return self.tape.forward_sweep(self.leaf, self.out, v)

    def vjp(self, w):
        return self.tape.reverse_sweep(self.out, self.leaf, w)


def linearize(f, theta):
    return LinearizedMap(f, theta)


# ---------------------------------------------------------------------------
# Second-order input derivatives (forward-over-forward jets)
# ---------------------------------------------------------------------------


def mlp_input_derivatives(layers, x, activation="tanh"):
    """Evaluate a feedforward net together with its input derivatives.

    Propagates, for each input coordinate, the value, first and pure
    second derivative through the layers (second-order Taylor jets).
    Cross second derivatives are not tracked; they are not needed for
    Laplacians.

    Parameters
    ----------
    layers : list of (W, b) pairs; entries may be ndarray, Dual or Var,
        so the result stays differentiable with respect to parameters.
    x : (q, d) ndarray of evaluation points.
    activation : only ``tanh`` supports second derivatives.

    Returns
    -------
    (value, gradient, second) with shapes (q,), (q, d), (q, d) for a
    scalar-output net; ``second[:, i]`` is d^2 u / d x_i^2.
    """
    if activation != "tanh":
        raise ValueError(f"second derivatives unsupported for activation {activation!r}")
    x = np.asarray(x, dtype=float)
    q, d = x.shape
    value = x
    grads = [np.broadcast_to(np.eye(d)[i], (q, d)).copy() for i in range(d)]
    seconds = [np.zeros((q, d)) for _ in range(d)]
    n_layers = len(layers)
    for k, (w, b) in enumerate(layers):
        value = matmul(value, w.T) + b
        grads = [matmul(g, w.T) for g in grads]
        seconds = [matmul(h, w.T) for h in seconds]
        if k < n_layers - 1:
            t = tanh(value)
            d1 = 1.0 - t * t
            d2 = -2.0 * t * d1
            seconds = [d2 * g * g + d1 * h for g, h in zip(grads, seconds)]
            grads = [d1 * g for g in grads]
            value = t
    # scalar output: drop the trailing singleton dimension
    value = value.reshape((q,))
    grads = [g.reshape((q,)) for g in grads]
    seconds = [h.reshape((q,)) for h in seconds]
    gradient = _stack_columns(grads)
    second = _stack_columns(seconds)
    return value, gradient, second


def _stack_columns(cols):
    """Stack 1D columns into a (q, d) array, keeping Dual/Var semantics."""
    q = np.shape(primal_value(cols[0]))[0]
    reshaped = [c.reshape((q, 1)) if isinstance(c, (Dual, Var)) else np.reshape(c, (q, 1)) for c in cols]
    if len(reshaped) == 1:
        return reshaped[0]
    out = concat([c.T if isinstance(c, (Dual, Var)) else c.T for c in reshaped])
    return out.T if isinstance(out, (Dual, Var)) else out.T
