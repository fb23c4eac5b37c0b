"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor records its parents and a vector-Jacobian closure per parent at
construction; backward() walks the graph in reverse topological order and
accumulates gradients by summation. Only the operator set the models need
is provided. Segment operations accept a precomputed SegmentIndex so that
scatter-adds run as sorted reduceat instead of per-element updates.
"""
from __future__ import annotations

import numpy as np

LOG_FLOOR = 1e-12

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_vjps")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._vjps = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph ------------------------------------------------------------

    def backward(self, free_graph: bool = False) -> None:
        """Fill grad on every reachable requires_grad tensor.

        With free_graph=True, gradients and recorded closures of interior
        nodes are dropped as soon as they are consumed (training mode).
        """
        if self.data.ndim != 0:
            raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
        topo, seen, stack = [], set(), [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._vjps:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            g = node.grad
            if g is None:
                continue
            for parent, vjp in node._vjps:
                if not parent.requires_grad:
                    continue
                contrib = vjp(g)
                parent.grad = contrib if parent.grad is None else parent.grad + contrib
            if free_graph and node._vjps:
                node.grad = None
                node._vjps = ()

    def zero_grad(self):
        self.grad = None

    # -- operator sugar ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def _make(data, vjps):
    out = Tensor(data)
    vjps = [(p, f) for p, f in vjps if p.requires_grad]
    if _grad_enabled and vjps:
        out.requires_grad = True
        out._vjps = tuple(vjps)
    return out


def _wrap(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None and np.isscalar(x) else None
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g, shape):
    """Sum gradient over axes that were broadcast in the forward pass."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic ----------------------------------------------------------


def add(a, b):
    a, b = _wrap(a), _wrap(b, a)
    return _make(
        a.data + b.data,
        [(a, lambda g: _unbroadcast(g, a.data.shape)),
         (b, lambda g: _unbroadcast(g, b.data.shape))],
    )


def mul(a, b):
    a = _wrap(a)
    b = _wrap(b, a)
    ad, bd = a.data, b.data
    return _make(
        ad * bd,
        [(a, lambda g: _unbroadcast(g * bd, ad.shape)),
         (b, lambda g: _unbroadcast(g * ad, bd.shape))],
    )


def matmul(a, b):
    """a: (..., k) or (..., m, k); b: (k, n) weight or (k,) vector."""
    a, b = _wrap(a), _wrap(b)
    ad, bd = a.data, b.data
    out = ad @ bd
    if bd.ndim == 2:
        k, n = bd.shape

        def vjp_a(g):
            return g @ bd.T

        def vjp_b(g):
            return ad.reshape(-1, k).T @ g.reshape(-1, n)

    elif bd.ndim == 1:
        def vjp_a(g):
            return g[..., None] * bd

        def vjp_b(g):
            return (ad * g[..., None]).reshape(-1, bd.shape[0]).sum(axis=0)

    else:
        raise ValueError(f"matmul rhs must be 1D or 2D, got shape {bd.shape}")
    return _make(out, [(a, vjp_a), (b, vjp_b)])


def outer_product(u, v):
    u, v = _wrap(u), _wrap(v)
    if u.data.ndim != 1 or v.data.ndim != 1:
        raise ValueError(
            f"outer_product expects vectors, got {u.data.shape} and {v.data.shape}"
        )
    ud, vd = u.data, v.data
    return _make(np.outer(ud, vd), [(u, lambda g: g @ vd), (v, lambda g: ud @ g)])


def inner_product(u, v):
    return tsum(mul(u, v))


# -- shape ops -----------------------------------------------------------


def concat(tensors, axis=-1):
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def make_vjp(i):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            return g[tuple(idx)]

        return vjp

    return _make(out, [(t, make_vjp(i)) for i, t in enumerate(tensors)])


def slice_axis(x, axis, start, stop):
    x = _wrap(x)
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    shape = x.data.shape

    def vjp(g):
        out = np.zeros(shape, dtype=g.dtype)
        out[idx] = g
        return out

    return _make(x.data[idx], [(x, vjp)])


def reshape(x, shape):
    x = _wrap(x)
    old = x.data.shape
    return _make(x.data.reshape(shape), [(x, lambda g: g.reshape(old))])


# -- elementwise nonlinearities ------------------------------------------


def tanh(x):
    x = _wrap(x)
    out = np.tanh(x.data)
    return _make(out, [(x, lambda g: g * (1.0 - out * out))])


def sigmoid(x):
    x = _wrap(x)
    out = 1.0 / (1.0 + np.exp(-x.data))
    return _make(out, [(x, lambda g: g * out * (1.0 - out))])


def leaky_relu(x, slope=0.2):
    x = _wrap(x)
    pos = x.data > 0
    out = np.where(pos, x.data, slope * x.data)
    return _make(out, [(x, lambda g: g * np.where(pos, 1.0, slope))])


def exp(x):
    x = _wrap(x)
    out = np.exp(x.data)
    return _make(out, [(x, lambda g: g * out)])


def log(x, floor=LOG_FLOOR):
    """Natural log with a floor on the argument; clamped entries get zero grad."""
    x = _wrap(x)
    clamped = np.maximum(x.data, floor)
    mask = x.data > floor
    return _make(np.log(clamped), [(x, lambda g: g * mask / clamped)])


def clamp_min(x, lo):
    x = _wrap(x)
    mask = x.data > lo
    return _make(np.maximum(x.data, lo), [(x, lambda g: g * mask)])


# -- reductions ----------------------------------------------------------


def tsum(x, axis=None, keepdims=False):
    x = _wrap(x)
    shape = x.data.shape
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return _make(out, [(x, vjp)])


def tmean(x, axis=None, keepdims=False):
    x = _wrap(x)
    n = x.data.size if axis is None else x.data.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def softmax(x, axis=-1):
    x = _wrap(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return p * (g - (p * g).sum(axis=axis, keepdims=True))

    return _make(p, [(x, vjp)])


def rowdot(a, b):
    """Inner product along the last axis; avoids materializing a * b."""
    a, b = _wrap(a), _wrap(b)
    ad_, bd = a.data, b.data
    out = np.einsum("...i,...i->...", ad_, bd)
    return _make(out, [(a, lambda g: g[..., None] * bd),
                       (b, lambda g: g[..., None] * ad_)])


def scale_affine_tanh(s, m, w, b):
    """Fused tanh((s[..., None] * m) @ w + b)."""
    s, m, w, b = _wrap(s), _wrap(m), _wrap(w), _wrap(b)
    scaled = s.data[..., None] * m.data
    out = np.tanh(scaled @ w.data + b.data)
    cache = {}

    def gpre(g):
        if "g" not in cache:
            cache["g"] = g * (1.0 - out * out)
        return cache["g"]

    def dscaled(g):
        if "ds" not in cache:
            cache["ds"] = gpre(g) @ w.data.T
        return cache["ds"]

    din, dout = w.data.shape
    return _make(out, [
        (s, lambda g: np.einsum("...i,...i->...", dscaled(g), m.data)),
        (m, lambda g: dscaled(g) * s.data[..., None]),
        (w, lambda g: scaled.reshape(-1, din).T @ gpre(g).reshape(-1, dout)),
        (b, lambda g: gpre(g).reshape(-1, dout).sum(axis=0)),
    ])


def typed_affine(x, w, b, type_slices, act=None):
    """Per-type affine maps over an edge axis grouped by type.

    x: (..., E, din) with edges of type t occupying type_slices[t]; w:
    (n_types, din, dout); b: (n_types, dout) or None; act: None | "tanh".
    """
    if act not in (None, "tanh"):
        raise ValueError(f"unsupported activation {act!r}")
    x, w = _wrap(x), _wrap(w)
    b = None if b is None else _wrap(b)
    xd, wd = x.data, w.data
    nt, din, dout = wd.shape
    out = np.empty(xd.shape[:-1] + (dout,), dtype=xd.dtype)
    for t, (lo, hi) in enumerate(type_slices):
        if lo == hi:
            continue
        seg = xd[..., lo:hi, :] @ wd[t]
        if b is not None:
            seg += b.data[t]
        out[..., lo:hi, :] = seg
    if act == "tanh":
        np.tanh(out, out)
    cache = {}

    def gpre(g):
        if "g" not in cache:
            cache["g"] = g * (1.0 - out * out) if act == "tanh" else g
        return cache["g"]

    def vjp_x(g):
        g = gpre(g)
        dx = np.empty_like(xd)
        for t, (lo, hi) in enumerate(type_slices):
            if lo == hi:
                continue
            dx[..., lo:hi, :] = g[..., lo:hi, :] @ wd[t].T
        return dx

    def vjp_w(g):
        g = gpre(g)
        dw = np.zeros_like(wd)
        for t, (lo, hi) in enumerate(type_slices):
            if lo == hi:
                continue
            xs = np.ascontiguousarray(xd[..., lo:hi, :]).reshape(-1, din)
            gs = np.ascontiguousarray(g[..., lo:hi, :]).reshape(-1, dout)
            dw[t] = xs.T @ gs
        return dw

    vjps = [(x, vjp_x), (w, vjp_w)]
    if b is not None:
        def vjp_b(g):
            g = gpre(g)
            db = np.zeros_like(b.data)
            for t, (lo, hi) in enumerate(type_slices):
                if lo == hi:
                    continue
                db[t] = g[..., lo:hi, :].reshape(-1, dout).sum(axis=0)
            return db

        vjps.append((b, vjp_b))
    return _make(out, vjps)


# -- indexed / segment ops -----------------------------------------------


class SegmentIndex:
    """Precomputed sorted order for scatter/segment reductions over one axis.

    seg_ids maps each of E positions to a segment in [0, n_segments). The
    fast reduceat path requires every segment non-empty; otherwise a
    per-element fallback is used.
    """

    def __init__(self, seg_ids, n_segments):
        self.seg_ids = np.asarray(seg_ids, dtype=np.int64)
        self.n_segments = int(n_segments)
        if len(self.seg_ids) and (
            self.seg_ids.min() < 0 or self.seg_ids.max() >= n_segments
        ):
            raise ValueError("segment ids out of range")
        self.order = np.argsort(self.seg_ids, kind="stable")
        sorted_ids = self.seg_ids[self.order]
        self.counts = np.bincount(sorted_ids, minlength=n_segments)
        self.all_nonempty = bool(len(self.seg_ids)) and bool(np.all(self.counts > 0))
        if self.all_nonempty:
            self.starts = np.searchsorted(sorted_ids, np.arange(n_segments))
        elif len(sorted_ids):
            change = np.flatnonzero(np.diff(sorted_ids)) + 1
            self.group_starts = np.concatenate([[0], change])
            self.group_ids = sorted_ids[self.group_starts]

    def scatter_add(self, values, axis=0):
        """Sum values (with E entries along axis) into n_segments slots."""
        if self.all_nonempty:
            srt = np.take(values, self.order, axis=axis)
            return np.add.reduceat(srt, self.starts, axis=axis)
        shape = list(values.shape)
        shape[axis] = self.n_segments
        out = np.zeros(shape, dtype=values.dtype)
        if len(self.seg_ids):
            srt = np.take(values, self.order, axis=axis)
            sums = np.add.reduceat(srt, self.group_starts, axis=axis)
            om = np.moveaxis(out, axis, 0)
            om[self.group_ids] = np.moveaxis(sums, axis, 0)
        return out

    def scatter_max(self, values, axis=0):
        if self.all_nonempty:
            srt = np.take(values, self.order, axis=axis)
            return np.maximum.reduceat(srt, self.starts, axis=axis)
        shape = list(values.shape)
        shape[axis] = self.n_segments
        out = np.full(shape, -np.inf, dtype=values.dtype)
        if len(self.seg_ids):
            srt = np.take(values, self.order, axis=axis)
            maxes = np.maximum.reduceat(srt, self.group_starts, axis=axis)
            om = np.moveaxis(out, axis, 0)
            om[self.group_ids] = np.moveaxis(maxes, axis, 0)
        return out


def take(x, idx, axis=0, scatter: SegmentIndex | None = None):
    """Gather rows by index along axis; backward scatter-adds."""
    x = _wrap(x)
    idx = np.asarray(idx, dtype=np.int64)
    n = x.data.shape[axis]
    shape = x.data.shape
    if scatter is None:
        scatter = SegmentIndex(idx, n)

    def vjp(g):
        return scatter.scatter_add(g, axis=axis)

    return _make(np.take(x.data, idx, axis=axis), [(x, vjp)])


def segment_sum(x, seg_ids, n_segments=None, axis=0, index: SegmentIndex | None = None):
    """Per-segment sums of x along axis."""
    x = _wrap(x)
    if index is None:
        if n_segments is None:
            raise ValueError("segment_sum needs n_segments or a SegmentIndex")
        index = SegmentIndex(seg_ids, n_segments)
    seg = index.seg_ids
    return _make(
        index.scatter_add(x.data, axis=axis),
        [(x, lambda g: np.take(g, seg, axis=axis))],
    )


def segment_softmax(x, seg_ids, n_segments=None, axis=0,
                    index: SegmentIndex | None = None):
    """Softmax normalized independently within each segment along axis.

    Supports extra leading/trailing axes; entries of empty segments are
    never produced (the output has the same shape as x).
    """
    x = _wrap(x)
    if index is None:
        if n_segments is None:
            raise ValueError("segment_softmax needs n_segments or a SegmentIndex")
        index = SegmentIndex(seg_ids, n_segments)
    seg = index.seg_ids
    m = np.take(index.scatter_max(x.data, axis=axis), seg, axis=axis)
    e = np.exp(x.data - m)
    s = np.take(index.scatter_add(e, axis=axis), seg, axis=axis)
    p = e / s

    def vjp(g):
        dot = np.take(index.scatter_add(p * g, axis=axis), seg, axis=axis)
        return p * (g - dot)

    return _make(p, [(x, vjp)])


# -- gradient checking ---------------------------------------------------


def grad_check(f, params, eps=1e-5, sample_frac=0.05, min_coords=50, seed=0):
    """Max relative error between backward() gradients and central finite
    differences on a random coordinate subsample of each parameter.

    f must be a deterministic closure over params returning a scalar Tensor.
    """
    for p in params:
        p.zero_grad()
    loss = f()
    loss.backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        grad = np.zeros_like(p.data) if p.grad is None else p.grad
        size = p.data.size
        k = max(min(min_coords, size), int(round(sample_frac * size)))
        coords = rng.choice(size, size=min(k, size), replace=False)
        flat = p.data.reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            with no_grad():
                hi = float(f().data)
            flat[c] = orig - eps
            with no_grad():
                lo = float(f().data)
            flat[c] = orig
            numeric = (hi - lo) / (2.0 * eps)
            analytic = float(grad.reshape(-1)[c])
            err = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
            worst = max(worst, err)
    return worst
