"""Muckenhoupt weights, the Hardy-Littlewood maximal operator, and the
kernel class whose convolutions it dominates.

The A_p constant and the maximal operator are brute-force scans over
grid-aligned cubes: every interval in 1D, dyadic side lengths in 2D (full
enumeration there is O(N^{2d+...}); the dyadic restriction changes the
constants by a fixed factor that the property tolerances absorb, and the
distortion is reported, not proven).

Kernels come with a radially-decreasing majorant profile h and its peak
location x0; the class constant is C = x0 h(x0) + int_{x0}^inf h, and
k/C then satisfies |k/C| * f <= Mf pointwise for simple f.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate


class PowerWeight:
    """t -> |t - t0|^alpha.  In A_p exactly when alpha in (-1, p-1)."""

    def __init__(self, alpha, t0=0.0):
        self.alpha = float(alpha)
        self.t0 = float(t0)

    def __call__(self, t):
        return np.abs(np.asarray(t, dtype=float) - self.t0) ** self.alpha

    def in_ap(self, p):
        if not p > 1:
            raise ValueError("p must be > 1")
        return -1.0 < self.alpha < p - 1.0

    def __repr__(self):
        return "PowerWeight(alpha=%g, t0=%g)" % (self.alpha, self.t0)


class SampledWeight:
    """Positive samples on a uniform grid over a bounded box.

    1D: box = (a, b), samples shape (N,).  2D: box = ((a1,b1),(a2,b2)),
    samples shape (N1, N2).  Samples sit at cell midpoints.
    """

    def __init__(self, samples, box):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim not in (1, 2):
            raise ValueError("samples must be 1D or 2D")
        if samples.size == 0:
            raise ValueError("empty grid")
        if not np.all(np.isfinite(samples)) or np.any(samples <= 0):
            raise ValueError("weight samples must be strictly positive and finite")
        if samples.ndim == 1:
            box = (float(box[0]), float(box[1]))
        else:
            box = tuple((float(lo), float(hi)) for lo, hi in box)
        samples = samples.copy()
        samples.flags.writeable = False
        self.samples = samples
        self.box = box

    @property
    def d(self):
        return self.samples.ndim

    def midpoints(self):
        if self.d == 1:
            a, b = self.box
            n = self.samples.size
            h = (b - a) / n
            return a + (np.arange(n) + 0.5) * h
        axes = []
        for (a, b), n in zip(self.box, self.samples.shape):
            h = (b - a) / n
            axes.append(a + (np.arange(n) + 0.5) * h)
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @classmethod
    def from_function(cls, fn, box, shape):
        if np.isscalar(shape):
            shape = (int(shape),)
        if len(shape) == 1:
            a, b = box
            h = (b - a) / shape[0]
            x = a + (np.arange(shape[0]) + 0.5) * h
            return cls(fn(x), box)
        axes = []
        for (a, b), n in zip(box, shape):
            h = (b - a) / n
            axes.append(a + (np.arange(n) + 0.5) * h)
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(fn(*mesh), box)

    def to_csv(self, path):
        pts = self.midpoints()
        cols = pts if isinstance(pts, tuple) else (pts,)
        header = ",".join("t%d" % i for i in range(self.d)) + ",w"
        with open(path, "w") as fh:
            fh.write(header + "\n")
            flat = [c.ravel() for c in cols]
            vals = self.samples.ravel()
            for i in range(vals.size):
                fh.write(",".join("%.17g" % c[i] for c in flat))
                fh.write(",%.17g\n" % vals[i])


def _interval_scan(w, sigma, p, lengths):
    n = w.size
    pw = np.concatenate([[0.0], np.cumsum(w)])
    ps = np.concatenate([[0.0], np.cumsum(sigma)])
    best = 0.0
    for length in lengths:
        aw = (pw[length:] - pw[:-length]) / length
        as_ = (ps[length:] - ps[:-length]) / length
        val = np.max(aw * as_ ** (p - 1.0))
        best = max(best, float(val))
    return best


def ap_constant(w, p, max_cubes=None):
    """Brute-force A_p constant over grid-aligned cubes.

    1D scans every subinterval; 2D scans all positions of squares with
    dyadic side length.  If max_cubes is given and the scan would exceed it,
    side lengths are thinned evenly (positions are never dropped).
    """
    if not p > 1:
        raise ValueError("p must be in (1, inf)")
    samples = w.samples if isinstance(w, SampledWeight) else np.asarray(w, dtype=float)
    if samples.size == 0:
        raise ValueError("empty grid")
    sigma = samples ** (-1.0 / (p - 1.0))
    if samples.ndim == 1:
        n = samples.size
        lengths = list(range(1, n + 1))
        if max_cubes is not None and n * n > max_cubes:
            keep = max(1, int(max_cubes / n))
            idx = np.unique(np.linspace(1, n, keep).astype(int))
            lengths = list(idx)
        return _interval_scan(samples, sigma, p, lengths)
    # 2D: summed-area tables, dyadic square sides
    n1, n2 = samples.shape
    satw = np.zeros((n1 + 1, n2 + 1))
    sats = np.zeros((n1 + 1, n2 + 1))
    satw[1:, 1:] = np.cumsum(np.cumsum(samples, 0), 1)
    sats[1:, 1:] = np.cumsum(np.cumsum(sigma, 0), 1)
    best = 0.0
    side = 1
    while side <= min(n1, n2):
        aw = (satw[side:, side:] - satw[:-side, side:]
              - satw[side:, :-side] + satw[:-side, :-side]) / (side * side)
        as_ = (sats[side:, side:] - sats[:-side, side:]
               - sats[side:, :-side] + sats[:-side, :-side]) / (side * side)
        best = max(best, float(np.max(aw * as_ ** (p - 1.0))))
        side *= 2
    return best


def _trailing_window_max(a, window):
    """out[..., i] = max(a[..., max(0, i-window+1) : i+1]) along the last axis.

    Block prefix/suffix maxima: any window of length L spans at most two
    consecutive L-blocks, so the max is max(suffix_from_start, prefix_to_end).
    Exact (a pure max of input entries, no arithmetic on values).
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    L = int(window)
    if L <= 1:
        return a.copy()
    pad = (-n) % L
    b = np.concatenate([a, np.full(a.shape[:-1] + (pad,), -np.inf)], axis=-1)
    nb = b.shape[-1]
    blocks = b.reshape(b.shape[:-1] + (nb // L, L))
    pre = np.maximum.accumulate(blocks, axis=-1).reshape(b.shape)
    suf = np.maximum.accumulate(blocks[..., ::-1], axis=-1)[..., ::-1].reshape(b.shape)
    i = np.arange(nb)
    j = i - L + 1
    out = pre.copy()
    valid = j >= 0
    out[..., valid] = np.maximum(suf[..., j[valid]], pre[..., valid])
    return out[..., :n]


def _anchor_cover_max(avg, n, window):
    """Per point i, max of avg[j] over anchors j in [i-window+1, i] whose
    window [j, j+window-1] stays on the grid (avg has n-window+1 anchors)."""
    padded = np.concatenate(
        [avg, np.full(avg.shape[:-1] + (n - avg.shape[-1],), -np.inf)], axis=-1)
    return _trailing_window_max(padded, window)


def maximal_operator(f):
    """Hardy-Littlewood maximal function on a grid.

    At each point, the max over grid-aligned cubes containing it of the
    average of |f|: every interval in 1D, dyadic side lengths in 2D.
    """
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("f must be finite-valued")
    af = np.abs(f)
    if f.ndim == 1:
        n = af.size
        pref = np.concatenate([[0.0], np.cumsum(af)])
        out = np.full(n, -np.inf)
        for length in range(1, n + 1):
            avg = (pref[length:] - pref[:-length]) / length
            out = np.maximum(out, _anchor_cover_max(avg, n, length))
        return out
    if f.ndim == 2:
        n1, n2 = af.shape
        sat = np.zeros((n1 + 1, n2 + 1))
        sat[1:, 1:] = np.cumsum(np.cumsum(af, 0), 1)
        out = af.copy()
        side = 1
        while side <= min(n1, n2):
            avg = (sat[side:, side:] - sat[:-side, side:]
                   - sat[side:, :-side] + sat[:-side, :-side]) / (side * side)
            cover_cols = _anchor_cover_max(avg, n2, side)          # expand axis 1
            cover = _anchor_cover_max(cover_cols.T, n1, side).T    # expand axis 0
            out = np.maximum(out, cover)
            side *= 2
        return out
    raise ValueError("only 1D and 2D grids supported")


@dataclass
class Kernel1D:
    """One-variable kernel t -> k(t) with its majorant bookkeeping.

    majorant h and peak x0 satisfy |k(t)| <= h(|t|/u)/u with h radially
    decreasing on [x0, inf); scale u defaults to 1.
    """
    fn: object
    majorant: object
    x0: float
    u: float = 1.0
    label: str = "kernel"

    def __call__(self, t):
        return self.fn(np.asarray(t, dtype=float))

    def normalized(self):
        c = kernel_class_constant(self)
        return Kernel1D(fn=lambda t, _f=self.fn, _c=c: _f(np.asarray(t)) / _c,
                        majorant=lambda x, _h=self.majorant, _c=c: _h(x) / _c,
                        x0=self.x0, u=self.u, label=self.label + "/C")


def kernel_class_constant(k):
    """C = x0 h(x0) + int_{x0}^inf h by adaptive quadrature.

    k/C is then dominated by the maximal operator: |k/C| * f <= Mf
    (verified by a property test, not here).
    """
    x0 = float(k.x0)
    h = k.majorant
    tail, err = integrate.quad(lambda x: float(h(x)), x0, np.inf, limit=200)
    if not np.isfinite(tail):
        raise ArithmeticError("majorant tail is not integrable")
    head = x0 * float(h(x0)) if x0 > 0 else 0.0
    return head + tail


def poisson_kernel(alpha, u, t):
    """The sectorial Poisson kernel

        k_alpha(u, t) = (t/u)^{pi/(2 alpha)} / ((t/u)^{pi/alpha} + 1) * 1/(alpha u),

    computed in log space so extreme ratios t/u neither overflow nor
    underflow prematurely.
    """
    if not 0.0 < alpha < np.pi:
        raise ValueError("alpha must be in (0, pi)")
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(u <= 0) or np.any(t <= 0):
        raise ValueError("u and t must be positive")
    beta = np.pi / (2.0 * alpha)
    rho = np.log(t) - np.log(u)
    # log of (t/u)^beta / ((t/u)^{2 beta} + 1)
    logval = beta * rho - np.logaddexp(2.0 * beta * rho, 0.0)
    return np.exp(logval) / (alpha * u)


def poisson_profile(alpha):
    """h_alpha(x) = x^{beta-1} / (x^{2 beta} + 1), beta = pi/(2 alpha).

    Integrates to exactly alpha over (0, inf).
    """
    beta = np.pi / (2.0 * alpha)

    def h(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            logv = np.where(x > 0,
                            (beta - 1.0) * np.log(np.maximum(x, 1e-300))
                            - np.logaddexp(2.0 * beta * np.log(np.maximum(x, 1e-300)), 0.0),
                            -np.inf)
        out = np.exp(logv)
        if beta == 1.0:
            out = np.where(x == 0, 1.0, out)
        else:
            out = np.where(x == 0, 0.0, out)
        return out

    return h


def poisson_kernel_entry(alpha, u=1.0):
    """Kernel1D wrapping t -> k_alpha(u, t) 1_{t>0} with its majorant.

    The profile g(x) = x^beta/(x^{2 beta}+1)/alpha satisfies
    k_alpha(u, t) = g(t/u)/u exactly; g peaks at x = 1.  The tail is
    integrable when beta > 1, i.e. alpha < pi/2.
    """
    if not 0.0 < alpha < np.pi / 2:
        raise ValueError("integrable majorant tail needs alpha < pi/2")
    beta = np.pi / (2.0 * alpha)

    def fn(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        if np.any(pos):
            out[pos] = poisson_kernel(alpha, u, t[pos])
        return out

    def g(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            lx = np.log(np.maximum(x, 1e-300))
            logv = beta * lx - np.logaddexp(2.0 * beta * lx, 0.0)
        return np.where(x > 0, np.exp(logv) / alpha, 0.0)

    return Kernel1D(fn=fn, majorant=g, x0=1.0, u=u, label="poisson(a=%g,u=%g)" % (alpha, u))


def exponential_kernel(u=1.0):
    """k(t) = u^{-1} e^{-t/u} 1_{t>0}; majorant h = e^{-x}, x0 = 0; C = 1."""
    def fn(t):
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, np.exp(-np.minimum(t / u, 700.0)) / u, 0.0)

    return Kernel1D(fn=fn, majorant=lambda x: np.exp(-np.asarray(x, dtype=float)),
                    x0=0.0, u=u, label="exp(u=%g)" % u)


def box_kernel(u=1.0):
    """k(t) = u^{-1} 1_{[0,u]}(t); majorant h = 1_{[0,1]}, x0 = 0; C = 1."""
    def fn(t):
        t = np.asarray(t, dtype=float)
        return np.where((t >= 0) & (t <= u), 1.0 / u, 0.0)

    def h(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0) & (x <= 1.0), 1.0, 0.0)

    return Kernel1D(fn=fn, majorant=h, x0=0.0, u=u, label="box(u=%g)" % u)


def exponentially_weighted(k, lam):
    """k_lam(t) = e^{-lam t} 1_{t>0} k(t); stays in the kernel class with the
    same majorant for lam >= 0."""
    if lam < 0:
        raise ValueError("lam must be >= 0")

    def fn(t, _f=k.fn, _l=lam):
        t = np.asarray(t, dtype=float)
        damp = np.where(t > 0, np.exp(-np.minimum(_l * np.maximum(t, 0.0), 700.0)), 0.0)
        return damp * _f(t)

    return Kernel1D(fn=fn, majorant=k.majorant, x0=k.x0, u=k.u,
                    label=k.label + "*exp(-%g t)" % lam)


def convolve_on_grid(k, f, spacing):
    """Trapezoidal discrete convolution (k * f)(x_i) = sum_j k(x_i - x_j) f(x_j) h
    on a shared uniform grid; used by the domination property tests."""
    f = np.asarray(f, dtype=float)
    n = f.size
    offsets = spacing * (np.arange(2 * n - 1) - (n - 1))
    kvals = k(offsets)
    wts = np.full(n, spacing)
    wts[0] *= 0.5
    wts[-1] *= 0.5
    out = np.empty(n)
    for i in range(n):
        out[i] = np.sum(kvals[i + (n - 1) - np.arange(n)] * f * wts)
    return out


def poisson_reproduction(f, alpha, s, tol=1e-9):
    """Evaluate sum_{j in {-1,1}} (j/2) int_0^inf k_alpha(u, s) f(u e^{i j alpha}) du.

    For f bounded analytic on a sector of half-angle larger than alpha this
    reproduces f(s) for s > 0.
    """
    def term(j):
        rot = np.exp(1j * j * alpha)

        def re_part(u):
            return (poisson_kernel(alpha, u, s) * f(u * rot)).real

        def im_part(u):
            return (poisson_kernel(alpha, u, s) * f(u * rot)).imag

        re, _ = integrate.quad(re_part, 0.0, np.inf, limit=400,
                               epsabs=tol, epsrel=tol)
        im, _ = integrate.quad(im_part, 0.0, np.inf, limit=400,
                               epsabs=tol, epsrel=tol)
        return re + 1j * im

    return 0.5 * (term(1) - term(-1))
