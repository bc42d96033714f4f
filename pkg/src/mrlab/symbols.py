"""Constant-coefficient elliptic symbols and their certificates.

A symbol is the polynomial A(xi) = sum_{|alpha| <= m} a_alpha xi^alpha with
the principal part collecting the |alpha| = m terms.  Ellipticity of type
(theta, kappa, K) means: the principal symbol maps the unit sphere into the
open sector of half-angle theta, stays at least kappa in modulus there, and
every coefficient is bounded by K.  The sphere condition is certified by
deterministic quasi-uniform sampling; the margin to each bound is reported
so callers can judge how much slack the sampling surrogate left.
"""

import json
import math
import zlib
from dataclasses import dataclass

import numpy as np

from .fields import monomial, multi_indices, multi_indices_upto


class EllipticSymbol:
    """Polynomial symbol with complex coefficients keyed by multi-index.

    Parameters
    ----------
    d : int
        Number of frequency variables (>= 1; grids cover 1 and 2).
    m : int
        Order, a positive even integer.
    coeffs : dict
        Map multi-index tuple -> complex.  Every key must have |alpha| <= m
        and at least one key with |alpha| = m must be nonzero.
    """

    def __init__(self, d, m, coeffs):
        if d < 1:
            raise ValueError("d must be >= 1")
        if m < 2 or m % 2 != 0:
            raise ValueError("order m must be a positive even integer, got %r" % (m,))
        clean = {}
        top_nonzero = False
        for alpha, val in coeffs.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != d or any(a < 0 for a in alpha):
                raise ValueError("bad multi-index %r for d=%d" % (alpha, d))
            order = sum(alpha)
            if order > m:
                raise ValueError("|alpha|=%d exceeds m=%d" % (order, m))
            val = complex(val)
            clean[alpha] = val
            if order == m and val != 0:
                top_nonzero = True
        if not top_nonzero:
            raise ValueError("principal part vanishes: need a nonzero |alpha|=m coefficient")
        self.d = int(d)
        self.m = int(m)
        self.coeffs = clean

    def principal(self, *mesh):
        """Principal symbol sum_{|alpha|=m} a_alpha xi^alpha on coordinate arrays."""
        out = np.zeros(np.broadcast(*mesh).shape, dtype=complex) if len(mesh) > 1 \
            else np.zeros(np.shape(mesh[0]), dtype=complex)
        for alpha, val in self.coeffs.items():
            if sum(alpha) == self.m:
                out = out + val * monomial(mesh, alpha)
        return out

    def full(self, *mesh):
        """Full symbol including lower-order terms."""
        out = np.zeros(np.broadcast(*mesh).shape, dtype=complex) if len(mesh) > 1 \
            else np.zeros(np.shape(mesh[0]), dtype=complex)
        for alpha, val in self.coeffs.items():
            out = out + val * monomial(mesh, alpha)
        return out

    def scale(self, c):
        return EllipticSymbol(self.d, self.m,
                              {a: c * v for a, v in self.coeffs.items()})

    def shift(self, other_coeffs):
        """Return the symbol with coefficients added (missing keys created)."""
        coeffs = dict(self.coeffs)
        for alpha, val in other_coeffs.items():
            coeffs[alpha] = coeffs.get(alpha, 0.0) + val
        return EllipticSymbol(self.d, self.m, coeffs)

    def max_coefficient(self):
        return max(abs(v) for v in self.coeffs.values())

    def to_json(self):
        return {
            "d": self.d,
            "m": self.m,
            "coeffs": [
                {"alpha": list(alpha), "re": v.real, "im": v.imag}
                for alpha, v in sorted(self.coeffs.items())
            ],
        }

    @classmethod
    def from_json(cls, obj):
        coeffs = {tuple(e["alpha"]): complex(e["re"], e["im"]) for e in obj["coeffs"]}
        return cls(obj["d"], obj["m"], coeffs)

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def loads(cls, s):
        return cls.from_json(json.loads(s))

    def __repr__(self):
        return "EllipticSymbol(d=%d, m=%d, %d coeffs)" % (self.d, self.m, len(self.coeffs))


def principal_symbol(sym, xi):
    """Evaluate the principal symbol at one frequency vector."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (sym.d,):
        raise ValueError("xi must have length d=%d" % sym.d)
    return complex(sym.principal(*(xi[i] for i in range(sym.d))))


def full_symbol(sym, xi):
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (sym.d,):
        raise ValueError("xi must have length d=%d" % sym.d)
    return complex(sym.full(*(xi[i] for i in range(sym.d))))


@dataclass(frozen=True)
class EllipticityCertificate:
    theta: float
    kappa: float
    coeff_bound: float
    n_samples: int
    passed: bool
    angle_margin: float     # min over samples of theta - |arg A(xi)|
    modulus_margin: float   # min over samples of |A(xi)| - kappa
    coeff_margin: float     # K - max |a_alpha|


def _sample_seed(sym, n_samples):
    # Deterministic offset derived from the inputs, so repeated checks agree.
    blob = (sym.dumps() + "/%d" % n_samples).encode()
    return zlib.crc32(blob)


def unit_sphere_samples(d, n_samples, seed=0):
    """Deterministic quasi-uniform points on the unit sphere in R^d (d <= 3)."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if d == 1:
        return np.array([[1.0], [-1.0]])
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    offset = (seed % 4096) / 4096.0
    i = np.arange(n_samples)
    if d == 2:
        phi = 2.0 * np.pi * ((i * golden + offset) % 1.0)
        return np.stack([np.cos(phi), np.sin(phi)], axis=1)
    if d == 3:
        z = -1.0 + 2.0 * (i + 0.5) / n_samples
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        phi = 2.0 * np.pi * ((i * golden + offset) % 1.0)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    raise ValueError("sphere sampling implemented for d <= 3")


def check_ellipticity(sym, theta, kappa, coeff_bound, n_samples=10000):
    """Certify sym in Ell(theta, kappa, K) by sphere sampling.

    Checks arg A(xi) in (-theta, theta) and |A(xi)| >= kappa over sampled
    unit vectors, plus max |a_alpha| <= K over stored coefficients.
    """
    if not 0.0 < theta < np.pi:
        raise ValueError("theta must be in (0, pi)")
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must be in (0, 1)")
    pts = unit_sphere_samples(sym.d, n_samples, _sample_seed(sym, n_samples))
    vals = sym.principal(*(pts[:, i] for i in range(sym.d)))
    args = np.angle(vals)
    mags = np.abs(vals)
    angle_margin = float(np.min(theta - np.abs(args)))
    modulus_margin = float(np.min(mags - kappa))
    coeff_margin = float(coeff_bound - sym.max_coefficient())
    passed = angle_margin > 0.0 and modulus_margin >= 0.0 and coeff_margin >= 0.0
    return EllipticityCertificate(
        theta=float(theta), kappa=float(kappa), coeff_bound=float(coeff_bound),
        n_samples=int(pts.shape[0]), passed=bool(passed),
        angle_margin=angle_margin, modulus_margin=modulus_margin,
        coeff_margin=coeff_margin)


def _mihlin_values(sym, lam, beta, pts):
    # M(xi) = lam^{1-|beta|/m} xi^beta (lam + A(xi))^{-1}, principal part only.
    denom = lam + sym.principal(*(pts[..., i] for i in range(sym.d)))
    if np.any(denom == 0):
        idx = tuple(np.argwhere(denom == 0)[0])
        raise ArithmeticError("singular denominator at xi=%r" % (pts[idx],))
    power = complex(lam) ** (1.0 - sum(beta) / sym.m)
    num = monomial(tuple(pts[..., i] for i in range(sym.d)), beta)
    return power * num / denom


def mihlin_audit(sym, lam, beta, max_deriv_order=None, radii=None, n_dirs=None):
    """Max of |xi^alpha D^alpha M(xi)| over a log xi-grid and alpha in {0,1}^d.

    M(xi) = lam^{1-|beta|/m} xi^beta (lam + A_principal(xi))^{-1}.  Central
    finite differences with relative step 1e-4 |xi| per coordinate; the grid
    runs radii 1e-2 .. 1e2 times sphere directions, covering both asymptotic
    regimes.  Returns the observed supremum (the audit certifies order of
    magnitude, it does not compare against a closed form).
    """
    beta = tuple(int(b) for b in beta)
    if len(beta) != sym.d or sum(beta) > sym.m:
        raise ValueError("beta must have length d and |beta| <= m")
    d = sym.d
    if max_deriv_order is None:
        max_deriv_order = d
    if radii is None:
        radii = np.logspace(-2.0, 2.0, 41)
    if n_dirs is None:
        n_dirs = 2 if d == 1 else 64
    dirs = unit_sphere_samples(d, n_dirs, _sample_seed(sym, n_dirs))
    pts = radii[:, None, None] * dirs[None, :, :]      # (nr, nd, d)
    pts = pts.reshape(-1, d)
    h = 1e-4 * np.linalg.norm(pts, axis=1)             # per-point step

    def mval(shift):
        # shift: vector of per-coordinate offsets in units of h
        q = pts.copy()
        for i, s in enumerate(shift):
            if s:
                q[:, i] = q[:, i] + s * h
        return _mihlin_values(sym, lam, beta, q)

    worst = 0.0
    for alpha in multi_indices_upto(d, max_deriv_order):
        if any(a > 1 for a in alpha):
            continue
        order = sum(alpha)
        if order == 0:
            deriv = mval((0,) * d)
        elif order == 1:
            i = alpha.index(1)
            ei = tuple(1 if j == i else 0 for j in range(d))
            plus = mval(ei)
            minus = mval(tuple(-e for e in ei))
            deriv = (plus - minus) / (2.0 * h)
        else:  # alpha = (1,1), d = 2
            pp = mval((1, 1))
            pm = mval((1, -1))
            mp = mval((-1, 1))
            mm = mval((-1, -1))
            deriv = (pp - pm - mp + mm) / (4.0 * h * h)
        weight = np.ones(pts.shape[0])
        for i, a in enumerate(alpha):
            if a:
                weight = weight * pts[:, i]
        worst = max(worst, float(np.max(np.abs(weight * deriv))))
    return worst


def laplacian_symbol(d, m, delta=1.0):
    """delta * |xi|^m as a symbol (the base operator delta (-Lap)^{m/2})."""
    coeffs = {}
    if d == 1:
        coeffs[(m,)] = delta
    else:
        # |xi|^m = (xi1^2 + xi2^2)^{m/2}, binomial expansion
        half = m // 2
        for j in range(half + 1):
            c = delta * float(math.comb(half, j))
            coeffs[(2 * (half - j), 2 * j)] = c
    return EllipticSymbol(d, m, coeffs)


def symbols_equal(a, b, tol=0.0):
    keys = set(a.coeffs) | set(b.coeffs)
    return all(abs(a.coeffs.get(k, 0.0) - b.coeffs.get(k, 0.0)) <= tol for k in keys)
