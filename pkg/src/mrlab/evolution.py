"""Measurable-in-time coefficient paths and their evolution families.

Measurability is realized as piecewise-constant-in-time coefficients with
seeded random breakpoints: dense in the measurable class for everything the
lab measures, and the time integrals of the symbol are then exact sums.

Two backends realize S(t,s):

* mode: per Fourier mode, S(t,s) multiplies by exp(-int_s^t symbol(r, xi) dr);
  exact for piecewise-constant paths, and multiplicative in exact arithmetic.
* dense: per time slice the discretized operator (pointwise coefficients
  composed with derivative multipliers) is exponentiated by scaling-and-
  squaring, and slices compose in time order.  Needed once coefficients
  depend on x.

The factorization S(t,s) = e^{-(t-s)A0/2} T(t,s) e^{-(t-s)A0/2} with
A0 = delta (-Lap)^{m/2} is exposed in the commuting (mode) backend, with
delta defaulting to kappa/4.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import fields
from .fields import GridField, TorusGrid, monomial, multi_indices_upto
from .symbols import EllipticSymbol, check_ellipticity


class CoefficientPath:
    """Piecewise-constant-in-time coefficients on [a, b].

    Parameters
    ----------
    breakpoints : array, shape (K+1,)
        Strictly increasing, spanning the time interval.
    interval_data : list of dict
        One map per interval, multi-index -> coefficient.  Coefficient values
        are complex scalars (x-independent) or arrays over a grid
        (x-dependent); mixing is allowed per interval but not per key.
    d, m : int
        Space dimension and operator order.
    ell : tuple (theta, kappa, K)
        The shared ellipticity class all intervals must certify.
    grid : TorusGrid, optional
        Required when any coefficient is an array.
    """

    def __init__(self, breakpoints, interval_data, d, m, ell, grid=None):
        breakpoints = np.asarray(breakpoints, dtype=float)
        if breakpoints.ndim != 1 or breakpoints.size < 2:
            raise ValueError("need at least two breakpoints")
        if np.any(np.diff(breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if len(interval_data) != breakpoints.size - 1:
            raise ValueError("need one coefficient set per interval")
        self.breakpoints = breakpoints
        self.d = int(d)
        self.m = int(m)
        self.ell = (float(ell[0]), float(ell[1]), float(ell[2]))
        self.grid = grid
        clean = []
        x_dep = False
        for data in interval_data:
            cd = {}
            for alpha, val in data.items():
                alpha = tuple(int(a) for a in alpha)
                if len(alpha) != d or sum(alpha) > m:
                    raise ValueError("bad multi-index %r" % (alpha,))
                if np.ndim(val) > 0:
                    if grid is None:
                        raise ValueError("x-dependent coefficients need a grid")
                    val = np.asarray(val, dtype=complex)
                    if val.shape != grid.shape:
                        raise ValueError("coefficient field shape mismatch")
                    x_dep = True
                else:
                    val = complex(val)
                cd[alpha] = val
            clean.append(cd)
        self.interval_data = clean
        self.x_dependent = x_dep
        self._mode_cache = {}

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_symbols(cls, breakpoints, symbols, ell):
        if not symbols:
            raise ValueError("need at least one symbol")
        d, m = symbols[0].d, symbols[0].m
        if any(s.d != d or s.m != m for s in symbols):
            raise ValueError("all interval symbols must share (d, m)")
        return cls(breakpoints, [dict(s.coeffs) for s in symbols], d, m, ell)

    @classmethod
    def constant(cls, symbol, span, ell):
        return cls.from_symbols([span[0], span[1]], [symbol], ell)

    # -- basic queries ---------------------------------------------------

    @property
    def span(self):
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    @property
    def n_intervals(self):
        return self.breakpoints.size - 1

    def interval_of(self, t):
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return min(max(k, 0), self.n_intervals - 1)

    def symbol(self, i):
        if self.x_dependent:
            raise ValueError("interval symbols only defined for x-independent paths")
        return EllipticSymbol(self.d, self.m, self.interval_data[i])

    def symbols(self):
        return [self.symbol(i) for i in range(self.n_intervals)]

    def frozen_at(self, point_index):
        """The x-independent path with coefficients evaluated at one grid point."""
        if not self.x_dependent:
            return self
        idx = tuple(np.atleast_1d(point_index).astype(int))
        data = []
        for cd in self.interval_data:
            frozen = {}
            for alpha, val in cd.items():
                frozen[alpha] = complex(val[idx]) if np.ndim(val) > 0 else val
            data.append(frozen)
        return CoefficientPath(self.breakpoints, data, self.d, self.m, self.ell)

    # -- ellipticity -----------------------------------------------------

    def certify(self, n_samples=2048):
        """Check every interval against the shared Ell(theta, kappa, K).

        Returns the list of certificates (per interval; for x-dependent
        paths the worst margins over grid points are folded in).
        """
        theta, kappa, kbound = self.ell
        certs = []
        if not self.x_dependent:
            for i in range(self.n_intervals):
                certs.append(check_ellipticity(self.symbol(i), theta, kappa,
                                               kbound, n_samples))
            return certs
        from .symbols import unit_sphere_samples, EllipticityCertificate
        pts = unit_sphere_samples(self.d, n_samples)
        for cd in self.interval_data:
            vals = np.zeros((self.grid.size, pts.shape[0]), dtype=complex)
            maxcoef = 0.0
            for alpha, val in cd.items():
                va = (np.asarray(val, dtype=complex).reshape(-1, 1)
                      if np.ndim(val) > 0 else np.full((1, 1), val, dtype=complex))
                maxcoef = max(maxcoef, float(np.max(np.abs(va))))
                if sum(alpha) == self.m:
                    mono = monomial(tuple(pts[:, j] for j in range(self.d)), alpha)
                    vals = vals + va * mono[None, :]
            angles = np.abs(np.angle(vals))
            mags = np.abs(vals)
            certs.append(EllipticityCertificate(
                theta=theta, kappa=kappa, coeff_bound=kbound,
                n_samples=pts.shape[0],
                passed=bool(np.all(angles < theta) and np.all(mags >= kappa)
                            and maxcoef <= kbound),
                angle_margin=float(np.min(theta - angles)),
                modulus_margin=float(np.min(mags - kappa)),
                coeff_margin=float(kbound - maxcoef)))
        return certs

    def is_elliptic(self, n_samples=2048):
        return all(c.passed for c in self.certify(n_samples))

    def modulus_table(self, eps_list):
        """Empirical modulus of continuity of the top-order coefficients:
        omega(eps) = max over intervals and point pairs within torus distance
        eps of |a_alpha(t,x) - a_alpha(t,y)|."""
        if not self.x_dependent:
            return [(float(e), 0.0) for e in eps_list]
        grid = self.grid
        h = 2.0 * np.pi / grid.n
        table = []
        for eps in eps_list:
            worst = 0.0
            max_cells = int(np.floor(eps / h))
            for cd in self.interval_data:
                for alpha, val in cd.items():
                    if sum(alpha) != self.m or np.ndim(val) == 0:
                        continue
                    arr = np.asarray(val)
                    for shift in _torus_shifts(grid.d, max_cells, h, eps):
                        rolled = np.roll(arr, shift, axis=tuple(range(grid.d)))
                        worst = max(worst, float(np.max(np.abs(arr - rolled))))
            table.append((float(eps), worst))
        return table

    # -- symbol fields on a grid ------------------------------------------

    def symbol_array(self, i, grid):
        """Full symbol of interval i on the grid's frequency mesh
        (x-independent paths only)."""
        if self.x_dependent:
            raise ValueError("x-dependent path has no global symbol array")
        key = (id(grid), grid.d, grid.n, i)
        if key not in self._mode_cache:
            mesh = grid.frequency_mesh()
            self._mode_cache[key] = self.symbol(i).full(*mesh)
        return self._mode_cache[key]

    def mode_integral(self, s, t, grid):
        """int_s^t symbol(r, xi) dr on the frequency mesh, exact."""
        if t < s:
            raise ValueError("need s <= t")
        out = np.zeros(grid.shape, dtype=complex)
        bp = self.breakpoints
        for i in range(self.n_intervals):
            lo = max(s, bp[i])
            hi = min(t, bp[i + 1])
            if hi > lo:
                out = out + (hi - lo) * self.symbol_array(i, grid)
        return out

    def coefficient(self, i, alpha):
        return self.interval_data[i].get(tuple(alpha), 0.0)

    def apply_operator(self, i, values, grid):
        """Apply A(t) of interval i to physical-space values:
        sum_alpha a_alpha(x) * (D^alpha u) with D^alpha the xi^alpha multiplier."""
        vhat = np.fft.fftn(values)
        mesh = grid.frequency_mesh()
        out = np.zeros(grid.shape, dtype=complex)
        for alpha, val in self.interval_data[i].items():
            dav = np.fft.ifftn(monomial(mesh, alpha) * vhat)
            out = out + (np.asarray(val) * dav if np.ndim(val) > 0 else val * dav)
        return out

    # -- serialization -----------------------------------------------------

    def to_json(self):
        if self.x_dependent:
            raise ValueError("x-dependent paths serialize via binary coefficient dumps")
        return {
            "breakpoints": [float(t) for t in self.breakpoints],
            "ell": list(self.ell),
            "d": self.d,
            "m": self.m,
            "symbols": [self.symbol(i).to_json() for i in range(self.n_intervals)],
        }

    @classmethod
    def from_json(cls, obj):
        symbols = [EllipticSymbol.from_json(s) for s in obj["symbols"]]
        return cls.from_symbols(obj["breakpoints"], symbols, tuple(obj["ell"]))

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)


def _torus_shifts(d, max_cells, h, eps):
    """Integer grid shifts with torus displacement <= eps (excluding zero)."""
    shifts = []
    if d == 1:
        for s in range(1, max_cells + 1):
            shifts.append((s,))
    else:
        for s1 in range(0, max_cells + 1):
            for s2 in range(0, max_cells + 1):
                if s1 == 0 and s2 == 0:
                    continue
                if h * np.hypot(s1, s2) <= eps:
                    shifts.append((s1, s2))
    return shifts


def averaged_symbol(path, s, t):
    """Coefficient-wise time average over (s, t); exact for the
    piecewise-constant paths used here."""
    if not s < t:
        raise ValueError("need s < t")
    a, b = path.span
    if s < a - 1e-12 or t > b + 1e-12:
        raise ValueError("average window outside the path span")
    if path.x_dependent:
        raise ValueError("averaged symbol defined for x-independent paths")
    acc = {}
    bp = path.breakpoints
    for i in range(path.n_intervals):
        lo = max(s, bp[i])
        hi = min(t, bp[i + 1])
        if hi > lo:
            for alpha, val in path.interval_data[i].items():
                acc[alpha] = acc.get(alpha, 0.0) + (hi - lo) * val
    return EllipticSymbol(path.d, path.m,
                          {a_: v / (t - s) for a_, v in acc.items()})


def random_rough_path(seed, span, n_intervals, d=1, m=2,
                      theta=np.pi / 3, kappa=0.5, bound=2.0,
                      lower_order=False):
    """Seeded random switching path in Ell(theta, kappa, bound).

    Interval symbols share a construction that keeps the certificate margins
    comfortable: positive magnitudes in [kappa + 10% headroom, 90% bound]
    and a common sector phase at 85% of theta.
    """
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    a, b = float(span[0]), float(span[1])
    if n_intervals < 1:
        raise ValueError("need at least one interval")
    while True:
        interior = np.sort(rng.uniform(a, b, size=n_intervals - 1))
        bp = np.concatenate([[a], interior, [b]])
        if n_intervals == 1 or np.min(np.diff(bp)) > (b - a) / (8.0 * n_intervals):
            break
    lo = kappa + 0.1 * (bound - kappa)
    hi = bound - 0.1 * (bound - kappa)
    symbols = []
    for _ in range(n_intervals):
        phase = np.exp(1j * rng.uniform(-0.85 * theta, 0.85 * theta))
        if d == 1:
            coeffs = {(m,): phase * rng.uniform(lo, hi)}
            if lower_order:
                coeffs[(0,)] = rng.uniform(0.0, 0.2)
                coeffs[(m // 2,)] = rng.uniform(-0.2, 0.2)
        else:
            # common phase keeps the hull in the sector; magnitudes keep
            # |A(xi)| >= min magnitude on |xi| = 1
            r1 = rng.uniform(lo, min(hi, bound))
            r2 = rng.uniform(lo, min(hi, bound))
            coeffs = {(m, 0): phase * r1, (0, m): phase * r2}
            if m == 2:
                coeffs[(1, 1)] = rng.uniform(-0.25, 0.25) * kappa
            if lower_order:
                coeffs[(0, 0)] = rng.uniform(0.0, 0.2)
        symbols.append(EllipticSymbol(d, m, coeffs))
    path = CoefficientPath.from_symbols(bp, symbols, (theta, kappa, bound))
    if not path.is_elliptic(512):
        # the off-diagonal draw can eat the margin in 2D; redraw deterministically
        return random_rough_path(rng, span, n_intervals, d, m, theta, kappa,
                                 bound, lower_order)
    return path


DENSE_CAP_1D = 64
DENSE_CAP_2D = 24


class EvolutionFamily:
    """Two-parameter propagator S(t,s) for a coefficient path.

    backend 'mode' requires an x-independent path and is exact per mode;
    backend 'dense' exponentiates the discretized operator slice by slice.
    The dense grid caps (64 in 1D, 24 per axis in 2D) are a default guard
    and can be lifted explicitly with allow_large=True where an experiment
    needs it.
    """

    def __init__(self, path, grid, backend="mode", delta=None, allow_large=False):
        if backend not in ("mode", "dense"):
            raise ValueError("backend must be 'mode' or 'dense'")
        if backend == "mode" and path.x_dependent:
            raise ValueError("mode backend needs an x-independent path")
        if backend == "dense" and not allow_large:
            cap = DENSE_CAP_1D if grid.d == 1 else DENSE_CAP_2D
            if grid.n > cap:
                raise ValueError("dense backend capped at n=%d for d=%d "
                                 "(pass allow_large=True to override)" % (cap, grid.d))
        if path.x_dependent and path.grid != grid:
            raise ValueError("path coefficient grid does not match")
        self.path = path
        self.grid = grid
        self.backend = backend
        self.delta = float(delta) if delta is not None else path.ell[1] / 4.0
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        self._slice_mats = {}
        self._expm_cache = {}

    # -- shared -----------------------------------------------------------

    def a0_multiplier(self):
        """Multiplier of A0 = delta (-Lap)^{m/2}: delta |xi|^m."""
        return self.delta * self.grid.frequency_magnitude() ** self.path.m

    # -- mode backend -------------------------------------------------------

    def multiplier(self, s, t):
        if self.backend != "mode":
            raise ValueError("multiplier only for the mode backend")
        return np.exp(-self.path.mode_integral(s, t, self.grid))

    def propagate(self, s, t, f):
        """S(t,s) f; returns the zero field for t < s (one-sided convention)."""
        if f.grid != self.grid:
            raise ValueError("field grid mismatch")
        if t < s:
            return GridField.zero(self.grid)
        if t == s:
            return GridField(self.grid, f.values)
        if self.backend == "mode":
            fhat = np.fft.fftn(f.values)
            return GridField(self.grid, np.fft.ifftn(self.multiplier(s, t) * fhat))
        vec = self._dense_propagate(s, t, f.values.ravel())
        return GridField(self.grid, vec.reshape(self.grid.shape))

    def factorize(self, s, t):
        """Factors (left, middle, right) with S = left*middle*right per mode:
        left = right = exp(-(t-s)/2 * A0 multiplier), middle the T-family of
        the shifted path A - A0."""
        if self.backend != "mode":
            raise ValueError("factorization exposed in the commuting backend only")
        if not s < t:
            raise ValueError("need s < t")
        a0 = self.a0_multiplier()
        edge = np.exp(-0.5 * (t - s) * a0)
        middle = np.exp(-(self.path.mode_integral(s, t, self.grid)
                          - (t - s) * a0))
        return edge, middle, edge

    # -- dense backend -------------------------------------------------------

    def derivative_matrices(self):
        """Dense D^alpha operators (|alpha| <= m) on the flattened grid."""
        key = "deriv"
        if key not in self._expm_cache:
            n = self.grid.size
            eye = np.eye(n, dtype=complex)
            mesh = self.grid.frequency_mesh()
            mats = {}
            for alpha in multi_indices_upto(self.grid.d, self.path.m):
                mult = monomial(mesh, alpha)
                cols = np.fft.ifftn(
                    mult[..., None] * np.fft.fftn(
                        eye.reshape(self.grid.shape + (n,)), axes=tuple(range(self.grid.d))),
                    axes=tuple(range(self.grid.d)))
                mats[alpha] = cols.reshape(n, n)
            self._expm_cache[key] = mats
        return self._expm_cache[key]

    def slice_matrix(self, i):
        """Discretized A of interval i as a dense matrix."""
        if i not in self._slice_mats:
            mats = self.derivative_matrices()
            n = self.grid.size
            acc = np.zeros((n, n), dtype=complex)
            for alpha, val in self.path.interval_data[i].items():
                dmat = mats[tuple(alpha)]
                if np.ndim(val) > 0:
                    acc = acc + np.asarray(val).ravel()[:, None] * dmat
                else:
                    acc = acc + val * dmat
            self._slice_mats[i] = acc
        return self._slice_mats[i]

    def _slice_expm(self, i, tau):
        key = (i, float(tau))
        if key not in self._expm_cache:
            self._expm_cache[key] = expm(-tau * self.slice_matrix(i))
        return self._expm_cache[key]

    def _dense_propagate(self, s, t, vec):
        bp = self.path.breakpoints
        for i in range(self.path.n_intervals):
            lo = max(s, bp[i])
            hi = min(t, bp[i + 1])
            if hi > lo:
                vec = self._slice_expm(i, hi - lo) @ vec
        return vec

    def propagate_matrix(self, s, t):
        """The full matrix of S(t,s) (dense backend, audits only)."""
        if self.backend != "dense":
            raise ValueError("matrix form only for the dense backend")
        n = self.grid.size
        out = np.eye(n, dtype=complex)
        bp = self.path.breakpoints
        for i in range(self.path.n_intervals):
            lo = max(s, bp[i])
            hi = min(t, bp[i + 1])
            if hi > lo:
                out = self._slice_expm(i, hi - lo) @ out
        return out

    def operator_norm(self, s, t):
        if self.backend == "mode":
            return float(np.max(np.abs(self.multiplier(s, t))))
        return float(np.linalg.norm(self.propagate_matrix(s, t), 2))


@dataclass
class FamilyAuditReport:
    max_cocycle_defect: float
    max_identity_defect: float
    growth_c: float
    growth_omega: float
    n_triples: int


def family_audit(fam, triples):
    """Measure the evolution-family axioms on the discretized space.

    For each (s, r, t): operator-norm defect of S(t,r)S(r,s) - S(t,s) and of
    S(s,s) - I, plus a growth-bound fit ||S(t,s)|| <= C e^{omega (t-s)} over
    the sampled pairs (least-squares slope, envelope intercept).
    """
    coc = 0.0
    ident = 0.0
    taus = []
    lognorms = []
    for (s, r, t) in triples:
        if not (s <= r <= t):
            raise ValueError("need s <= r <= t")
        if fam.backend == "mode":
            m_rs = fam.multiplier(s, r)
            m_tr = fam.multiplier(r, t)
            m_ts = fam.multiplier(s, t)
            coc = max(coc, float(np.max(np.abs(m_tr * m_rs - m_ts))))
            ident = max(ident, float(np.max(np.abs(fam.multiplier(s, s) - 1.0))))
            norm_ts = float(np.max(np.abs(m_ts)))
        else:
            a = fam.propagate_matrix(s, r)
            b = fam.propagate_matrix(r, t)
            c = fam.propagate_matrix(s, t)
            coc = max(coc, float(np.linalg.norm(b @ a - c, 2)))
            eye = np.eye(fam.grid.size)
            ident = max(ident, float(np.linalg.norm(fam.propagate_matrix(s, s) - eye, 2)))
            norm_ts = float(np.linalg.norm(c, 2))
        if t > s and norm_ts > 0:
            taus.append(t - s)
            lognorms.append(np.log(norm_ts))
    if len(taus) >= 2:
        taus = np.asarray(taus)
        lognorms = np.asarray(lognorms)
        slope = float(np.polyfit(taus, lognorms, 1)[0])
        omega = max(slope, 0.0)
        c_fit = float(np.exp(np.max(lognorms - omega * taus)))
    else:
        omega, c_fit = 0.0, 1.0
    return FamilyAuditReport(max_cocycle_defect=coc, max_identity_defect=ident,
                             growth_c=max(c_fit, 1.0), growth_omega=omega,
                             n_triples=len(triples))
