"""Built-in catalog of named coefficients, forcings and initial data.

Experiment files reference these by name plus parameters; there is no
runtime code loading.  Each entry documents its parameters inline.
"""

import numpy as np

from .evolution import CoefficientPath, random_rough_path
from .fields import GridField, SpaceTimeField, TorusGrid
from .quasilinear import QuasilinearProblem
from .symbols import EllipticSymbol, laplacian_symbol


def _heat_path(d, span, scale=1.0, ell=(np.pi / 3, 0.5, 2.0)):
    sym = laplacian_symbol(d, 2, float(scale))
    return CoefficientPath.constant(sym, span, ell)


def make_path(kind, d=1, span=(0.0, 1.0), **params):
    """kind 'constant': the order-2 diffusion with coefficient 'scale'.
    kind 'random': seeded switching path; params seed, intervals, theta,
    kappa, bound, m, lower_order."""
    if kind == "constant":
        return _heat_path(d, span, params.get("scale", 1.0))
    if kind == "random":
        return random_rough_path(
            int(params["seed"]), span, int(params.get("intervals", 6)),
            d=d, m=int(params.get("m", 2)),
            theta=float(params.get("theta", np.pi / 3)),
            kappa=float(params.get("kappa", 0.5)),
            bound=float(params.get("bound", 2.0)),
            lower_order=bool(params.get("lower_order", False)))
    raise ValueError("unknown path kind %r" % kind)


def _mesh(grid):
    return grid.points()


def make_forcing(name, grid, times, **params):
    """Named forcing fields, piecewise linear on the given time nodes.

    single-mode: e^{i k x} (params k, decay: amplitude e^{-decay t}).
    zero: identically zero.
    windowed-noise: band-limited space-time noise windowed to vanish at the
    endpoints (params seed, band).
    mms-sine: the manufactured forcing of the quasilinear benchmark.
    """
    times = np.asarray(times, dtype=float)
    mesh = _mesh(grid)
    if name == "single-mode":
        k = int(params.get("k", 1))
        decay = float(params.get("decay", 0.0))
        idx = (k,) + (0,) * (grid.d - 1)
        hat = np.zeros(grid.shape, dtype=complex)
        hat[idx] = 1.0
        mode = np.fft.ifftn(hat) * grid.size
        vals = np.stack([np.exp(-decay * t) * mode for t in times])
        return SpaceTimeField(grid, times, vals)
    if name == "zero":
        return SpaceTimeField(grid, times,
                              np.zeros((times.size,) + grid.shape))
    if name == "windowed-noise":
        seed = int(params["seed"])
        band = int(params.get("band", max(1, grid.n // 4)))
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        mask = grid.frequency_magnitude() <= band
        shape = (times.size,) + grid.shape
        hat = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        hat *= mask[None]
        k = times.size - 1
        window = np.sin(np.pi * np.arange(k + 1) / k) ** 2
        hat *= window.reshape((-1,) + (1,) * grid.d)
        vals = np.fft.ifftn(hat, axes=tuple(range(1, grid.d + 1)))
        return SpaceTimeField(grid, times, vals)
    if name == "mms-sine":
        if grid.d != 1:
            raise ValueError("mms-sine forcing is one-dimensional")
        amp = float(params.get("amplitude", 1.0))
        x = mesh[0]
        vals = []
        for t in times:
            u = amp * np.exp(-t) * np.sin(x)
            vals.append(-u + (1.0 + 0.5 * np.sin(u)) * u)
        return SpaceTimeField(grid, times, np.stack(vals))
    raise ValueError("unknown forcing %r" % name)


def make_initial(name, grid, **params):
    """zero | single-mode (params k) | sine (sin of the first coordinate)."""
    mesh = _mesh(grid)
    if name == "zero":
        return GridField.zero(grid)
    if name == "single-mode":
        k = int(params.get("k", 1))
        idx = (k,) + (0,) * (grid.d - 1)
        hat = np.zeros(grid.shape, dtype=complex)
        hat[idx] = 1.0
        return GridField(grid, np.fft.ifftn(hat) * grid.size)
    if name == "sine":
        return GridField(grid, np.sin(mesh[0]))
    raise ValueError("unknown initial value %r" % name)


def mms_problem(n=128, n_slices=200, horizon=1.0, p=6.0, q=2.0,
                amplitude=1.0):
    """Manufactured-solution benchmark: u* = amplitude e^{-t} sin x solves
    u' + (1 + sin(u)/2)(-u_xx) = f with f computed from u*.  The
    coefficient's Lipschitz constant in the state is 1/2 globally.
    Defaults p=6, q=2 satisfy the trace embedding condition
    2(1-1/p) - d/q > 1 in d=1 (p=2 would not).  Small amplitudes put the
    reference solution inside the smallness regime of the fixed-point
    recipe, so the horizon selection can succeed without shrinking below
    any practical floor."""
    grid = TorusGrid(1, n)
    amp = float(amplitude)

    def a_fn(t, mesh, y, z):
        return 1.0 + 0.5 * np.sin(np.real(y))

    def f_fn(t, mesh, y, z):
        u = amp * np.exp(-t) * np.sin(mesh[0])
        return -u + (1.0 + 0.5 * np.sin(u)) * u

    initial = GridField(grid, amp * np.sin(grid.points()[0]))
    return QuasilinearProblem(
        grid, {(2,): a_fn}, f_fn, initial, horizon, p=p, q=q,
        coeff_lip=lambda r: 0.5, phi_r=lambda r: 0.0,
        ell=(np.pi / 3, 0.25, 8.0)), n_slices


def mms_exact(amplitude=1.0):
    """(u*, du*/dt) of the manufactured benchmark as (t, mesh) callables."""
    amp = float(amplitude)

    def u_fn(t, mesh):
        return amp * np.exp(-t) * np.sin(mesh[0])

    def du_fn(t, mesh):
        return -amp * np.exp(-t) * np.sin(mesh[0])

    return u_fn, du_fn


CATALOG = {
    "path": {
        "constant": "order-2 diffusion, coefficient 'scale'",
        "random": "seeded rough switching path (seed, intervals, theta, "
                  "kappa, bound, lower_order)",
    },
    "forcing": {
        "single-mode": "e^{ikx}, optional exponential time decay (k, decay)",
        "zero": "zero forcing",
        "windowed-noise": "band-limited space-time noise, endpoint-windowed "
                          "(seed, band)",
        "mms-sine": "forcing manufactured so u = e^{-t} sin x solves the "
                    "quasilinear benchmark",
    },
    "initial": {
        "zero": "zero field",
        "single-mode": "e^{ikx} (k)",
        "sine": "sin of the first coordinate",
    },
    "quasilinear": {
        "mms-sine": "u' + (1 + sin(u)/2)(-u_xx) = f with manufactured "
                    "forcing (n, n_slices, horizon, p, q)",
    },
}


def list_catalog():
    lines = []
    for section in sorted(CATALOG):
        lines.append("[%s]" % section)
        for name in sorted(CATALOG[section]):
            lines.append("  %-16s %s" % (name, CATALOG[section][name]))
    return "\n".join(lines)
