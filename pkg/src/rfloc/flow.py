"""Amplifier function and effective gradient flows for the single ReLU neuron.

The early-time flow for weights ``w`` is

    (2 / tau) dw/dt = phi(Sigma_1 w / sqrt(<Sigma_1 w, w>)) - (Sigma_0 + Sigma_1) w

with ``phi(a) = E[X erf(X alg_inv(a) / sqrt(2))]`` applied elementwise, the
expectation taken over one coordinate of class-1 inputs. Time is measured in
training-time units (gradient steps times learning rate) when ``tau = 1``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate, interpolate, special

from .nets import WeightTrajectory
from .stimulus import (
    CirculantCovariance,
    StimulusModel,
    alg_k_raw_moment,
    nlgp_norm_constant,
    radial_first_moment,
    radial_second_moment,
    task_sample,
)

log = logging.getLogger(__name__)

SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
CLAMP = 1e-9


class FlowDomainError(ArithmeticError):
    """Amplifier argument left (-1, 1) too often, or the weights vanished."""


class DegenerateSpectrumError(ValueError):
    pass


# ---------------------------------------------------------------------------
# algebraic sigmoid
# ---------------------------------------------------------------------------

def alg(x):
    x = np.asarray(x, dtype=float)
    return x / np.sqrt(1.0 + x * x)


def alg_inv(a):
    a = np.asarray(a, dtype=float)
    if np.any(np.abs(a) >= 1):
        raise FlowDomainError("alg_inv is defined on (-1, 1) only")
    return a / np.sqrt((1.0 - a) * (1.0 + a))


# ---------------------------------------------------------------------------
# marginals
# ---------------------------------------------------------------------------

MIN_EMPIRICAL = 10_000


@dataclass(frozen=True, eq=False)
class MarginalSpec:
    """Symmetric one-dimensional law of a single input coordinate.

    kinds: ``two_point`` (mass 1/2 at +-value), ``gaussian`` (sd = value),
    ``alg_sigmoid`` (value * T with T ~ alg_k), ``empirical`` (symmetrized samples).
    """

    kind: str
    value: float = 1.0
    k: float | None = None
    samples: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "empirical":
            x = np.asarray(self.samples, dtype=float).ravel()
            if x.size < MIN_EMPIRICAL:
                raise ValueError(f"empirical marginal needs >= {MIN_EMPIRICAL} samples")
            # symmetrize; only |x| matters for every even-moment query and for phi
            object.__setattr__(self, "samples", np.abs(x))
        elif self.kind not in ("two_point", "gaussian", "alg_sigmoid"):
            raise ValueError(f"unknown marginal kind {self.kind!r}")
        if not self.m2 > 0:
            raise ValueError("marginal must have positive variance")

    @classmethod
    def two_point(cls, v=1.0):
        return cls("two_point", float(v))

    @classmethod
    def gaussian(cls, sigma=1.0):
        return cls("gaussian", float(sigma))

    @classmethod
    def alg_sigmoid(cls, k, scale=None):
        """alg_k law scaled to unit variance unless ``scale`` is given."""
        if scale is None:
            m2 = alg_k_raw_moment(k, 2)
            if not np.isfinite(m2):
                raise ValueError(f"alg_{k} has infinite variance; pass an explicit scale")
            scale = 1.0 / np.sqrt(m2)
        return cls("alg_sigmoid", float(scale), k=float(k))

    @classmethod
    def empirical(cls, samples):
        return cls("empirical", samples=samples)

    def moment(self, p: int) -> float:
        if self.kind == "two_point":
            return self.value ** p
        if self.kind == "gaussian":
            return self.value ** p * special.factorial2(p - 1)
        if self.kind == "alg_sigmoid":
            return self.value ** p * alg_k_raw_moment(self.k, p)
        return float(np.mean(self.samples ** p)) if p % 2 == 0 else 0.0

    @property
    def m2(self):
        return self.moment(2)

    @property
    def m4(self):
        return self.moment(4)

    def pdf(self, x):
        if self.kind == "gaussian":
            x = np.asarray(x, dtype=float) / self.value
            return np.exp(-0.5 * x * x) / (np.sqrt(2.0 * np.pi) * self.value)
        if self.kind != "alg_sigmoid":
            raise NotImplementedError
        x = np.asarray(x, dtype=float) / self.value
        return 0.5 * (1.0 + np.abs(x) ** self.k) ** (-(self.k + 1.0) / self.k) / self.value


def marginal_for(model: StimulusModel, samples: int = 200_000) -> MarginalSpec:
    """Marginal of one class-1 input coordinate for a stimulus model.

    NLGP marginals are represented by ``samples`` stratified draws
    ``erf(g z_j) / Z(g)`` at the normal quantiles ``z_j = Phi^-1((j + 1/2) / samples)``,
    which makes the sample mean a deterministic midpoint quadrature.
    """
    if model.variant == "ising":
        return MarginalSpec.two_point(1.0)
    if model.variant == "kur":
        return MarginalSpec.alg_sigmoid(model.k)
    if model.variant == "nlgp":
        z = special.ndtri((np.arange(samples) + 0.5) / samples)
        return MarginalSpec.empirical(special.erf(model.gain * z) / nlgp_norm_constant(model.gain))
    raise ValueError("elliptical data have no coordinate-wise amplifier; use the elliptical flow")


# ---------------------------------------------------------------------------
# amplifier
# ---------------------------------------------------------------------------

def _phi_quad(m: MarginalSpec, c: float) -> float:
    # phi = 2 int_0^inf x erf(c x / sqrt 2) p(x) dx, split where erf saturates
    if c == 0:
        return 0.0
    f = lambda x: x * special.erf(c * x / np.sqrt(2.0)) * m.pdf(x)
    knee = 4.0 / c
    if knee < 50 * m.value:
        left = integrate.quad(f, 0.0, knee, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        right = integrate.quad(f, knee, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        return 2.0 * (left + right)
    return 2.0 * integrate.quad(f, 0.0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)[0]


def phi(marginal: MarginalSpec, a):
    """Amplifier ``E[X erf(X alg_inv(a) / sqrt 2)]`` for ``|a| < 1`` (vectorized)."""
    a = np.asarray(a, dtype=float)
    c = alg_inv(a)
    kind = marginal.kind
    if kind == "two_point":
        v = marginal.value
        return v * special.erf(v * c / np.sqrt(2.0))
    if kind in ("gaussian", "alg_sigmoid"):
        flat = np.array([np.sign(ci) * _phi_quad(marginal, abs(ci)) for ci in c.ravel()])
        return flat.reshape(c.shape)
    x = marginal.samples
    flat = c.ravel()
    out = np.empty(flat.size)
    for i, ci in enumerate(flat):
        out[i] = np.mean(x * special.erf(x * ci / np.sqrt(2.0)))
    return out.reshape(c.shape)


def phi_limit(marginal: MarginalSpec) -> float:
    """``phi(1-) = E|X|``."""
    if marginal.kind == "two_point":
        return abs(marginal.value)
    if marginal.kind == "gaussian":
        return marginal.value * SQRT_2_OVER_PI
    if marginal.kind == "alg_sigmoid":
        return marginal.value * alg_k_raw_moment(marginal.k, 1)
    return float(np.mean(np.abs(marginal.samples)))


class UndefinedSurrogateError(ValueError):
    pass


def phi_taylor3(marginal: MarginalSpec):
    """Coefficients ``(c1, c3)`` of the cubic surrogate ``c1 a + c3 a^3``.

    ``c1 = phi'(0) = sqrt(2/pi) m2`` and ``c3 = phi'''(0) / 6`` with
    ``phi'''(0) = sqrt(2/pi) (3 m2 - m4)``.
    """
    m2, m4 = marginal.m2, marginal.m4
    if not np.isfinite(m4):
        raise UndefinedSurrogateError("fourth moment is infinite; cubic surrogate undefined")
    return SQRT_2_OVER_PI * m2, SQRT_2_OVER_PI * (3.0 * m2 - m4) / 6.0


class Amplifier:
    """Vectorized odd amplifier on (-1, 1), optionally tabulated for speed."""

    def __init__(self, func, name="phi"):
        self.coefficients = None
        self._func = func
        self.name = name

    def __call__(self, a):
        return self._func(np.asarray(a, dtype=float))

    @classmethod
    def exact(cls, marginal: MarginalSpec, table_size: int | None = None):
        """Exact phi. Quadrature/sample-mean kinds are tabulated on [0, 1) and
        interpolated with a monotone cubic; closed-form kinds are evaluated directly."""
        if marginal.kind == "two_point":
            return cls(lambda a: phi(marginal, a), f"phi[{marginal.kind}]")
        # grid dense near 1 where phi saturates quickly
        if table_size is None:
            table_size = 801 if marginal.kind == "alg_sigmoid" else 257
        s = np.linspace(0.0, 1.0, table_size)
        grid = np.sin(0.5 * np.pi * s)[:-1]
        grid = np.append(grid, 1.0 - CLAMP)
        vals = phi(marginal, grid)
        spline = interpolate.PchipInterpolator(grid, vals, extrapolate=True)
        return cls(lambda a: np.sign(a) * spline(np.abs(a)), f"phi[{marginal.kind}]")

    @classmethod
    def taylor3(cls, marginal: MarginalSpec):
        c1, c3 = phi_taylor3(marginal)
        amp = cls(lambda a: c1 * a + c3 * a ** 3, f"taylor3[{marginal.kind}]")
        amp.coefficients = (c1, c3)
        return amp

    @classmethod
    def linear(cls, slope=SQRT_2_OVER_PI):
        return cls(lambda a: slope * a, "linear")


def tabulate_amplifier(marginal: MarginalSpec, grid=None):
    """Rows ``(a, phi, taylor3)``; ``taylor3`` is NaN where the surrogate is undefined."""
    grid = np.linspace(-0.99, 0.99, 199) if grid is None else np.asarray(grid, dtype=float)
    vals = phi(marginal, grid)
    try:
        c1, c3 = phi_taylor3(marginal)
        tay = c1 * grid + c3 * grid ** 3
    except UndefinedSurrogateError:
        tay = np.full_like(grid, np.nan)
    return np.column_stack([grid, vals, tay])


# ---------------------------------------------------------------------------
# flows
# ---------------------------------------------------------------------------

@dataclass
class FlowConfig:
    dt: float = 0.01
    steps: int = 100_000
    tau: float = 1.0
    record_stride: int = 1000
    c_elliptical: float | None = None
    method: str = "euler"

    def __post_init__(self):
        if not self.dt > 0 or self.steps < 1 or self.record_stride < 1:
            raise ValueError(f"invalid flow config {self}")
        if self.method not in ("euler", "rk4"):
            raise ValueError("method must be 'euler' or 'rk4'")


def _check_pair(sigma0, sigma1, w0):
    if sigma0.n != sigma1.n or sigma0.n != np.size(w0):
        raise ValueError("covariances and w0 must share the dimension")
    w0 = np.asarray(w0, dtype=float).ravel()
    if not np.any(w0):
        raise FlowDomainError("w0 = 0: the flow normalization is singular")
    return w0


def flow_rhs(sigma0: CirculantCovariance, sigma1: CirculantCovariance, amplifier, w,
             stats: dict | None = None):
    """Right-hand side ``phi(Sigma_1 w / sqrt(w' Sigma_1 w)) - (Sigma_0 + Sigma_1) w``."""
    s1w = sigma1.matvec(w)
    q = float(np.dot(s1w, w))
    if not q > 0:
        raise FlowDomainError("w' Sigma_1 w vanished")
    arg = s1w / np.sqrt(q)
    lim = 1.0 - CLAMP
    over = np.abs(arg) > lim
    if over.any():
        if stats is not None:
            stats["clamped"] = stats.get("clamped", 0) + int(over.sum())
        if over.mean() > 0.01:
            raise FlowDomainError(
                f"{over.sum()} of {arg.size} amplifier arguments left (-1, 1): "
                "the early-time approximation has broken down")
        arg = np.clip(arg, -lim, lim)
    return amplifier(arg) - s1w - sigma0.matvec(w)


def elliptical_rhs(sigma0, sigma1, C, w):
    """``C Sigma_1 w / sqrt(w' Sigma_1 w) - (Sigma_0 + Sigma_1) w / 2``."""
    s1w = sigma1.matvec(w)
    q = float(np.dot(s1w, w))
    if not q > 0:
        raise FlowDomainError("w' Sigma_1 w vanished")
    return C * s1w / np.sqrt(q) - 0.5 * (s1w + sigma0.matvec(w))


def _integrate(rhs, w0, cfg: FlowConfig, meta):
    w = w0.copy()
    h = cfg.dt
    steps, snaps = [0], [w.copy()]
    for step in range(1, cfg.steps + 1):
        if cfg.method == "euler":
            w = w + h * rhs(w)
        else:
            k1 = rhs(w)
            k2 = rhs(w + 0.5 * h * k1)
            k3 = rhs(w + 0.5 * h * k2)
            k4 = rhs(w + h * k3)
            w = w + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(w)):
            raise FlowDomainError(f"non-finite weights at step {step}")
        if step % cfg.record_stride == 0 or step == cfg.steps:
            steps.append(step)
            snaps.append(w.copy())
    steps = np.array(steps)
    return WeightTrajectory(steps, steps * cfg.dt, np.array(snaps), meta)


def integrate_flow(sigma0: CirculantCovariance, sigma1: CirculantCovariance, amplifier,
                   w0, cfg: FlowConfig | None = None) -> WeightTrajectory:
    """Explicit Euler (or RK4) integration of the early-time single-neuron flow."""
    cfg = cfg or FlowConfig()
    w0 = _check_pair(sigma0, sigma1, w0)
    stats = {}
    scale = 0.5 * cfg.tau
    traj = _integrate(lambda w: scale * flow_rhs(sigma0, sigma1, amplifier, w, stats),
                      w0, cfg, {"config": cfg, "amplifier": getattr(amplifier, "name", "phi")})
    traj.meta["clamped"] = stats.get("clamped", 0)
    if traj.meta["clamped"]:
        log.info("flow clamped %d amplifier arguments", traj.meta["clamped"])
    return traj


def integrate_elliptical_flow(sigma0: CirculantCovariance, sigma1: CirculantCovariance,
                              C: float, w0, cfg: FlowConfig | None = None) -> WeightTrajectory:
    """Integrate ``(1/tau) dw/dt = C Sigma_1 w / sqrt(w' Sigma_1 w) - (Sigma_0 + Sigma_1) w / 2``."""
    cfg = cfg or FlowConfig()
    if not C > 0:
        raise ValueError("C must be positive")
    w0 = _check_pair(sigma0, sigma1, w0)
    return _integrate(lambda w: cfg.tau * elliptical_rhs(sigma0, sigma1, C, w),
                      w0, cfg, {"config": cfg, "C": C})


def elliptical_constant(radial: str, n: int, nu: float | None = None) -> float:
    """``C = E[ReLU(S)] / sqrt(E[S^2])`` for a projection ``S = <w, X>`` of elliptical data.

    ``S = R * |Lambda' w| * U_1`` so ``C = E[R] E[U_1^+] / sqrt(E[R^2] / n)``; it
    does not depend on ``w``. ``E|U_1| = Gamma(n/2) / (sqrt(pi) Gamma((n+1)/2))``.
    """
    e_abs_u = np.exp(special.gammaln(n / 2.0) - special.gammaln((n + 1) / 2.0)) / np.sqrt(np.pi)
    er = radial_first_moment(radial, n, nu)
    er2 = radial_second_moment(radial, n, nu)
    return 0.5 * e_abs_u * er / np.sqrt(er2 / n)


def elliptical_constant_mc(radial: str, n: int, nu=None, samples=1_000_000, rng=None) -> float:
    """Monte-Carlo estimate of :func:`elliptical_constant` from simulated projections."""
    from .stimulus import sample_radius
    rng = np.random.default_rng(0) if rng is None else rng
    r = sample_radius(radial, n, samples, rng, nu)
    # first coordinate of a uniform point on the sphere: U_1^2 ~ Beta(1/2, (n-1)/2), random sign
    u1 = np.sqrt(rng.beta(0.5, (n - 1) / 2.0, samples)) * rng.choice([-1.0, 1.0], samples)
    s = r * u1
    er2 = radial_second_moment(radial, n, nu)
    return float(np.mean(np.maximum(s, 0.0)) / np.sqrt(er2 / n))


# ---------------------------------------------------------------------------
# Monte-Carlo flow and spectral diagnostics
# ---------------------------------------------------------------------------

def empirical_flow_rhs(model: StimulusModel, w, mc_batch: int, rng: np.random.Generator,
                       return_stderr: bool = False):
    """Monte-Carlo estimate of the exact flow ``(1/tau) dw/dt`` for K classes:

        2 E[Y 1(<w, X> >= 0) X] - (1/K) sum_y Sigma_y w

    with the analytic class covariances. Compare against half the early-time
    right-hand side :func:`flow_rhs`.
    """
    if mc_batch < 1000:
        raise ValueError("mc_batch must be >= 1000")
    w = np.asarray(w, dtype=float).ravel()
    batch = task_sample(model, mc_batch, rng)
    X, y = batch.inputs, batch.labels
    terms = 2.0 * (y * (X @ w >= 0))[:, None] * X
    K = model.n_classes
    cov_term = sum(model.data_covariance(c).matvec(w) for c in range(K)) / K
    est = terms.mean(axis=0) - cov_term
    if return_stderr:
        return est, terms.std(axis=0, ddof=1) / np.sqrt(mc_batch)
    return est


def eigen_ratio_multiplicity(sigma0: CirculantCovariance, sigma1: CirculantCovariance,
                             rtol: float = 1e-9) -> int:
    """Largest number of DFT indices sharing the eigenvalue ratio ``lambda_i(S0) / lambda_i(S1)``."""
    if sigma0.n != sigma1.n:
        raise ValueError("dimension mismatch")
    if not (sigma0.circular and sigma1.circular):
        raise ValueError("both covariances must be circulant")
    lam0, lam1 = sigma0.eigenvalues(), sigma1.eigenvalues()
    if np.min(np.abs(lam1)) <= 1e-12 * np.max(np.abs(lam1)):
        raise DegenerateSpectrumError("Sigma_1 has a (numerically) zero eigenvalue")
    ratios = np.sort(lam0 / lam1)
    best = run = 1
    for prev, cur in zip(ratios, ratios[1:]):
        run = run + 1 if abs(cur - prev) <= rtol * max(abs(prev), abs(cur)) else 1
        best = max(best, run)
    return best
