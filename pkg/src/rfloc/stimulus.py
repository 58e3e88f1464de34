"""Procedural stimulus families for the lengthscale-discrimination task.

Four generators are provided, all translation invariant and sign symmetric:

* ``ising``      -- periodic 1-D Ising chain sampled with a Gibbs sampler
* ``nlgp``       -- nonlinear Gaussian process, ``erf(g Z) / Z(g)``
* ``kur``        -- Gaussian copula with algebraic-sigmoid marginals
* ``elliptical`` -- ``R * Lambda * U`` with a choice of radial law

Every generator is a pure function of its configuration and a
``numpy.random.Generator``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special


class StimulusError(ValueError):
    """Invalid generator configuration."""


class HeavyTailWarning(UserWarning):
    """Marginal variance is infinite; samples were standardized per batch."""


# ---------------------------------------------------------------------------
# covariance structures
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CirculantCovariance:
    """Translation-invariant covariance identified by its first row.

    With ``circular=False`` the matrix is the symmetric Toeplitz matrix built
    from ``first_row``; this is only used for fidelity checks against the
    literal (non-periodic) squared-exponential kernel.
    """

    first_row: np.ndarray
    circular: bool = True
    clip: float = 0.0  # magnitude of the most negative eigenvalue removed

    def __post_init__(self):
        row = np.asarray(self.first_row, dtype=float)
        object.__setattr__(self, "first_row", row)
        if row.ndim != 1 or row.size < 2:
            raise StimulusError("first_row must be a vector of length >= 2")
        if not row[0] > 0:
            raise StimulusError("variance (first_row[0]) must be positive")
        if self.circular and not np.allclose(row[1:], row[1:][::-1], atol=1e-12 * row[0]):
            raise StimulusError("circulant first row must satisfy row[d] == row[n-d]")
        lam = self.eigenvalues()
        if lam.min() < -1e-10 * row[0]:
            raise StimulusError(
                f"covariance is not PSD: min eigenvalue {lam.min():.3e}")

    @property
    def n(self) -> int:
        return self.first_row.size

    @property
    def variance(self) -> float:
        return float(self.first_row[0])

    def dense(self) -> np.ndarray:
        n = self.n
        idx = np.arange(n)
        if self.circular:
            return self.first_row[(idx[None, :] - idx[:, None]) % n]
        return self.first_row[np.abs(idx[None, :] - idx[:, None])]

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues; for the circulant case ordered by DFT frequency."""
        if self.circular:
            return np.fft.fft(self.first_row).real
        return np.linalg.eigvalsh(self.dense())

    def matvec(self, w: np.ndarray) -> np.ndarray:
        """``Sigma @ w`` along the last axis (FFT for the circulant case)."""
        w = np.asarray(w, dtype=float)
        if self.circular:
            lam = self._rfft_eigs()
            return np.fft.irfft(lam * np.fft.rfft(w, axis=-1), n=self.n, axis=-1)
        return w @ self.dense()

    def sqrt_matvec(self, eps: np.ndarray) -> np.ndarray:
        """Apply the symmetric square root ``Sigma^(1/2)`` along the last axis."""
        eps = np.asarray(eps, dtype=float)
        if self.circular:
            root = np.sqrt(np.clip(self._rfft_eigs(), 0.0, None))
            return np.fft.irfft(root * np.fft.rfft(eps, axis=-1), n=self.n, axis=-1)
        return eps @ self._dense_sqrt()

    def inv_sqrt_matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.circular:
            lam = self._rfft_eigs()
            if lam.min() <= 1e-14 * lam.max():
                raise StimulusError("covariance is singular")
            return np.fft.irfft(np.fft.rfft(x, axis=-1) / np.sqrt(lam), n=self.n, axis=-1)
        lam, vec = np.linalg.eigh(self.dense())
        return x @ (vec / np.sqrt(lam)) @ vec.T

    def scaled(self, c: float) -> "CirculantCovariance":
        return CirculantCovariance(c * self.first_row, self.circular, c * self.clip)

    def _rfft_eigs(self):
        # real symmetric circulant: the half spectrum is real
        return np.fft.rfft(self.first_row).real

    def _dense_sqrt(self):
        lam, vec = np.linalg.eigh(self.dense())
        return (vec * np.sqrt(np.clip(lam, 0.0, None))) @ vec.T


def _psd_repair(row: np.ndarray, circular: bool) -> CirculantCovariance:
    n = row.size
    if circular:
        lam = np.fft.fft(row).real
        lam_min = lam.min()
        if lam_min >= 0:
            return CirculantCovariance(row, True)
        if -lam_min > 1e-6 * n * row[0]:
            raise StimulusError(
                f"covariance not PSD beyond clip tolerance: min eigenvalue {lam_min:.3e}")
        fixed = np.fft.ifft(np.clip(lam, 0.0, None)).real
        fixed = 0.5 * (fixed + np.roll(fixed[::-1], 1))
        return CirculantCovariance(fixed, True, clip=float(-lam_min))
    idx = np.arange(n)
    lam_min = np.linalg.eigvalsh(row[np.abs(idx[:, None] - idx[None, :])]).min()
    if lam_min < -1e-10 * row[0]:
        raise StimulusError(f"literal Toeplitz covariance is not PSD: min eigenvalue {lam_min:.3e}")
    return CirculantCovariance(row, False)


def sqexp_covariance(n: int, xi: float, circular: bool = True) -> CirculantCovariance:
    """Squared-exponential correlation ``exp(-d^2 / xi^2)`` with unit variance.

    ``circular=True`` uses the circular lag ``min(d, n - d)`` so the matrix is
    circulant; negative DFT eigenvalues are clipped (and recorded in ``clip``).
    """
    if n < 2:
        raise StimulusError("n must be >= 2")
    if not xi > 0:
        raise StimulusError("lengthscale xi must be positive")
    d = np.arange(n, dtype=float)
    if circular:
        d = np.minimum(d, n - d)
    with np.errstate(over="ignore", divide="ignore"):
        row = np.exp(-(d ** 2) / xi ** 2)
    row[0] = 1.0
    return _psd_repair(row, circular)


# ---------------------------------------------------------------------------
# Ising
# ---------------------------------------------------------------------------

BURN_IN_SWEEPS = 20
THIN_SWEEPS = 2


def ising_pair_correlation_exact(n: int, J_eff: float, d) -> np.ndarray:
    """Exact lag-``d`` spin correlation of the periodic ferromagnetic chain.

    Transfer-matrix result ``(t^d + t^(n-d)) / (1 + t^n)`` with ``t = tanh(J_eff)``.
    """
    d = np.asarray(d)
    if np.any(d < 0) or np.any(d > n):
        raise StimulusError("lag must satisfy 0 <= d <= n")
    t = np.tanh(J_eff)
    return (t ** d + t ** (n - d)) / (1.0 + t ** n)


def _gibbs_sweeps(x: np.ndarray, J: float, sweeps: int, rng: np.random.Generator):
    """In-place single-site Gibbs sweeps on chains ``x`` of shape (chains, n)."""
    n = x.shape[1]
    if n % 2 == 0:
        # even/odd sites are conditionally independent on an even ring, so a
        # checkerboard update is an exact systematic-scan Gibbs sweep
        p_table = special.expit(2.0 * J * np.array([-2.0, 0.0, 2.0]))
        even, odd = x[:, 0::2], x[:, 1::2]          # views into x
        for _ in range(sweeps):
            # even site 2j sees odd sites j-1 and j; odd site 2j+1 sees even j and j+1
            field_ = np.roll(odd, 1, axis=1) + odd
            p_up = p_table[(field_ * 0.5 + 1.0).astype(np.intp)]
            even[...] = np.where(rng.random(p_up.shape) < p_up, 1.0, -1.0)
            field_ = even + np.roll(even, -1, axis=1)
            p_up = p_table[(field_ * 0.5 + 1.0).astype(np.intp)]
            odd[...] = np.where(rng.random(p_up.shape) < p_up, 1.0, -1.0)
        return x
    blocks = [np.array([i]) for i in range(n)]
    for _ in range(sweeps):
        for idx in blocks:
            field_ = x[:, (idx - 1) % n] + x[:, (idx + 1) % n]
            p_up = special.expit(2.0 * J * field_)
            u = rng.random(p_up.shape)
            x[:, idx] = np.where(u < p_up, 1.0, -1.0)
    return x


def burn_in_sweeps(J: float) -> int:
    """Burn-in for chains started from random spins: ``max(20, 4 xi^2)`` sweeps.

    ``xi = -1 / log(tanh J)`` is the correlation length; single-site Gibbs
    relaxes in about ``xi^2`` sweeps, so a fixed burn-in is far from
    equilibrium at strong coupling (J = 1.2 gives xi ~ 6).
    """
    t = np.tanh(abs(J))
    if t == 0:
        return BURN_IN_SWEEPS
    xi = -1.0 / np.log(t) if t < 1 else np.inf
    return int(max(BURN_IN_SWEEPS, np.ceil(4 * xi ** 2))) if np.isfinite(xi) else 10 ** 6


def ising_chains(n: int, J: float, chains: int, rng: np.random.Generator,
                 sweeps: int | None = None) -> np.ndarray:
    """Independent Gibbs chains started from uniform random spins.

    ``sweeps`` defaults to ``burn_in_sweeps(J)``.
    """
    x = np.where(rng.random((chains, n)) < 0.5, 1.0, -1.0)
    return _gibbs_sweeps(x, J, burn_in_sweeps(J) if sweeps is None else sweeps, rng)


def ising_sample(n: int, J: float, sweeps: int | None = None,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """One spin configuration from p(x) ~ exp(J * sum_i x_i x_{i+1}), x_{n+1} = x_1.

    ``J`` is the ferromagnetic coupling: positive ``J`` gives positive
    correlations that lengthen as ``J`` grows.
    """
    if sweeps is not None and sweeps < BURN_IN_SWEEPS:
        raise StimulusError(f"sweeps must be >= {BURN_IN_SWEEPS} (burn-in)")
    rng = np.random.default_rng() if rng is None else rng
    return ising_chains(n, J, 1, rng, sweeps)[0]


# ---------------------------------------------------------------------------
# NLGP
# ---------------------------------------------------------------------------

def erf_second_moment(g: float, var_z: float = 1.0, rho: float = 1.0) -> float:
    """``E[erf(g Z1) erf(g Z2)]`` for unit-correlation-``rho`` Gaussians of variance ``var_z``."""
    s = 2.0 * g * g * var_z
    return (2.0 / np.pi) * np.arcsin(s * rho / (1.0 + s))


def nlgp_norm_constant(g: float, var_z: float = 1.0) -> float:
    """``Z(g)`` such that ``erf(g Z) / Z(g)`` has the same variance as ``Z``."""
    if not g > 0 or not var_z > 0:
        raise StimulusError("g and var_z must be positive")
    s = 2.0 * g * g * var_z
    # arcsin(s / (1 + s)) loses precision for tiny s; use the arctan form
    m2 = (2.0 / np.pi) * np.arctan(s / np.sqrt(1.0 + 2.0 * s))
    return float(np.sqrt(m2 / var_z))


def nlgp_sample(n: int, g: float, cov: CirculantCovariance, batch: int,
                rng: np.random.Generator) -> np.ndarray:
    if not g > 0:
        raise StimulusError("gain g must be positive")
    if cov.n != n:
        raise StimulusError("covariance dimension mismatch")
    z = cov.sqrt_matvec(rng.standard_normal((batch, n)))
    return special.erf(g * z) / nlgp_norm_constant(g, cov.variance)


# ---------------------------------------------------------------------------
# Kur(k): Gaussian copula with algebraic-sigmoid marginals
# ---------------------------------------------------------------------------

def alg_k_cdf(x, k: float):
    """Generalized algebraic sigmoid ``(1 + x / (1 + |x|^k)^(1/k)) / 2``."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 + x / (1.0 + np.abs(x) ** k) ** (1.0 / k))


def alg_k_pdf(x, k: float):
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 + np.abs(x) ** k) ** (-(k + 1.0) / k)


def _alg_k_from_v(v, k, one_minus_abs_v=None):
    av = np.abs(v)
    if one_minus_abs_v is None:
        one_minus_abs_v = 1.0 - av
    # 1 - |v|^k computed without cancellation near |v| = 1
    with np.errstate(divide="ignore"):      # v = 0 gives log(0) -> tail = 1
        tail = -np.expm1(k * np.log1p(-one_minus_abs_v))
    return np.sign(v) * av / tail ** (1.0 / k)


def alg_k_cdf_inverse(u, k: float):
    """Inverse of :func:`alg_k_cdf`. ``u`` must lie strictly inside (0, 1)."""
    if not k > 0:
        raise StimulusError("k must be positive")
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise StimulusError("alg_k has unbounded support: u must be in (0, 1)")
    return _alg_k_from_v(2.0 * u - 1.0, k)


def alg_k_raw_moment(k: float, p: int) -> float:
    """``E|T|^p`` for T with CDF alg_k; infinite when ``k <= p``.

    Substituting ``t = v^k`` in ``E|T|^p = int_0^1 v^p (1 - v^k)^(-p/k) dv``
    gives ``B((p + 1)/k, 1 - p/k) / k``.
    """
    if k <= p:
        return np.inf
    return float(special.beta((p + 1.0) / k, 1.0 - p / k) / k)


def kur_excess_kurtosis(k: float) -> float:
    """Large-sample excess kurtosis of the Kur(k) marginal (``inf`` for k <= 4)."""
    m2, m4 = alg_k_raw_moment(k, 2), alg_k_raw_moment(k, 4)
    if not np.isfinite(m4):
        return np.inf
    return m4 / m2 ** 2 - 3.0


@lru_cache(maxsize=64)
def kur_norm_constant(k: float) -> float:
    """Standard deviation of the alg_k law (the Kur normalization ``Z``)."""
    m2 = alg_k_raw_moment(k, 2)
    if not np.isfinite(m2):
        return np.inf
    return float(np.sqrt(m2))


def _kur_transform(z, k, sigma):
    """``f^-1(Phi(z / sigma))`` evaluated stably through erf/erfc."""
    s = np.asarray(z, dtype=float) / (sigma * np.sqrt(2.0))
    tail = special.erfc(np.abs(s))          # 1 - |v| with v = erf(s)
    return _alg_k_from_v(np.sign(s) * (1.0 - tail), k, tail)


def kur_sample(n: int, k: float, cov: CirculantCovariance, batch: int,
               rng: np.random.Generator) -> np.ndarray:
    if not k > 0:
        raise StimulusError("k must be positive")
    if cov.n != n:
        raise StimulusError("covariance dimension mismatch")
    z = cov.sqrt_matvec(rng.standard_normal((batch, n)))
    x = _kur_transform(z, k, np.sqrt(cov.variance))
    norm = kur_norm_constant(k)
    if not np.isfinite(norm):
        warnings.warn(f"Kur({k}) has infinite variance; standardizing per batch",
                      HeavyTailWarning, stacklevel=2)
        return x / np.sqrt(np.mean(x ** 2))
    return x / norm


# ---------------------------------------------------------------------------
# elliptical
# ---------------------------------------------------------------------------

RADIAL_LAWS = ("student_t", "shell", "custom")


def _sech2(x):
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


def custom_radial_cdf(r):
    """CDF of ``p_R(r) = 4 e^(2r+4) / (e^(2r) + e^4)^2`` on ``r >= 2``."""
    r = np.asarray(r, dtype=float)
    # 1 - 2e^4/(e^2r + e^4) == tanh(r - 2) on r >= 2
    return np.where(r >= 2.0, np.tanh(r - 2.0), 0.0)


def custom_radial_inverse(u):
    u = np.asarray(u, dtype=float)
    return 2.0 + np.arctanh(u)


def sample_radius(radial: str, n: int, size: int, rng: np.random.Generator,
                  nu: float | None = None) -> np.ndarray:
    if radial == "student_t":
        if nu is None or not nu > 0:
            raise StimulusError("student_t radial law needs nu > 0")
        return np.sqrt(n * rng.f(n, nu, size))
    if radial == "shell":
        return np.ones(size)
    if radial == "custom":
        return custom_radial_inverse(rng.random(size))
    raise StimulusError(f"unknown radial law {radial!r}")


def radial_second_moment(radial: str, n: int, nu: float | None = None) -> float:
    """``E[R^2]``; the data covariance is ``E[R^2] / n * Sigma``."""
    if radial == "student_t":
        if nu <= 2:
            return np.inf
        return n * nu / (nu - 2.0)
    if radial == "shell":
        return 1.0
    if radial == "custom":
        from scipy.integrate import quad
        return quad(lambda r: r * r * _sech2(r - 2.0), 2.0, np.inf)[0]
    raise StimulusError(f"unknown radial law {radial!r}")


def radial_first_moment(radial: str, n: int, nu: float | None = None) -> float:
    if radial == "student_t":
        # R = sqrt(n F), F ~ F(n, nu): E[sqrt F] = sqrt(nu/n) G((n+1)/2) G((nu-1)/2) / (G(n/2) G(nu/2))
        if nu <= 1:
            return np.inf
        lg = special.gammaln
        return float(np.sqrt(nu) * np.exp(lg((n + 1) / 2) + lg((nu - 1) / 2) - lg(n / 2) - lg(nu / 2)))
    if radial == "shell":
        return 1.0
    if radial == "custom":
        from scipy.integrate import quad
        return quad(lambda r: r * _sech2(r - 2.0), 2.0, np.inf)[0]
    raise StimulusError(f"unknown radial law {radial!r}")


def elliptical_sample(n: int, radial: str, cov: CirculantCovariance, batch: int,
                      rng: np.random.Generator, nu: float | None = None) -> np.ndarray:
    """``X = R * Lambda * U`` with ``Lambda`` the symmetric square root of ``cov``."""
    if cov.n != n:
        raise StimulusError("covariance dimension mismatch")
    eps = rng.standard_normal((batch, n))
    u = eps / np.linalg.norm(eps, axis=1, keepdims=True)
    r = sample_radius(radial, n, batch, rng, nu)
    return r[:, None] * cov.sqrt_matvec(u)


# ---------------------------------------------------------------------------
# task model
# ---------------------------------------------------------------------------

VARIANTS = ("ising", "nlgp", "kur", "elliptical")


@dataclass(frozen=True)
class LabeledBatch:
    inputs: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return self.labels.size

    def class_inputs(self, y: int) -> np.ndarray:
        return self.inputs[self.labels == y]


@dataclass(frozen=True)
class StimulusModel:
    """Configuration of a labeled stimulus generator.

    ``scales`` holds one correlation parameter per class: the Ising coupling
    ``J`` for ``ising``, the lengthscale ``xi`` otherwise. Class 1 must have a
    strictly longer correlation lengthscale than class 0.
    """

    variant: str
    n: int
    scales: tuple
    gain: float | None = None      # NLGP g
    k: float | None = None         # Kur shape
    radial: str | None = None      # elliptical radial law
    nu: float | None = None        # Student-t degrees of freedom
    circular: bool = True

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if self.variant not in VARIANTS:
            raise StimulusError(f"unknown variant {self.variant!r}")
        if self.n < 2:
            raise StimulusError("n must be >= 2")
        if len(self.scales) < 2:
            raise StimulusError("need at least two classes")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise StimulusError("class correlation scales must be strictly increasing")
        if self.variant == "nlgp" and not (self.gain and self.gain > 0):
            raise StimulusError("nlgp requires gain > 0")
        if self.variant == "kur" and not (self.k and self.k > 0):
            raise StimulusError("kur requires k > 0")
        if self.variant == "elliptical":
            if self.radial not in RADIAL_LAWS:
                raise StimulusError(f"radial law must be one of {RADIAL_LAWS}")
            if self.radial == "student_t" and not (self.nu and self.nu > 0):
                raise StimulusError("student_t requires nu > 0")

    # convenience constructors -------------------------------------------------
    @classmethod
    def ising(cls, n=40, J=(0.3, 0.7)):
        return cls("ising", n, tuple(J))

    @classmethod
    def nlgp(cls, n=40, g=1.0, xi=(0.3, 0.7), circular=True):
        return cls("nlgp", n, tuple(xi), gain=g, circular=circular)

    @classmethod
    def kur(cls, n=40, k=5.0, xi=(0.3, 0.7), circular=True):
        return cls("kur", n, tuple(xi), k=k, circular=circular)

    @classmethod
    def elliptical(cls, n=40, radial="shell", xi=(1.0, 3.0), nu=None):
        return cls("elliptical", n, tuple(xi), radial=radial, nu=nu)

    @property
    def n_classes(self) -> int:
        return len(self.scales)

    def label(self) -> str:
        if self.variant == "ising":
            return "Ising"
        if self.variant == "nlgp":
            return f"NLGP({self.gain:g})"
        if self.variant == "kur":
            return f"Kur({self.k:g})"
        return f"Elliptical({self.radial})"

    def latent_covariance(self, y: int) -> CirculantCovariance:
        """Covariance of the Gaussian field (or the elliptical scale matrix)."""
        if self.variant == "ising":
            raise StimulusError("the Ising model has no latent Gaussian field")
        return _cached_sqexp(self.n, self.scales[y], self.circular)

    def data_covariance(self, y: int) -> CirculantCovariance:
        """Exact covariance of ``X | Y = y``."""
        return _data_covariance(self, y)

    def sample_class(self, y: int, batch: int, rng: np.random.Generator) -> np.ndarray:
        if batch == 0:
            return np.empty((0, self.n))
        if self.variant == "ising":
            return ising_chains(self.n, self.scales[y], batch, rng)
        cov = self.latent_covariance(y)
        if self.variant == "nlgp":
            return nlgp_sample(self.n, self.gain, cov, batch, rng)
        if self.variant == "kur":
            return kur_sample(self.n, self.k, cov, batch, rng)
        return elliptical_sample(self.n, self.radial, cov, batch, rng, self.nu)


@lru_cache(maxsize=256)
def _cached_sqexp(n, xi, circular):
    return sqexp_covariance(n, xi, circular)


@lru_cache(maxsize=256)
def _data_covariance(model: StimulusModel, y: int) -> CirculantCovariance:
    n, s = model.n, model.scales[y]
    if model.variant == "ising":
        d = np.arange(n)
        return CirculantCovariance(ising_pair_correlation_exact(n, s, d))
    latent = model.latent_covariance(y)
    if model.variant == "nlgp":
        z2 = nlgp_norm_constant(model.gain, latent.variance) ** 2
        rho = latent.first_row / latent.variance
        row = erf_second_moment(model.gain, latent.variance, rho) / z2
        row[0] = latent.variance
        return CirculantCovariance(row, latent.circular)
    if model.variant == "kur":
        rho = latent.first_row / latent.variance
        row = np.array([kur_correlation(model.k, r) for r in rho])
        return CirculantCovariance(row, latent.circular)
    return latent.scaled(radial_second_moment(model.radial, n, model.nu) / n)


_GH_NODES, _GH_WEIGHTS = special.roots_hermitenorm(160)
_GH_WEIGHTS = _GH_WEIGHTS / np.sqrt(2.0 * np.pi)


@lru_cache(maxsize=4096)
def kur_correlation(k: float, rho: float) -> float:
    """Correlation of two unit-variance Kur(k) coordinates whose latent correlation is ``rho``.

    Nested Gauss-Hermite quadrature over ``Z2 = rho Z1 + sqrt(1 - rho^2) W``.
    """
    if rho >= 1.0 - 1e-15:
        return 1.0
    if abs(rho) < 1e-300:
        return 0.0
    norm = kur_norm_constant(k)
    if not np.isfinite(norm):
        raise StimulusError(f"Kur({k}) has infinite variance; correlation undefined")
    z1 = _GH_NODES[:, None]
    z2 = rho * z1 + np.sqrt(1.0 - rho * rho) * _GH_NODES[None, :]
    h1 = _kur_transform(z1, k, 1.0)
    h2 = _kur_transform(z2, k, 1.0)
    val = np.einsum("i,j,ij->", _GH_WEIGHTS, _GH_WEIGHTS, h1 * h2)
    return float(val / norm ** 2)


def task_sample(model: StimulusModel, batch: int, rng: np.random.Generator) -> LabeledBatch:
    """Draw ``batch`` labeled samples with labels uniform over the classes."""
    labels = rng.integers(0, model.n_classes, size=batch)
    inputs = np.empty((batch, model.n))
    for y in range(model.n_classes):
        mask = labels == y
        inputs[mask] = model.sample_class(y, int(mask.sum()), rng)
    return LabeledBatch(inputs, labels.astype(float))


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)`` (e.g. a batch index)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass
class TaskStream:
    """Iterator of training batches, one fresh batch per call.

    Batch ``i`` draws from the substream ``(seed, stream_id, i)``. Ising
    batches come from persistent per-class Gibbs chains: burned in once, then
    advanced ``THIN_SWEEPS`` sweeps between retained batches.
    """

    model: StimulusModel
    batch_size: int
    seed: int
    stream_id: int = 1
    index: int = 0
    _chains: list = field(default_factory=list, repr=False)

    def __iter__(self):
        return self

    def next_rng(self) -> np.random.Generator:
        """Generator for the next batch (advances the batch index)."""
        rng = substream(self.seed, self.stream_id, self.index)
        self.index += 1
        return rng

    def __next__(self) -> LabeledBatch:
        rng = self.next_rng()
        if self.model.variant != "ising":
            return task_sample(self.model, self.batch_size, rng)
        m = self.model
        if not self._chains:
            self._chains = [ising_chains(m.n, J, self.batch_size, rng) for J in m.scales]
        else:
            for x, J in zip(self._chains, m.scales):
                _gibbs_sweeps(x, J, THIN_SWEEPS, rng)
        labels = rng.integers(0, m.n_classes, size=self.batch_size)
        inputs = np.empty((self.batch_size, m.n))
        for y, x in enumerate(self._chains):
            mask = labels == y
            inputs[mask] = x[: mask.sum()]
        return LabeledBatch(inputs, labels.astype(float))
