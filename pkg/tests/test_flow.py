import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from rfloc.flow import (
    Amplifier, DegenerateSpectrumError, FlowConfig, FlowDomainError, MarginalSpec,
    UndefinedSurrogateError, alg, alg_inv, eigen_ratio_multiplicity, elliptical_constant,
    elliptical_constant_mc, elliptical_rhs, empirical_flow_rhs, flow_rhs,
    integrate_elliptical_flow, integrate_flow, marginal_for, phi, phi_limit, phi_taylor3,
    tabulate_amplifier,
)
from rfloc.stimulus import CirculantCovariance, StimulusModel, sqexp_covariance

SQ = np.sqrt(2 / np.pi)


@given(st.floats(-0.999, 0.999))
def test_alg_round_trip(a):
    assert alg(alg_inv(a)) == pytest.approx(a, abs=1e-12)


def test_alg_inv_domain():
    with pytest.raises(FlowDomainError):
        alg_inv(1.0)


def test_marginal_validation():
    with pytest.raises(ValueError):
        MarginalSpec.empirical(np.ones(10))
    with pytest.raises(ValueError):
        MarginalSpec.alg_sigmoid(2.0)          # infinite variance, no unit scale
    with pytest.raises(ValueError):
        marginal_for(StimulusModel.elliptical(10, "shell", (1, 2)))


def test_phi_gaussian_closed_form():
    # Stein's lemma: E[X erf(cX/sqrt2)] = sqrt(2/pi) c sigma^2 / sqrt(1 + c^2 sigma^2)
    a = np.linspace(-0.99, 0.99, 41)
    for sigma in (1.0, 0.5):
        c = alg_inv(a)
        ref = SQ * c * sigma ** 2 / np.sqrt(1 + c ** 2 * sigma ** 2)
        np.testing.assert_allclose(phi(MarginalSpec.gaussian(sigma), a), ref, atol=1e-9)


def test_phi_two_point_closed_form():
    a = np.linspace(-0.99, 0.99, 41)
    np.testing.assert_allclose(phi(MarginalSpec.two_point(), a), special.erf(alg_inv(a) / np.sqrt(2)),
                               atol=1e-12)


def test_phi_alg_sigmoid_against_monte_carlo():
    m = MarginalSpec.alg_sigmoid(10.0)
    u = (np.arange(400_000) + 0.5) / 400_000
    from rfloc.stimulus import alg_k_cdf_inverse
    x = m.value * alg_k_cdf_inverse(u, 10.0)      # midpoint-rule quantiles of the scaled law
    for a in (0.2, 0.6, 0.95):
        ref = np.mean(x * special.erf(x * alg_inv(a) / np.sqrt(2)))
        assert phi(m, a) == pytest.approx(ref, abs=2e-4)


def test_phi_nlgp_empirical_against_quadrature():
    g = 1.0
    model = StimulusModel.nlgp(10, g)
    m = marginal_for(model)
    from rfloc.stimulus import nlgp_norm_constant
    Z = nlgp_norm_constant(g)
    for a in (0.3, 0.8):
        c = alg_inv(a)
        f = lambda z: special.erf(g * z) / Z * special.erf(special.erf(g * z) / Z * c / np.sqrt(2)) \
            * stats.norm.pdf(z)
        ref = integrate.quad(f, -np.inf, np.inf, epsabs=1e-12)[0]
        assert phi(m, a) == pytest.approx(ref, abs=1e-3)


@pytest.mark.parametrize("m", [MarginalSpec.two_point(), MarginalSpec.gaussian(),
                               MarginalSpec.alg_sigmoid(10.0)], ids=lambda m: m.kind)
def test_phi_limit_and_oddness(m):
    assert phi(m, 1 - 1e-9) == pytest.approx(phi_limit(m), abs=1e-3)
    a = np.array([0.1, 0.5, 0.9])
    np.testing.assert_allclose(phi(m, -a), -phi(m, a), atol=1e-14)
    assert np.all(np.diff(phi(m, np.linspace(0, 0.99, 50))) > 0)


@pytest.mark.parametrize("m", [MarginalSpec.two_point(), MarginalSpec.gaussian(),
                               MarginalSpec.alg_sigmoid(10.0)], ids=lambda m: m.kind)
def test_taylor_coefficients_by_finite_differences(m):
    h = 1e-2
    f = lambda a: float(phi(m, a))
    d1 = (f(h) - f(-h)) / (2 * h)
    d3 = (f(2 * h) - 2 * f(h) + 2 * f(-h) - f(-2 * h)) / (2 * h ** 3)
    c1, c3 = phi_taylor3(m)
    assert d1 == pytest.approx(c1, rel=1e-3)
    assert d3 == pytest.approx(6 * c3, rel=1e-2)


def test_taylor_undefined_for_infinite_fourth_moment():
    with pytest.raises(UndefinedSurrogateError):
        phi_taylor3(MarginalSpec.alg_sigmoid(4.0))
    table = tabulate_amplifier(MarginalSpec.alg_sigmoid(4.0), np.array([0.0, 0.5]))
    assert np.isnan(table[:, 2]).all()


def test_amplifier_table_accuracy():
    for m in (MarginalSpec.gaussian(), MarginalSpec.alg_sigmoid(30.0)):
        amp = Amplifier.exact(m)
        a = np.linspace(-0.995, 0.995, 97)
        np.testing.assert_allclose(amp(a), phi(m, a), atol=1e-7)


def test_amplifier_variants():
    m = MarginalSpec.gaussian()
    t = Amplifier.taylor3(m)
    assert t.coefficients[0] == pytest.approx(SQ)
    assert t.coefficients[1] == pytest.approx(0.0, abs=1e-12)       # Gaussian: 3 m2 - m4 = 0
    assert Amplifier.linear()(0.5) == pytest.approx(SQ * 0.5)


def test_tabulate_columns():
    rows = tabulate_amplifier(MarginalSpec.two_point(), np.array([-0.5, 0.0, 0.5]))
    assert rows.shape == (3, 3)
    assert rows[1, 1] == 0.0


# --- flows --------------------------------------------------------------------

def _pair(n=20):
    return sqexp_covariance(n, 0.7), sqexp_covariance(n, 1.5)


def test_flow_rhs_matches_monte_carlo_gradient():
    # the early-time flow is twice the mean gradient for near-Gaussian inputs
    model = StimulusModel.nlgp(20, 0.01, (0.7, 1.5))
    w = np.random.default_rng(0).standard_normal(20) * 0.3
    amp = Amplifier.exact(marginal_for(model))
    s0, s1 = model.data_covariance(0), model.data_covariance(1)
    theory = 0.5 * flow_rhs(s0, s1, amp, w)
    est, se = empirical_flow_rhs(model, w, 400_000, np.random.default_rng(1), return_stderr=True)
    assert np.max(np.abs(est - theory) / se) < 5


def test_euler_order_and_rk4():
    s0, s1 = _pair()
    amp = Amplifier.exact(MarginalSpec.two_point())
    w0 = np.random.default_rng(2).standard_normal(20) * 0.3
    ref = integrate_flow(s0, s1, amp, w0, FlowConfig(dt=0.005, steps=400, method="rk4")).final[0]
    err = []
    for dt in (0.1, 0.05, 0.025):
        tr = integrate_flow(s0, s1, amp, w0, FlowConfig(dt=dt, steps=int(round(2 / dt))))
        err.append(np.linalg.norm(tr.final[0] - ref))
    order = np.log2(np.array(err[:-1]) / np.array(err[1:]))
    assert np.all(order >= 0.9)


def test_flow_times_and_records():
    s0, s1 = _pair()
    tr = integrate_flow(s0, s1, Amplifier.linear(), np.ones(20), FlowConfig(dt=0.1, steps=25,
                                                                           record_stride=10))
    np.testing.assert_allclose(tr.times, [0, 1.0, 2.0, 2.5])


def test_flow_domain_errors():
    s0, s1 = _pair()
    with pytest.raises(FlowDomainError):
        integrate_flow(s0, s1, Amplifier.linear(), np.zeros(20))
    with pytest.raises(ValueError):
        integrate_flow(s0, s1, Amplifier.linear(), np.ones(10))
    with pytest.raises(ValueError):
        FlowConfig(dt=0)


def test_flow_aborts_when_amplifier_argument_saturates():
    # with identity Sigma_1 a one-hot w puts the argument at exactly 1
    eye = CirculantCovariance(np.eye(10)[0])
    w = np.eye(10)[0]
    with pytest.raises(FlowDomainError):
        flow_rhs(eye, eye, Amplifier.linear(), w)


def test_flow_is_deterministic():
    s0, s1 = _pair()
    amp = Amplifier.exact(MarginalSpec.two_point())
    w0 = np.linspace(-1, 1, 20)
    a = integrate_flow(s0, s1, amp, w0, FlowConfig(dt=0.05, steps=50))
    b = integrate_flow(s0, s1, amp, w0, FlowConfig(dt=0.05, steps=50))
    np.testing.assert_array_equal(a.weights, b.weights)


def test_two_point_flow_localizes():
    model = StimulusModel.ising(40)
    amp = Amplifier.exact(marginal_for(model))
    w0 = np.random.default_rng(0).standard_normal(40) * 0.3
    tr = integrate_flow(model.data_covariance(0), model.data_covariance(1), amp, w0,
                        FlowConfig(dt=0.05, steps=2000))
    w = tr.final[0]
    assert np.sum(w ** 4) / np.sum(w ** 2) ** 2 > 0.3


@pytest.mark.parametrize("law,nu", [("student_t", 3.0), ("shell", None), ("custom", None)])
def test_elliptical_constant_against_monte_carlo(law, nu):
    exact = elliptical_constant(law, 40, nu)
    mc = elliptical_constant_mc(law, 40, nu, 1_000_000, np.random.default_rng(0))
    assert exact == pytest.approx(mc, rel=0.02)


def test_elliptical_constant_gaussian_limit():
    # large nu: t -> Gaussian, C -> E[ReLU(S)] / sd(S) = 1 / sqrt(2 pi)
    assert elliptical_constant("student_t", 40, 1e6) == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-4)


def test_elliptical_flow_reaches_sinusoid():
    s0, s1 = sqexp_covariance(40, 1.0), sqexp_covariance(40, 3.0)
    w0 = np.random.default_rng(1).standard_normal(40) * 0.3
    tr = integrate_elliptical_flow(s0, s1, 0.4, w0, FlowConfig(dt=0.1, steps=20000))
    from rfloc.metrics import sinusoid_fit
    assert sinusoid_fit(tr.final[0]).rel_residual < 1e-3
    rhs = elliptical_rhs(s0, s1, 0.4, tr.final[0])
    assert np.linalg.norm(rhs) < 1e-6


def test_eigen_ratio_multiplicity():
    s0, s1 = sqexp_covariance(40, 1.0), sqexp_covariance(40, 3.0)
    assert eigen_ratio_multiplicity(s0, s1) == 2          # DFT pairs +-k
    assert eigen_ratio_multiplicity(s0, s0) == 40
    sing = CirculantCovariance(np.array([0.5, 0.25, 0.0, 0.25]))   # eigenvalues 1, .5, 0, .5
    with pytest.raises(DegenerateSpectrumError):
        eigen_ratio_multiplicity(CirculantCovariance(np.eye(4)[0]), sing)
