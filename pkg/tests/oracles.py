"""Closed-form reference solutions used by the tests.

Everything here is written directly from textbook formulas with plain numpy,
independent of the package internals.
"""
import numpy as np


def free_gaussian(x, t, center=0.0, momentum=0.0, sigma=1.0, mass=1.0, hbar=1.0):
    """Free evolution of exp(-(x-c)^2/4 s^2 + i p (x-c)/hbar), normalized."""
    z = 1 + 1j * hbar * t / (2 * mass * sigma**2)
    xi = x - center - momentum * t / mass
    return ((2 * np.pi * sigma**2) ** -0.25 / np.sqrt(z)
            * np.exp(-xi**2 / (4 * sigma**2 * z)
                     + 1j * momentum * (x - center) / hbar
                     - 1j * momentum**2 * t / (2 * mass * hbar)))


def free_width(t, sigma=1.0, mass=1.0, hbar=1.0):
    """Position spread of a free Gaussian."""
    return sigma * np.sqrt(1 + (hbar * t / (2 * mass * sigma**2)) ** 2)


def free_kernel(x0, x, t, mass=1.0, hbar=1.0):
    return np.sqrt(mass / (2j * np.pi * hbar * t)) * np.exp(1j * mass * (x - x0) ** 2 / (2 * hbar * t))


def mehler_kernel(x0, x, t, omega=1.0, mass=1.0, hbar=1.0):
    """Harmonic-oscillator propagator for 0 < omega t < pi."""
    s, c = np.sin(omega * t), np.cos(omega * t)
    pref = np.sqrt(mass * omega / (2j * np.pi * hbar * s))
    return pref * np.exp(1j * mass * omega * ((x**2 + x0**2) * c - 2 * x * x0) / (2 * hbar * s))


def coherent_state(x, t, x0, p0=0.0, omega=1.0, mass=1.0, hbar=1.0):
    """Displaced oscillator ground state at time t (global phase included)."""
    q = x0 * np.cos(omega * t) + p0 / (mass * omega) * np.sin(omega * t)
    p = p0 * np.cos(omega * t) - mass * omega * x0 * np.sin(omega * t)
    a = mass * omega / hbar
    phase = (p * q - p0 * x0) / (2 * hbar) - omega * t / 2
    return ((a / np.pi) ** 0.25 * np.exp(-a * (x - q) ** 2 / 2 + 1j * p * (x - q) / hbar
                                         + 1j * phase))


def well_kernel_eigen(x0, x, tau, length=1.0, mass=1.0, hbar=1.0, n_max=4000):
    """Infinite-well propagator from the sine eigenbasis at complex time tau."""
    n = np.arange(1, n_max + 1)
    E = (hbar * np.pi * n / length) ** 2 / (2 * mass)
    return np.sum(2 / length * np.sin(n * np.pi * x0 / length) * np.sin(n * np.pi * x / length)
                  * np.exp(-1j * E * tau / hbar))


def well_kernel_images(x0, x, tau, length=1.0, mass=1.0, hbar=1.0, n_img=60):
    """Infinite-well propagator as the signed image sum of free kernels."""
    total = 0j
    for n in range(-n_img, n_img + 1):
        for sgn, y in ((1, x + 2 * n * length), (-1, -x + 2 * n * length)):
            total += sgn * np.sqrt(mass / (2j * np.pi * hbar * tau)) * np.exp(
                1j * mass * (y - x0) ** 2 / (2 * hbar * tau))
    return total


def well_image_momenta(x0, x, t, length=1.0, mass=1.0, p_max=6.0, n_img=50):
    """Initial momenta of the unfolded straight lines from x0 to images of x."""
    out = []
    for n in range(-n_img, n_img + 1):
        for y in (x + 2 * n * length, -x + 2 * n * length):
            p = mass * (y - x0) / t
            if abs(p) <= p_max:
                out.append(p)
    return np.sort(out)


def bohm_free(x0, t, center=0.0, momentum=0.0, sigma=1.0, mass=1.0, hbar=1.0):
    """Bohmian path in a free Gaussian: scaling flow about the moving centre."""
    return center + momentum * t / mass + (x0 - center) * free_width(t, sigma, mass, hbar) / sigma


def well_autocorrelation(psi0_values, x, t, length=1.0, mass=1.0, hbar=1.0):
    """|<psi0|psi(t)>|^2 in the well by direct projection on the sine basis."""
    dx = x[1] - x[0]
    n = np.arange(1, x.size)
    basis = np.sqrt(2 / length) * np.sin(np.pi * np.outer(n, x) / length)
    c = basis @ psi0_values * dx
    E = (hbar * np.pi * n / length) ** 2 / (2 * mass)
    return abs(np.sum(np.abs(c) ** 2 * np.exp(-1j * E * t / hbar))) ** 2


def total_variation(samples, density, x, bins, weights=None):
    """TV distance between a histogram of samples and a gridded density on common bins."""
    edges = np.linspace(x[0], x[-1], bins + 1)
    h, _ = np.histogram(np.clip(samples, edges[0], edges[-1]), edges, weights=weights)
    h = h / h.sum()
    cdf = np.concatenate([[0.0], np.cumsum(density)])
    cdf /= cdf[-1]
    xc = np.concatenate([x, [x[-1] + (x[1] - x[0])]])
    ref = np.diff(np.interp(edges, xc, cdf))
    return 0.5 * np.abs(h - ref).sum()
