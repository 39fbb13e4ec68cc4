"""Independent numerical references used by the tests.

Nothing here imports the package: each oracle rebuilds its quantity from
first principles on a dense grid or from closed-form 2x2 algebra.
"""

import numpy as np

S_AMP = 0.5


def gaussian_amplitude(t, center, s=S_AMP):
    return (2 * np.pi * s * s) ** -0.25 * np.exp(-((t - center) ** 2) / (4 * s * s))


def grid_mixture_moments(weights, centers, s=S_AMP, step=2e-3, margin=10.0):
    """(norm_sq, mean, std) of |sum w_k g_k|^2 by trapezoid integration."""
    centers = np.asarray(centers, dtype=float)
    t = np.arange(centers.min() - margin * s, centers.max() + margin * s + step, step)
    amp = np.zeros_like(t, dtype=complex)
    for w, c in zip(weights, centers):
        amp += w * gaussian_amplitude(t, c, s)
    dens = np.abs(amp) ** 2
    norm = np.trapezoid(dens, t)
    mean = np.trapezoid(t * dens, t) / norm
    var = np.trapezoid((t - mean) ** 2 * dens, t) / norm
    return norm, mean, np.sqrt(var)


def grid_zeno(theta, tau_tilde, loops, s=S_AMP, sub=8, margin=10.0):
    """Survival, mean and std after ``loops`` stages, by shifting a sampled
    amplitude on a lattice whose step divides tau_tilde / 2.

    Each stage is ``phi <- cos^2 theta * phi(t - tau/2) + sin^2 theta * phi(t + tau/2)``,
    i.e. the DGD followed by projection onto cos(theta)|H> + sin(theta)|V>.
    """
    h = 0.5 * tau_tilde / sub
    reach = loops * tau_tilde / 2 + margin * s
    n = int(np.ceil(reach / h))
    t = h * np.arange(-n, n + 1)
    phi = gaussian_amplitude(t, 0.0, s).astype(complex)
    a_h, a_v = np.cos(theta) ** 2, np.sin(theta) ** 2
    for _ in range(loops):
        up = np.zeros_like(phi)
        down = np.zeros_like(phi)
        up[sub:] = phi[:-sub]
        down[:-sub] = phi[sub:]
        phi = a_h * up + a_v * down
    dens = np.abs(phi) ** 2
    norm = dens.sum() * h
    mean = (t * dens).sum() * h / norm
    var = ((t - mean) ** 2 * dens).sum() * h / norm
    return norm, mean, np.sqrt(var)


def expectation_2x2(amp_h, amp_v):
    """<Z> and sqrt(<Z^2> - <Z>^2) for a normalized pair of amplitudes."""
    m = abs(amp_h) ** 2 - abs(amp_v) ** 2
    return m, np.sqrt(max(0.0, 1 - m * m))


def mean_fidelity_under_tilt(sigma):
    """E[cos^2(delta / 2)] for delta ~ |N(0, sigma)|."""
    return 0.5 * (1 + np.exp(-sigma * sigma / 2))


def quantized_jitter_std(jitter, tick):
    return np.sqrt(jitter**2 + tick**2 / 12)
