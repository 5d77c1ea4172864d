"""Independent reference solvers used as test oracles."""
import numpy as np

from deepsc.tensor import KernelStack


def lasso_objective(x, phi, a, lam):
    r = x - phi @ a
    return 0.5 * float(r @ r) + lam * float(np.abs(a).sum())


def fista(x, phi, lam, n_iter=5000, nonnegative=False):
    """Accelerated proximal gradient on 1/2||x - phi a||^2 + lam||a||_1."""
    step = 1.0 / np.linalg.norm(phi, 2) ** 2
    a = np.zeros(phi.shape[1])
    y = a.copy()
    t = 1.0
    for _ in range(n_iter):
        z = y - step * (phi.T @ (phi @ y - x))
        if nonnegative:
            a_next = np.maximum(z - step * lam, 0.0)
        else:
            a_next = np.sign(z) * np.maximum(np.abs(z) - step * lam, 0.0)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = a_next + ((t - 1.0) / t_next) * (a_next - a)
        a, t = a_next, t_next
    return a


def dense_stack(phi):
    """Wrap a [dim, atoms] matrix as a 1x1 fully connected kernel stack."""
    dim, atoms = phi.shape
    return KernelStack(phi.T.reshape(atoms, dim, 1, 1).copy(), 1, (dim, 1, 1))


def random_dictionary(rng, dim, atoms):
    phi = rng.standard_normal((dim, atoms))
    return phi / np.linalg.norm(phi, axis=0)
