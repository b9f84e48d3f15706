"""Central finite-difference gradient oracle used across the test suite.

Independent of the tape: re-evaluates the forward function at perturbed
inputs, never reusing reverse-mode machinery.
"""

import numpy as np

H = 1e-6
REL_TOL = 1e-4
ABS_TOL = 1e-7


def numeric_grad(f, arrays, h=H):
    """Central-difference gradients of scalar f(*arrays) w.r.t. each array.

    `f` must be a pure function of the given float64 arrays; each coordinate
    is perturbed by +/- h.
    """
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(*arrays)
            flat[i] = orig - h
            fm = f(*arrays)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, rel_tol=REL_TOL, abs_tol=ABS_TOL):
    """Elementwise check: |a - n| <= abs_tol or relative error <= rel_tol."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    ok = (diff <= abs_tol) | (diff <= rel_tol * denom)
    assert np.all(ok), (
        f"gradient mismatch: max abs diff {diff.max():.3e}, "
        f"worst rel {np.nanmax(diff / np.where(denom == 0, 1, denom)):.3e}")
