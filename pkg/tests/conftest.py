"""Shared helpers: finite-difference oracles and random instance builders.

The finite-difference gradient and the instance builders live here; the
duplicate-implementation oracles (straight-line forward passes, naive loss
loops, the simplex maximizer) live next to the tests that use them so each
stays independent of the code path it checks.
"""

import numpy as np
import pytest

from cclearn.data import Sample
from cclearn.model import EncoderConfig, EncoderPair


def central_diff(f, w, eps=1e-5):
    """Central finite-difference gradient of a scalar function of a flat vector."""
    g = np.zeros_like(w)
    for i in range(len(w)):
        wp, wm = w.copy(), w.copy()
        wp[i] += eps
        wm[i] -= eps
        g[i] = (f(wp) - f(wm)) / (2.0 * eps)
    return g


def assert_grad_close(analytic, reference, rtol=1e-4, floor=1e-7):
    """Coordinate-wise |a - r| <= floor + rtol * |r|."""
    analytic = np.asarray(analytic)
    reference = np.asarray(reference)
    err = np.abs(analytic - reference)
    tol = floor + rtol * np.abs(reference)
    worst = int(np.argmax(err - tol))
    assert np.all(err <= tol), (
        f"gradient mismatch at coord {worst}: analytic={analytic[worst]!r} "
        f"reference={reference[worst]!r} err={err[worst]:.3e} tol={tol[worst]:.3e}"
    )


def make_encoder(seed, input_dim=3, num_classes=4, hidden_dim=4, embed_dim=3):
    enc = EncoderPair(
        EncoderConfig(
            input_dim=input_dim,
            num_classes_max=num_classes,
            hidden_dim=hidden_dim,
            embed_dim=embed_dim,
            seed=seed,
        )
    )
    return enc


def make_pool(rng, n, num_classes, input_dim, id_offset=0):
    """Random samples with classes cycling so every class is represented."""
    return [
        Sample(
            x=rng.standard_normal(input_dim),
            class_id=int(i % num_classes),
            sample_id=id_offset + i,
        )
        for i in range(n)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(0)
