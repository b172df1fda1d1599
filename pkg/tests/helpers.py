"""Shared test helpers."""

import numpy as np

from twisted_nls.spectral import SpectralField


def random_interior(basis, rng, scale=1.0, decay=2.0):
    """Random field with decaying spectrum and no mass on the top shell."""
    n = basis.n
    idx = basis.indices
    order = 1.0 + idx[:, :n].sum(1) + idx[:, n:].sum(1)
    c = (rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)) * order ** -decay
    c[basis.top_shell] = 0
    return SpectralField(scale * c / np.linalg.norm(c), basis)
