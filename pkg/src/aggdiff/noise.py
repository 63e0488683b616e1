"""Reproducible randomness: master-seed splitting and Gaussian increment fields.

Streams are built on the counter-based Philox bit generator keyed through
``numpy.random.SeedSequence(master_seed, spawn_key=(path_index,))``, whose
documented mixing has avalanche quality and guarantees non-overlapping
streams per path index.  Normal deviates are produced by an explicit
Box-Muller transform of raw uniform words, never by a library normal, so
the value stream is pinned by this module alone.  Pair k of a call consumes
the raw uniforms at offsets (2k, 2k+1):

    u1 = 1 - U_{2k}, u2 = U_{2k+1}
    r = sqrt(-2 ln u1); outputs (r cos(2 pi u2), r sin(2 pi u2)) interleaved.

Splitting a draw into equal even-sized calls therefore reproduces the same
values; a call for an odd count consumes one extra uniform (the unused sine
half of the last pair).  The generator identity string below is recorded in
run manifests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Field, Grid2D

GENERATOR_VERSION = "philox4x64/box-muller/interleaved-1"


@dataclass
class RngStream:
    """One exclusive per-path random stream; not safe to share across paths."""

    master_seed: int
    path_index: int
    _gen: np.random.Generator = field(repr=False)
    draw_count: int = 0

    def standard_normals(self, n: int) -> np.ndarray:
        """Next ``n`` standard normal deviates, in documented draw order."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        if n == 0:
            return np.empty(0)
        m = (n + 1) // 2
        u = self._gen.random(2 * m)
        u1 = 1.0 - u[0::2]  # in (0, 1]: log is finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        self.draw_count += n
        return out[:n]


def derive_stream(master_seed: int, path_index: int) -> RngStream:
    """Independent stream for one path, derived from the master seed."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(path_index,))
    return RngStream(master_seed=master_seed, path_index=path_index,
                     _gen=np.random.Generator(np.random.Philox(ss)))


def gaussian_field(stream: RngStream, grid: Grid2D, dt: float) -> Field:
    """I.i.d. N(0, dt) increments, one per node, consumed in field layout order."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    z = stream.standard_normals(grid.ny * grid.nx).reshape(grid.shape)
    return Field(grid, np.sqrt(dt) * z)


def stateless_gaussian_field(master_seed: int, path_index: int, step_index: int,
                             grid: Grid2D, dt: float) -> Field:
    """Alternative stateless mode: increments keyed by (seed, path, step).

    Values differ from the streaming mode; use one or the other per run.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=(path_index, step_index))
    stream = RngStream(master_seed=master_seed, path_index=path_index,
                       _gen=np.random.Generator(np.random.Philox(ss)))
    return gaussian_field(stream, grid, dt)
