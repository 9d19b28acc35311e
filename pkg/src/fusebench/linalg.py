"""Dense matrix primitives with a deterministic accumulation contract.

Matrices are plain 2-D numpy arrays stored in float32, row-major.  Every
dot product in :func:`matmul` is accumulated left-to-right in float64 and
rounded to float32 on store, so results are bit-identical regardless of
how many worker threads participate: parallelism only ever partitions
output rows, never a single accumulation.

Randomness comes from numpy's PCG64 bit generator; normal variates use
the Generator's ziggurat sampler.  Identical seeds give bitwise-identical
streams within one installation (see README for the reproducibility
contract).
"""

from __future__ import annotations

import os

import numba
import numpy as np

__all__ = [
    "ShapeError",
    "Rng",
    "matmul",
    "elementwise",
    "transpose",
    "reduce_sum",
    "thread_count",
]

DTYPE = np.float32

# Upper bound fixed by the numba runtime at process start.
_MAX_THREADS = numba.config.NUMBA_NUM_THREADS


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


def thread_count() -> int:
    """Worker threads for matmul, capped by the FUSEBENCH_THREADS env var."""
    raw = os.environ.get("FUSEBENCH_THREADS")
    if raw is None:
        return _MAX_THREADS
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"FUSEBENCH_THREADS must be an integer, got {raw!r}") from None
    if cap < 1:
        raise ValueError(f"FUSEBENCH_THREADS must be >= 1, got {cap}")
    return min(cap, _MAX_THREADS)


@numba.njit(parallel=True, fastmath=False, cache=True)
def _matmul_kernel(a, b, out):  # pragma: no cover - exercised via matmul
    m, k = a.shape
    n = b.shape[1]
    for i in numba.prange(m):
        for t in range(k):
            ait = np.float64(a[i, t])
            for j in range(n):
                out[i, j] += ait * np.float64(b[t, j])


def _as_matrix(x, name: str) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {x.shape}")
    return x


def matmul(a, b) -> np.ndarray:
    """Matrix product with float64 accumulation.

    Float32 operands produce a float32 result (rounded once, on store);
    if either operand is float64 the result stays float64.  Each output
    element is a strictly sequential left-to-right sum, so the result is
    independent of the thread count.
    """
    a = _as_matrix(a, "left operand")
    b = _as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    if a.size and b.size:
        numba.set_num_threads(thread_count())
        _matmul_kernel(np.ascontiguousarray(a), np.ascontiguousarray(b), out)
    if a.dtype == DTYPE and b.dtype == DTYPE:
        return out.astype(DTYPE)
    return out


_ELEMENTWISE_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "hadamard": np.multiply,
}


def elementwise(a, b, op: str) -> np.ndarray:
    """Pointwise add / sub / hadamard of two equal-shape matrices."""
    a = _as_matrix(a, "left operand")
    b = _as_matrix(b, "right operand")
    if a.shape != b.shape:
        raise ShapeError(f"elementwise {op} needs equal shapes, got {a.shape} and {b.shape}")
    try:
        fn = _ELEMENTWISE_OPS[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(a, b)


def transpose(a) -> np.ndarray:
    """Row-major transposed copy."""
    return np.ascontiguousarray(_as_matrix(a, "operand").T)


def reduce_sum(a, axis: int | None = None):
    """Sum with float64 accumulation, rounded back to the input dtype."""
    a = np.asarray(a)
    total = a.sum(axis=axis, dtype=np.float64)
    if axis is None:
        return float(total)
    return total.astype(a.dtype)


class Rng:
    """Seeded random stream (PCG64) that owns its position.

    Children created with :meth:`spawn` use numpy's SeedSequence spawning,
    so the full tree of streams is a pure function of the root seed.
    """

    def __init__(self, seed: int, _seq: np.random.SeedSequence | None = None):
        self.seed = int(seed)
        self._seq = _seq if _seq is not None else np.random.SeedSequence(self.seed)
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    def spawn(self, n: int) -> list["Rng"]:
        """Derive n independent child streams, deterministically."""
        return [Rng(self.seed, _seq=child) for child in self._seq.spawn(n)]

    def normal(self, rows: int, cols: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """Float32 matrix of N(mean, std^2) draws; std=0 gives a constant fill."""
        if std < 0:
            raise ValueError(f"std must be >= 0, got {std}")
        draws = self._gen.standard_normal((rows, cols))
        return (mean + std * draws).astype(DTYPE)

    def uniform(self, rows: int, cols: int) -> np.ndarray:
        """Float64 matrix of U[0,1) draws (used for dropout masks)."""
        return self._gen.random((rows, cols))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)
