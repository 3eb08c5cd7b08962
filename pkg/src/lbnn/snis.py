"""Self-normalized importance sampling with blocked, deterministic reduction.

Estimators in this package compute weighted averages of per-sample
payloads where the weights are known only up to a constant, in log space.
Samples are partitioned into a fixed number of contiguous blocks; each
block reduces to stabilized partial sums, and blocks combine in index
order. The block layout is independent of worker count, so results are
bit-identical however the blocks are scheduled, and the same block sums
feed a delete-one-block jackknife for standard errors of the ratio
estimates.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateWeightsError

#: Number of jackknife blocks (and parallel shards) used by the estimators.
DEFAULT_BLOCKS = 20

#: Default floor on the effective sample size of the importance weights.
DEFAULT_ESS_FLOOR = 10.0


def log_ess(log_weights: np.ndarray) -> float:
    """Log effective sample size ``2 lse(lw) - lse(2 lw)`` of raw log weights."""
    lw = np.asarray(log_weights, dtype=float)
    m = lw.max()
    return float(2.0 * _lse_shifted(lw, m) - _lse_shifted(2.0 * lw, 2.0 * m))


def ess(log_weights: np.ndarray) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2`` of raw log weights."""
    return float(np.exp(log_ess(log_weights)))


def _lse_shifted(lw: np.ndarray, shift: float) -> float:
    return shift + np.log(np.sum(np.exp(lw - shift)))


def block_ranges(num_samples: int, n_blocks: int = DEFAULT_BLOCKS) -> list:
    """Contiguous index ranges splitting ``num_samples`` into blocks.

    Block boundaries depend only on the sample count, never on worker
    count, which is what keeps sharded runs deterministic.
    """
    if num_samples < 2:
        raise ValueError("need at least two samples")
    n_blocks = min(n_blocks, num_samples)
    bounds = np.linspace(0, num_samples, n_blocks + 1).astype(int)
    return [range(bounds[i], bounds[i + 1]) for i in range(n_blocks)]


@dataclass
class BlockStats:
    """Stabilized partial sums for one block of samples.

    All sums are scaled by ``exp(-log_shift)``; ``w2`` by
    ``exp(-2 log_shift)``. ``sums[k]`` holds ``sum_s w_s * payload_k(s)``.
    """

    log_shift: float
    w: float
    w2: float
    sums: dict

    @classmethod
    def from_samples(cls, log_w: np.ndarray, payloads: dict) -> "BlockStats":
        log_w = np.asarray(log_w, dtype=float)
        shift = float(log_w.max())
        w = np.exp(log_w - shift)
        sums = {}
        for key, values in payloads.items():
            values = np.asarray(values, dtype=float)
            sums[key] = np.tensordot(w, values, axes=(0, 0))
        return cls(log_shift=shift, w=float(w.sum()), w2=float((w * w).sum()),
                   sums=sums)


class SnisResult:
    """Combined SNIS estimates with jackknife standard errors.

    Built from per-block statistics reduced in block order. ``mean(key)``
    returns the self-normalized average of that payload and
    ``jackknife(fn)`` the (estimate, standard error) of any function of
    the per-payload means, via delete-one-block resampling.
    """

    def __init__(self, blocks: list):
        if not blocks:
            raise ValueError("no blocks to combine")
        shift = max(b.log_shift for b in blocks)
        scale = np.array([np.exp(b.log_shift - shift) for b in blocks])
        self._w_b = np.array([b.w for b in blocks]) * scale
        self._w2_b = np.array([b.w2 for b in blocks]) * scale**2
        self._sums_b = {
            key: np.stack([b.sums[key] * s for b, s in zip(blocks, scale)])
            for key in blocks[0].sums
        }
        self.n_blocks = len(blocks)
        w_tot = float(self._w_b.sum())
        w2_tot = float(self._w2_b.sum())
        if w_tot <= 0 or not np.isfinite(w_tot):
            raise DegenerateWeightsError("importance weights summed to zero")
        self.ess = w_tot**2 / w2_tot

    def mean(self, key: str) -> np.ndarray:
        return self._sums_b[key].sum(axis=0) / self._w_b.sum()

    def _loo_means(self, key: str) -> np.ndarray:
        total = self._sums_b[key].sum(axis=0)
        w_tot = self._w_b.sum()
        loo_w = (w_tot - self._w_b).reshape((-1,) + (1,) * (total.ndim))
        return (total - self._sums_b[key]) / loo_w

    def jackknife(self, keys, fn=None):
        """Estimate and SE of ``fn`` applied to the means of ``keys``.

        ``fn`` maps one array per key to an array; identity when omitted
        (single key). The SE is the delete-one-block jackknife
        ``sqrt((B-1)/B * sum_b (theta_b - mean_b theta)^2)`` elementwise.
        """
        if isinstance(keys, str):
            keys = [keys]
        if fn is None:
            if len(keys) != 1:
                raise ValueError("fn is required for multi-key jackknives")
            fn = lambda x: x
        estimate = fn(*[self.mean(k) for k in keys])
        loo = [self._loo_means(k) for k in keys]
        thetas = np.stack([
            fn(*[m[b] for m in loo]) for b in range(self.n_blocks)
        ])
        center = thetas.mean(axis=0)
        b = float(self.n_blocks)
        se = np.sqrt((b - 1.0) / b * np.sum((thetas - center) ** 2, axis=0))
        return estimate, se

    def check_ess(self, floor: float = DEFAULT_ESS_FLOOR) -> None:
        if self.ess < floor:
            raise DegenerateWeightsError(
                f"effective sample size {self.ess:.2f} fell below the floor "
                f"{floor:g}; increase the sample count or use the "
                "zero-temperature path"
            )


def map_blocks(fn, blocks: list, workers: int = 1) -> list:
    """Apply ``fn`` to each block, in parallel, preserving block order."""
    if workers <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=min(workers, len(blocks))) as pool:
        return list(pool.map(fn, blocks))


def snis_reduce(sample_block, num_samples: int, *, workers: int = 1,
                n_blocks: int = DEFAULT_BLOCKS) -> SnisResult:
    """Run ``sample_block(range) -> (log_w, payload dict)`` over all blocks.

    Blocks are evaluated possibly in parallel but always combined in
    block order, so the result is independent of ``workers``.
    """
    ranges = block_ranges(num_samples, n_blocks)

    def one(block: range) -> BlockStats:
        log_w, payloads = sample_block(block)
        return BlockStats.from_samples(log_w, payloads)

    return SnisResult(map_blocks(one, ranges, workers=workers))
