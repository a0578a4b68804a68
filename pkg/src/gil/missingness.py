"""Mask generators (MCAR, image MAR, self-censoring MNAR) and missing rates.

Every generator returns a new dataset whose previously observed values are
untouched except where they become missing; the complete values are kept in
``truth`` so imputation error can be scored later.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import sigmoid

MECHANISMS = ("none", "mcar", "mar_image", "mnar_threshold")


@dataclass(frozen=True)
class MaskSpec:
    mechanism: str = "mcar"
    rate: float = 0.0
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("rate must lie in [0, 1)")


def _truth_of(ds):
    if ds.truth is not None:
        return ds.truth
    return ds.sequences if ds.is_sequence else ds.values


def _apply_drop(ds, drop):
    """Mark entries where ``drop`` is True as missing (NaN)."""
    if ds.is_sequence:
        seqs = [np.where(dr, np.nan, s) for s, dr in zip(ds.sequences, drop)]
        truth = _truth_of(ds)
        return ds.with_values(seqs, truth=[t.copy() for t in truth])
    return ds.with_values(np.where(drop, np.nan, ds.values), truth=_truth_of(ds).copy())


def apply_mcar(ds, rate, seed):
    """Each entry independently missing with probability ``rate``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    if ds.is_sequence:
        drop = [rng.random(s.shape) < rate for s in ds.sequences]
    else:
        drop = rng.random(ds.values.shape) < rate
    return _apply_drop(ds, drop)


def mar_image_probs(values, observable_rows, steepness, side=28):
    """Per-sample missing probability for pixels below the observable rows."""
    top = values[:, : observable_rows * side]
    observed = ~np.isnan(top)
    counts = observed.sum(axis=1)
    sums = np.where(observed, top, 0.0).sum(axis=1)
    # a fully missing top band counts as blank
    top_mean = np.divide(sums, counts, out=np.zeros(len(top)), where=counts > 0)
    return sigmoid(steepness * (top_mean - 0.5))


def apply_mar_image(ds, observable_rows=14, steepness=4.0, seed=0, side=28):
    """Top rows always observed; lower pixels dropped with a probability
    driven by the mean intensity of the observed top rows."""
    if ds.d != side * side:
        raise ValueError(f"MAR image masking needs d = {side * side}, got {ds.d}")
    if not 1 <= observable_rows < side:
        raise ValueError("observable_rows must lie in [1, side)")
    rng = np.random.default_rng(seed)
    p = mar_image_probs(ds.values, observable_rows, steepness, side)
    drop = rng.random(ds.values.shape) < p[:, None]
    drop[:, : observable_rows * side] = False
    return _apply_drop(ds, drop)


def apply_mnar_threshold(ds, q, seed=0):
    """Self-censoring: an entry goes missing iff it exceeds its column's q-quantile.

    The quantile is the lower order statistic, so a column of n distinct values
    loses exactly n - ceil(q * n) entries.  ``seed`` is accepted for a uniform
    signature; the mechanism is deterministic.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    values = ds.values
    thresholds = np.nanquantile(values, q, axis=0, method="inverted_cdf")
    with np.errstate(invalid="ignore"):
        drop = values > thresholds[None, :]
    return _apply_drop(ds, drop)


def apply_mask(ds, spec):
    if spec.mechanism == "none":
        return ds
    if spec.mechanism == "mcar":
        return apply_mcar(ds, spec.rate, spec.seed)
    if spec.mechanism == "mar_image":
        return apply_mar_image(
            ds,
            int(spec.params.get("observable_rows", 14)),
            float(spec.params.get("steepness", 4.0)),
            spec.seed,
        )
    return apply_mnar_threshold(ds, float(spec.params.get("q", 0.5)), spec.seed)


def missing_rate(ds):
    if ds.is_sequence:
        masks = np.concatenate(ds.mask)
    else:
        masks = ds.mask
    return float(1.0 - masks.mean()) if masks.size else 0.0
