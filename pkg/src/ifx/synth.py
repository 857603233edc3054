"""Seeded synthetic TSER data where the target is the standard deviation of
the first difference of one dimension, plus Gaussian noise."""

import numpy as np

from .dataset import Series, TimeSeriesDataset
from .transforms import Channel

__all__ = ["make_synthetic", "make_split"]


def _channel(rng, kind, m, scale):
    t = np.arange(m, dtype=float)
    if kind == 0:
        # random walk whose step size carries the signal
        x = np.cumsum(scale * rng.standard_normal(m)) + rng.normal(0, 5)
    else:
        freq = rng.uniform(0.02, 0.2)
        x = rng.uniform(0.5, 3.0) * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
        x = x + scale * rng.standard_normal(m)
    return Channel(t, x)


def make_synthetic(n=200, dims=2, length=64, seed=0, noise=0.05, signal_dim=1,
                   informative=True, name="Synthetic"):
    """Dataset of ``n`` series with ``dims`` dimensions of ``length`` points.

    With ``informative`` the target is ``StdDev(D(dim signal_dim))`` plus
    ``noise``-scaled Gaussian noise; otherwise targets are drawn from the same
    marginal distribution independently of the series.
    """
    if not 1 <= signal_dim <= dims:
        raise ValueError("signal_dim must be within 1..dims")
    rng = np.random.default_rng(seed)
    series, targets = [], []
    for i in range(n):
        chans = []
        for k in range(dims):
            scale = rng.uniform(0.5, 2.0)
            kind = 0 if k == signal_dim - 1 else k % 2
            chans.append(_channel(rng, kind, length, scale))
        sd = float(np.std(np.diff(chans[signal_dim - 1].value)))
        if informative:
            y = sd + noise * rng.standard_normal()
        else:
            y = rng.uniform(0.5, 2.0) + noise * rng.standard_normal()
        series.append(Series(i, tuple(chans)))
        targets.append(y)
    return TimeSeriesDataset(name, series, targets, dims)


def make_split(n_train=200, n_test=100, **kwargs):
    """Train and test datasets drawn from one synthetic sample."""
    ds = make_synthetic(n=n_train + n_test, **kwargs)
    train = ds.subset(range(n_train))
    test = ds.subset(range(n_train, n_train + n_test))
    return train, test
