"""Small statistical helpers shared by tests and experiments."""
import numpy as np
from scipy import stats


def pooled_table(samples, min_expected=5.0):
    """Contingency table of categorical samples with rare categories pooled.

    samples is a list of sequences of hashable categories.  Categories are
    sorted by total count; those whose expected count falls below min_expected
    in some sample are merged into one cell.
    """
    keys = {}
    for s in samples:
        for x in s:
            keys[x] = keys.get(x, 0) + 1
    order = sorted(keys, key=lambda k: (-keys[k], repr(k)))
    index = {k: i for i, k in enumerate(order)}
    table = np.zeros((len(samples), len(order)))
    for r, s in enumerate(samples):
        for x in s:
            table[r, index[x]] += 1
    sizes = table.sum(1)
    frac = table.sum(0) / sizes.sum()
    small = (frac[None, :] * sizes[:, None]).min(0) < min_expected
    if small.any():
        table = np.concatenate([table[:, ~small], table[:, small].sum(1, keepdims=True)], axis=1)
        if table[:, -1].sum() == 0:
            table = table[:, :-1]
    return table


def two_sample_chi2(samples, min_expected=5.0):
    """(statistic, dof, p-value) of homogeneity across samples of categories."""
    table = pooled_table(samples, min_expected)
    if table.shape[1] < 2:
        return 0.0, 0, 1.0
    chi, p, dof, _ = stats.chi2_contingency(table, correction=False)
    return float(chi), int(dof), float(p)


def mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


def ks_2samp(a, b):
    r = stats.ks_2samp(a, b)
    return float(r.statistic), float(r.pvalue)
