import numpy as np
import pytest

from plscore import MaskedMatrix


def as_masked(arr, mask=None, col_names=None, row_ids=None) -> MaskedMatrix:
    """Wrap a dense array (optionally with a mask) as a MaskedMatrix."""
    arr = np.asarray(arr, dtype=float)
    n, p = arr.shape
    if mask is None:
        mask = ~np.isnan(arr)
    mask = np.asarray(mask, dtype=bool)
    values = np.where(mask, arr, np.nan)
    return MaskedMatrix(
        values=values,
        mask=mask,
        col_names=tuple(col_names) if col_names else tuple(f"x{j+1}" for j in range(p)),
        row_ids=tuple(row_ids) if row_ids else tuple(str(i + 1) for i in range(n)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
