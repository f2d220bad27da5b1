"""Input coercion helpers for the estimator facade."""

import numpy as np

from .data import Interaction, RawInteractionLog


def as_interaction_log(X) -> RawInteractionLog:
    """Coerce interaction records into a raw log.

    Accepts a RawInteractionLog (returned as-is), or any sequence / 2-D array
    of (user, item[, weight[, timestamp]]) rows. User and item entries are
    treated as opaque tokens, so integer ids and string ids both work.
    """
    if isinstance(X, RawInteractionLog):
        return X
    if isinstance(X, np.ndarray):
        if X.ndim != 2 or X.shape[1] < 2:
            raise ValueError(f"expected an (n, 2+) array, got shape {X.shape}")
        rows = X.tolist()
    else:
        rows = list(X)
    records = []
    for pos, row in enumerate(rows):
        if isinstance(row, Interaction):
            records.append(row)
            continue
        parts = tuple(row)
        if len(parts) < 2:
            raise ValueError(f"record {pos}: need at least (user, item), got {row!r}")
        weight = float(parts[2]) if len(parts) > 2 and parts[2] is not None else None
        timestamp = int(parts[3]) if len(parts) > 3 and parts[3] is not None else None
        records.append(Interaction(_token(parts[0]), _token(parts[1]), weight, timestamp))
    if not records:
        raise ValueError("no interaction records supplied")
    return RawInteractionLog(records)


def _token(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, float)) and not float(value).is_integer():
        raise ValueError(f"id {value!r} is not a usable token")
    if isinstance(value, (int, np.integer)) or (
        isinstance(value, float) and value.is_integer()
    ):
        return str(int(value))
    return str(value)


def check_in(name: str, value, allowed) -> None:
    if value not in allowed:
        raise ValueError(f"{name} must be one of {tuple(allowed)}, got {value!r}")
