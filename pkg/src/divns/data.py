"""Loading, filtering, indexing and splitting of implicit-feedback logs.

Pipeline: read a delimited event log, optionally apply an iterative k-core
filter, collapse repeated events into binary (user, item) positives with
dense indices, then split each user's positives into train/validation/test.
Everything downstream consumes the indexed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .seeding import SPLIT, stream


class Interaction(NamedTuple):
    user: str
    item: str
    weight: float | None = None
    timestamp: int | None = None


@dataclass
class RawInteractionLog:
    """Ordered list of raw interaction events; duplicates allowed."""

    records: list[Interaction]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Interaction]:
        return iter(self.records)


class EmptyResultError(ValueError):
    """A load or filter step produced an empty interaction set."""


class MalformedLineError(ValueError):
    """An input line could not be parsed; the message names the line."""


_DELIMITERS = {"tsv": "\t", "csv": ",", "space": None}


def resolve_delimiter(fmt: str) -> str | None:
    """Map a format name (tsv/csv/space) to a delimiter.

    Anything else is taken as a literal delimiter string, e.g. "::".
    """
    return _DELIMITERS.get(fmt, fmt)


def load_interactions(path: str, delimiter: str | None = "\t") -> RawInteractionLog:
    """Read a delimited interaction log.

    Each data line holds ``user<delim>item[<delim>weight[<delim>timestamp]]``.
    Empty lines and lines starting with ``#`` are skipped. ``delimiter=None``
    splits on any whitespace. Weight and timestamp columns are optional.

    A file with no data lines yields an empty log; downstream indexing is
    where emptiness becomes an error.

    Raises
    ------
    MalformedLineError
        If a line has fewer than two fields or a weight/timestamp fails to
        parse; the message names the 1-based line number.
    """
    records: list[Interaction] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(delimiter) if delimiter is not None else line.split()
            if len(parts) < 2:
                raise MalformedLineError(
                    f"line {lineno}: expected at least 2 fields, got {len(parts)}"
                )
            user, item = parts[0].strip(), parts[1].strip()
            if not user or not item:
                raise MalformedLineError(f"line {lineno}: empty user or item token")
            weight: float | None = None
            stamp: int | None = None
            if len(parts) > 2 and parts[2].strip():
                try:
                    weight = float(parts[2])
                except ValueError as exc:
                    raise MalformedLineError(
                        f"line {lineno}: bad weight field {parts[2]!r}"
                    ) from exc
            if len(parts) > 3 and parts[3].strip():
                try:
                    stamp = int(parts[3])
                except ValueError as exc:
                    raise MalformedLineError(
                        f"line {lineno}: bad timestamp field {parts[3]!r}"
                    ) from exc
            records.append(Interaction(user, item, weight, stamp))
    return RawInteractionLog(records)


def k_core_filter(log: RawInteractionLog, k: int = 5) -> RawInteractionLog:
    """Iteratively drop users and items with fewer than ``k`` distinct partners.

    Duplicate (user, item) pairs are collapsed first (first occurrence kept),
    so counts mean distinct items per user and distinct users per item.
    Removal cascades until a fixed point: dropping a user can push an item
    below threshold and vice versa. Record order is preserved.

    Raises
    ------
    EmptyResultError
        If nothing survives the filter.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    seen: set[tuple[str, str]] = set()
    deduped: list[Interaction] = []
    for rec in log:
        key = (rec.user, rec.item)
        if key in seen:
            continue
        seen.add(key)
        deduped.append(rec)

    user_items: dict[str, set[str]] = {}
    item_users: dict[str, set[str]] = {}
    for rec in deduped:
        user_items.setdefault(rec.user, set()).add(rec.item)
        item_users.setdefault(rec.item, set()).add(rec.user)

    changed = True
    while changed:
        changed = False
        bad_users = [u for u, its in user_items.items() if len(its) < k]
        for u in bad_users:
            changed = True
            for i in user_items.pop(u):
                holders = item_users[i]
                holders.discard(u)
                if not holders:
                    del item_users[i]
        bad_items = [i for i, us in item_users.items() if len(us) < k]
        for i in bad_items:
            changed = True
            for u in item_users.pop(i):
                owned = user_items[u]
                owned.discard(i)
                if not owned:
                    del user_items[u]

    survivors = [
        rec
        for rec in deduped
        if rec.user in user_items and rec.item in user_items[rec.user]
    ]
    if not survivors:
        raise EmptyResultError(f"{k}-core filter removed every interaction")
    return RawInteractionLog(survivors)


@dataclass
class ImplicitDataset:
    """Binarized, densely indexed interaction data.

    positives[u] is the sorted array of item indices user u interacted with.
    popularity[i] counts distinct users per item. Index order follows first
    appearance in the source log.
    """

    num_users: int
    num_items: int
    positives: list[np.ndarray]
    user_tokens: list[str]
    item_tokens: list[str]
    user_index: dict[str, int]
    item_index: dict[str, int]
    popularity: np.ndarray

    @property
    def num_interactions(self) -> int:
        return int(sum(p.size for p in self.positives))


def binarize_and_index(log: RawInteractionLog) -> ImplicitDataset:
    """Collapse repeated events into binary positives with dense indices.

    Weights and timestamps are discarded; any interaction counts as positive.
    Users and items are numbered in order of first appearance, which makes the
    mapping reproducible for a fixed log.
    """
    if len(log) == 0:
        raise EmptyResultError("cannot index an empty log")
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    per_user: list[set[int]] = []
    for rec in log:
        u = user_index.setdefault(rec.user, len(user_index))
        if u == len(per_user):
            per_user.append(set())
        i = item_index.setdefault(rec.item, len(item_index))
        per_user[u].add(i)

    positives = [np.array(sorted(s), dtype=np.int64) for s in per_user]
    popularity = np.zeros(len(item_index), dtype=np.int64)
    for s in per_user:
        popularity[list(s)] += 1
    return ImplicitDataset(
        num_users=len(user_index),
        num_items=len(item_index),
        positives=positives,
        user_tokens=list(user_index),
        item_tokens=list(item_index),
        user_index=user_index,
        item_index=item_index,
        popularity=popularity,
    )


@dataclass
class DataSplit:
    """Per-user disjoint train/validation/test item arrays (sorted)."""

    train: list[np.ndarray]
    validation: list[np.ndarray]
    test: list[np.ndarray]
    ratios: tuple[float, float, float]
    seed: int

    def part(self, name: str) -> list[np.ndarray]:
        if name not in ("train", "validation", "test"):
            raise ValueError(f"unknown split part {name!r}")
        return getattr(self, name)


def _split_sizes(n: int, ratios: tuple[float, float, float]) -> list[int]:
    # floor each ratio (guarding float representation: 0.7*10 is 6.999...),
    # hand leftovers to train, then validation, then test, then bump the
    # holdout parts to at least one item each out of train
    base = [int(np.floor(f * n + 1e-9)) for f in ratios]
    for idx in range(n - sum(base)):
        base[idx] += 1
    if base[1] == 0:
        base[1] += 1
        base[0] -= 1
    if base[2] == 0:
        base[2] += 1
        base[0] -= 1
    return base


def split(
    dataset: ImplicitDataset,
    seed: int = 0,
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
) -> DataSplit:
    """Split each user's positives into train/validation/test.

    Sizes come from flooring each ratio with leftovers assigned to train,
    validation, test in that order; validation and test are then guaranteed at
    least one item each. Assignment permutes the user's items with a stream
    keyed by (seed, user), so the split is reproducible and independent of
    any other user.

    Raises
    ------
    ValueError
        If some user has fewer than 3 positives (cannot populate all parts).
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    train: list[np.ndarray] = []
    validation: list[np.ndarray] = []
    test: list[np.ndarray] = []
    for u, items in enumerate(dataset.positives):
        n = items.size
        if n < 3:
            raise ValueError(
                f"user {dataset.user_tokens[u]!r} has {n} positives; "
                "need at least 3 to fill train/validation/test"
            )
        a, b, _ = _split_sizes(n, ratios)
        perm = stream(seed, SPLIT, u).permutation(items)
        train.append(np.sort(perm[:a]))
        validation.append(np.sort(perm[a : a + b]))
        test.append(np.sort(perm[a + b :]))
    return DataSplit(train, validation, test, ratios, seed)


SNAPSHOT_MAGIC = "# implicit-dataset-snapshot v1"


def save_snapshot(path: str, dataset: ImplicitDataset, data_split: DataSplit) -> None:
    """Write dataset + split as delimited text (one row per interaction).

    The file is fully deterministic for a given dataset/split, so its checksum
    can serve as a data fingerprint in run manifests.
    """
    tag_of: list[tuple[str, list[np.ndarray]]] = [
        ("train", data_split.train),
        ("validation", data_split.validation),
        ("test", data_split.test),
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SNAPSHOT_MAGIC + "\n")
        r = data_split.ratios
        fh.write(f"# seed={data_split.seed} ratios={r[0]:.10g},{r[1]:.10g},{r[2]:.10g}\n")
        fh.write("user_token\titem_token\tuser_index\titem_index\tsplit\n")
        for u in range(dataset.num_users):
            utok = dataset.user_tokens[u]
            for tag, part in tag_of:
                for i in part[u]:
                    fh.write(f"{utok}\t{dataset.item_tokens[i]}\t{u}\t{i}\t{tag}\n")


def load_snapshot(path: str) -> tuple[ImplicitDataset, DataSplit]:
    """Read a snapshot written by :func:`save_snapshot`."""
    seed = 0
    ratios = (0.7, 0.1, 0.2)
    rows: list[tuple[str, str, int, int, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != SNAPSHOT_MAGIC:
            raise MalformedLineError(
                f"{path} is not a dataset snapshot (bad magic line {first!r})"
            )
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                for field in line[1:].split():
                    if field.startswith("seed="):
                        seed = int(field[5:])
                    elif field.startswith("ratios="):
                        vals = tuple(float(x) for x in field[7:].split(","))
                        if len(vals) == 3:
                            ratios = vals  # type: ignore[assignment]
                continue
            if line.startswith("user_token\t"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise MalformedLineError(f"line {lineno}: expected 5 fields")
            rows.append((parts[0], parts[1], int(parts[2]), int(parts[3]), parts[4]))
    if not rows:
        raise EmptyResultError(f"snapshot {path} holds no interactions")

    num_users = max(r[2] for r in rows) + 1
    num_items = max(r[3] for r in rows) + 1
    user_tokens = [""] * num_users
    item_tokens = [""] * num_items
    parts_by_tag: dict[str, list[list[int]]] = {
        tag: [[] for _ in range(num_users)] for tag in ("train", "validation", "test")
    }
    for utok, itok, u, i, tag in rows:
        if tag not in parts_by_tag:
            raise MalformedLineError(f"unknown split tag {tag!r} in {path}")
        user_tokens[u] = utok
        item_tokens[i] = itok
        parts_by_tag[tag][u].append(i)

    positives = []
    popularity = np.zeros(num_items, dtype=np.int64)
    for u in range(num_users):
        items = np.array(
            sorted(
                parts_by_tag["train"][u]
                + parts_by_tag["validation"][u]
                + parts_by_tag["test"][u]
            ),
            dtype=np.int64,
        )
        positives.append(items)
        popularity[items] += 1

    dataset = ImplicitDataset(
        num_users=num_users,
        num_items=num_items,
        positives=positives,
        user_tokens=user_tokens,
        item_tokens=item_tokens,
        user_index={t: u for u, t in enumerate(user_tokens)},
        item_index={t: i for i, t in enumerate(item_tokens)},
        popularity=popularity,
    )
    data_split = DataSplit(
        train=[np.array(sorted(parts_by_tag["train"][u]), dtype=np.int64) for u in range(num_users)],
        validation=[np.array(sorted(parts_by_tag["validation"][u]), dtype=np.int64) for u in range(num_users)],
        test=[np.array(sorted(parts_by_tag["test"][u]), dtype=np.int64) for u in range(num_users)],
        ratios=ratios,
        seed=seed,
    )
    return dataset, data_split
