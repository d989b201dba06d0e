"""Rating-triplet ingestion, empirical marginals and random splits.

File format: one ``user_id,item_id,rating[,timestamp]`` record per line,
comma or tab separated (detected from the first line), optional header.
Timestamps are ignored.  External ids are mapped to dense 0-based indices.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError
from .norms import Marginals
from .synth import ObservationSet


@dataclass(frozen=True)
class Schema:
    """How to read a triplet file.

    ``ids="map"`` densifies external ids (numeric ids in numeric order,
    otherwise first-appearance order).  ``ids="index"`` takes ids as 0-based
    indices already, and ``n``/``m`` then fix the grid (otherwise max index + 1).
    ``header=None`` auto-detects a header from a non-numeric rating field.
    """

    ids: str = "map"
    n: int | None = None
    m: int | None = None
    delimiter: str | None = None
    header: bool | None = None


@dataclass(frozen=True, eq=False)
class RatingsDataset:
    observations: ObservationSet
    user_ids: list = field(default_factory=list)
    item_ids: list = field(default_factory=list)

    @property
    def n_users(self):
        return self.observations.n

    @property
    def m_items(self):
        return self.observations.m

    @property
    def user_counts(self):
        return self.observations.row_counts()

    @property
    def item_counts(self):
        return self.observations.col_counts()


@dataclass(frozen=True, eq=False)
class Split:
    train: ObservationSet
    validation: ObservationSet
    test: ObservationSet


def _sniff_delimiter(line):
    return "\t" if "\t" in line else ","


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def _densify(raw):
    uniq = list(dict.fromkeys(raw))
    if all(_is_number(u) for u in uniq):
        uniq.sort(key=float)
    index = {u: i for i, u in enumerate(uniq)}
    return np.fromiter((index[u] for u in raw), dtype=np.int64, count=len(raw)), uniq


def load_triplets(path, schema: Schema | None = None) -> RatingsDataset:
    """Read a triplet file into a :class:`RatingsDataset`.

    Duplicate ``(user, item)`` pairs are kept as repeated observations.
    """
    schema = schema or Schema()
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.strip():
            raise InvalidInputError(f"{path}: no observations")
        delim = schema.delimiter or _sniff_delimiter(first)
        fh.seek(0)
        users, items, ratings = [], [], []
        for lineno, rec in enumerate(csv.reader(fh, delimiter=delim), start=1):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) not in (3, 4):
                raise ParseError(f"expected 3 or 4 fields, got {len(rec)}", lineno)
            u, it, r = (f.strip() for f in rec[:3])
            if lineno == 1 and schema.header is not False and not _is_number(r):
                continue
            try:
                val = float(r)
            except ValueError:
                raise ParseError(f"rating {r!r} is not a number", lineno) from None
            if not np.isfinite(val):
                raise ParseError(f"rating {r!r} is not finite", lineno)
            if not u or not it:
                raise ParseError("empty id field", lineno)
            users.append(u)
            items.append(it)
            ratings.append(val)
    if not ratings:
        raise InvalidInputError(f"{path}: no observations")
    if schema.ids == "index":
        try:
            rows = np.array([int(u) for u in users], dtype=np.int64)
            cols = np.array([int(i) for i in items], dtype=np.int64)
        except ValueError as exc:
            raise ParseError(f"non-integer index: {exc}") from None
        n = schema.n if schema.n is not None else int(rows.max()) + 1
        m = schema.m if schema.m is not None else int(cols.max()) + 1
        obs = ObservationSet(rows, cols, np.array(ratings), n, m)
        return RatingsDataset(obs, [str(i) for i in range(n)], [str(j) for j in range(m)])
    rows, user_ids = _densify(users)
    cols, item_ids = _densify(items)
    obs = ObservationSet(rows, cols, np.array(ratings), len(user_ids), len(item_ids))
    return RatingsDataset(obs, user_ids, item_ids)


def save_triplets(path, S: ObservationSet, user_ids=None, item_ids=None):
    """Write ``S`` as ``user_id,item_id,rating`` with a header.

    Values are written with 17 significant digits so a reload is bit-exact.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "item_id", "rating"])
        for i, j, v in zip(S.rows.tolist(), S.cols.tolist(), S.values.tolist()):
            u = user_ids[i] if user_ids is not None else i
            it = item_ids[j] if item_ids is not None else j
            w.writerow([u, it, repr(v)])


def save_id_map(path, ids):
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["external_id", "dense_index"])
        for i, ext in enumerate(ids):
            w.writerow([ext, i])


def load_id_map(path):
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return [ext for ext, _ in sorted(((r[0], int(r[1])) for r in rows[1:]), key=lambda t: t[1])]


def empirical_marginals(ds) -> Marginals:
    """``p_i = n_i / |S|`` and ``q_j = m_j / |S|`` from observation counts."""
    S = ds.observations if isinstance(ds, RatingsDataset) else ds
    if len(S) == 0:
        raise InvalidInputError("empirical marginals need at least one observation")
    total = float(len(S))
    return Marginals(S.row_counts() / total, S.col_counts() / total)


def split(ds, valid_count, test_count, seed) -> Split:
    """Random partition of the triplet positions into train/validation/test."""
    S = ds.observations if isinstance(ds, RatingsDataset) else ds
    if valid_count < 0 or test_count < 0:
        raise InvalidInputError("split sizes must be non-negative")
    if valid_count + test_count >= len(S):
        raise InvalidInputError(
            f"validation ({valid_count}) + test ({test_count}) must be < {len(S)} observations")
    perm = np.random.default_rng(seed).permutation(len(S))
    v = np.sort(perm[:valid_count])
    t = np.sort(perm[valid_count:valid_count + test_count])
    tr = np.sort(perm[valid_count + test_count:])
    return Split(S.take(tr), S.take(v), S.take(t))
