"""Key-value datastore over decoder hidden states with exact and
inverted-file approximate nearest-neighbor search.

Keys are the hidden states produced while teacher-forcing reference
translations; each key maps to the target token that followed it plus the
talk id of the originating pair, so retrieval can exclude a held-out talk
at query time. Keys are stored float32 and distances are computed in
float32 as well: queries quantize the same way keys did, so a query equal
to a stored key has distance exactly 0 and duplicate keys tie exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import BOS_ID, EOS_ID, ParallelCorpus
from .refmodel import StepModel

DATASTORE_MAGIC = b"KNND"
IVF_MAGIC = b"KNNI"
FORMAT_VERSION = 1


class Neighbor(NamedTuple):
    index: int
    distance: float  # squared L2
    value: int  # target token id
    talk_id: int


@dataclass
class IvfIndex:
    """Flat inverted-file index: k-means centroids plus one posting list of
    datastore row indices per cluster."""

    centroids: np.ndarray  # (C, dim) float32
    lists: list[np.ndarray]  # int64 row indices, one array per cluster
    nprobe: int = 1

    def __post_init__(self) -> None:
        if self.nprobe < 1 or self.nprobe > len(self.lists):
            raise ValueError(
                f"nprobe must be in [1, {len(self.lists)}], got {self.nprobe}"
            )
        counts = sum(len(lst) for lst in self.lists)
        all_idx = np.concatenate([lst for lst in self.lists]) if counts else np.array([], dtype=np.int64)
        if counts and (np.sort(all_idx) != np.arange(counts)).any():
            raise ValueError("posting lists must partition the datastore rows")

    @property
    def n_clusters(self) -> int:
        return len(self.lists)


@dataclass
class Datastore:
    dim: int
    keys: np.ndarray  # (N, dim) float32
    values: np.ndarray  # (N,) uint32
    talk_ids: np.ndarray  # (N,) uint32
    index: IvfIndex | None = None

    def __post_init__(self) -> None:
        if self.keys.shape != (len(self.values), self.dim):
            raise ValueError("keys shape does not match value count and dim")
        if self.talk_ids.shape != self.values.shape:
            raise ValueError("talk_ids and values must align")

    def __len__(self) -> int:
        return len(self.values)

    def search(
        self, query: np.ndarray, k: int, exclude_talk: int | None = None
    ) -> list[Neighbor]:
        """Exact search, or IVF when an index is attached."""
        if self.index is not None:
            return query_ivf(self, query, k, exclude_talk)
        return query_exact(self, query, k, exclude_talk)

    def search_batch(
        self, queries: np.ndarray, k: int, exclude_talk: int | None = None
    ) -> list[list[Neighbor]]:
        """One neighbor list per query row; each list equals what search
        would return for that row alone. The exact path shares one matrix
        product across the batch, which is what makes beam decoding with
        retrieval cheap."""
        if self.index is not None:
            return [query_ivf(self, q, k, exclude_talk) for q in queries]
        return query_exact_batch(self, queries, k, exclude_talk)

    def search_batch_rows(
        self, queries: np.ndarray, k: int, exclude_talk: int | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """search_batch without the Neighbor wrapping: (row indices,
        distances) as two (B, take) arrays. Exact stores only; with an IVF
        index attached the per-query scan sets differ, so there is no
        rectangular form."""
        if self.index is not None:
            raise ValueError("search_batch_rows requires a store without an IVF index")
        return query_exact_batch_rows(self, queries, k, exclude_talk)


def build(model: StepModel, bitext: ParallelCorpus) -> Datastore:
    """Teacher-force each pair's reference target and record one
    (hidden state, next target token, talk id) entry per step, EOS included.
    Entry order follows corpus order."""
    dim = model.hidden_dim()
    keys: list[np.ndarray] = []
    values: list[int] = []
    talks: list[int] = []
    for pair in bitext.pairs:
        context = model.encode(pair.source)
        state = model.initial_state()
        prev = BOS_ID
        for tgt in list(pair.target.token_ids) + [EOS_ID]:
            hidden, _, state = model.step(context, state, prev)
            keys.append(hidden.astype(np.float32))
            values.append(tgt)
            talks.append(pair.talk_id)
            prev = tgt
    n = len(values)
    key_arr = (
        np.stack(keys) if n else np.zeros((0, dim), dtype=np.float32)
    )
    return Datastore(
        dim=dim,
        keys=key_arr,
        values=np.asarray(values, dtype=np.uint32),
        talk_ids=np.asarray(talks, dtype=np.uint32),
    )


def _check_query(ds: Datastore, query: np.ndarray, k: int) -> np.ndarray:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = np.asarray(query, dtype=np.float32)
    if q.shape != (ds.dim,):
        raise ValueError(f"query shape {q.shape}, want ({ds.dim},)")
    return q


def _select(
    d2: np.ndarray, rows: np.ndarray, take: int, ds: Datastore
) -> list[Neighbor]:
    """Smallest `take` by distance, ties broken by datastore row index.
    Excluded entries must already carry distance +inf and be subtracted
    from `take`."""
    if take <= 0:
        return []
    if take < len(d2):
        part = np.argpartition(d2, take - 1)[:take]
        kth = d2[part].max()
        cand = np.flatnonzero(d2 <= kth)
    else:
        cand = np.arange(len(d2))
    order = np.lexsort((rows[cand], d2[cand]))
    picked = cand[order[:take]]
    rows_p = rows[picked]
    return [
        Neighbor(r, d, v, t)
        for r, d, v, t in zip(
            rows_p.tolist(),
            d2[picked].tolist(),
            ds.values[rows_p].tolist(),
            ds.talk_ids[rows_p].tolist(),
        )
    ]


# Margin covering float32 rounding between the expansion-based ranking
# estimates and the difference-based distances they stand in for, as a
# multiple of (max key norm + query norm)^2. The rounding analysis gives
# ~1.6e-5 at 64 dims; the slack is several times that, and admitting too
# many candidates only costs time.
_EXPANSION_SLACK = 1e-4


def _norm_cache(ds: Datastore) -> np.ndarray:
    sq = getattr(ds, "_sq_norms", None)
    if sq is None or len(sq) != len(ds):
        sq = np.einsum("ij,ij->i", ds.keys, ds.keys)
        ds._sq_norms = sq
        ds._max_norm = float(np.sqrt(sq.max())) if len(sq) else 0.0
        # pre-scaled contiguous transpose: one product plus one add gives
        # the ranking estimates, and doubling is exact in float32
        ds._keys_T2 = np.ascontiguousarray((ds.keys * -2.0).T)
    return sq


def _exclusion(ds: Datastore, exclude_talk: int | None) -> tuple[np.ndarray | None, int]:
    if exclude_talk is None:
        return None, len(ds)
    excluded = ds.talk_ids == exclude_talk
    return excluded, len(ds) - int(excluded.sum())


def _topk_rows(
    ds: Datastore, qi: np.ndarray, ri: np.ndarray, d2: np.ndarray, n_queries: int, take: int
) -> tuple[np.ndarray, np.ndarray]:
    """Rectangular top-`take` per query from flat (query, row, distance)
    candidate triples, distance ascending with row index breaking ties.
    Every query must contribute at least `take` candidates."""
    counts = np.bincount(qi, minlength=n_queries)
    width = int(counts.max())
    if (counts == width).all():
        pd = d2.reshape(n_queries, width)
        pr = ri.reshape(n_queries, width)
    else:
        starts = np.concatenate(([0], np.cumsum(counts[:-1])))
        pos = np.arange(len(qi)) - np.repeat(starts, counts)
        pd = np.full((n_queries, width), np.inf, dtype=d2.dtype)
        pr = np.zeros_like(pd, dtype=np.int64)
        pd[qi, pos] = d2
        pr[qi, pos] = ri
    # candidates arrive row-ascending per query, so a stable sort on
    # distance alone reproduces the (distance, row) tie order
    order = np.argsort(pd, axis=1, kind="stable")[:, :take]
    each = np.arange(n_queries)[:, None]
    return pr[each, order], pd[each, order]


# Fixed extra candidate slots for the first refinement attempt; more only
# cost time, fewer just mean falling back to the ragged pass more often.
_REFINE_EXTRA = 8


def _refine_batch(
    ds: Datastore,
    Q: np.ndarray,
    d2a: np.ndarray,
    take: int,
    qq: np.ndarray,
    has_excluded: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-query top-`take` given ranking estimates `d2a` of shape
    (B, N) with +inf on excluded columns. The estimates omit the query's
    own squared norm, a per-query shift that cannot change ordering.
    Candidates within the rounding margin of each query's take-th smallest
    estimate are re-scored with true float32 differences, so each result
    matches a naive full scan bit for bit, ties included. The first
    attempt uses a uniform candidate slab of take + extra rows, valid
    whenever everything inside the margin fits; ragged margin sets take
    the general path."""
    n_queries, n = d2a.shape
    if take <= 0 or n_queries == 0:
        empty = max(take, 0)
        return (
            np.zeros((n_queries, empty), dtype=np.int64),
            np.zeros((n_queries, empty), dtype=np.float32),
        )
    margins = _EXPANSION_SLACK * (ds._max_norm + np.sqrt(qq.astype(np.float64))) ** 2
    kext = take + _REFINE_EXTRA
    if kext < n:
        each = np.arange(n_queries)[:, None]
        part = np.argpartition(d2a, kext - 1, axis=1)[:, :kext]
        est = d2a[each, part]
        kth = np.partition(est, take - 1, axis=1)[:, take - 1]
        # sound when every estimate outside the slab clears the margin
        if (est.max(axis=1) > kth + margins).all():
            part.sort(axis=1)  # restores row order for exact tie breaks
            diff = (ds.keys[part] - Q[:, None, :]).reshape(-1, ds.dim)
            d2 = np.einsum("ij,ij->i", diff, diff).reshape(n_queries, kext)
            if has_excluded:
                d2[np.isinf(d2a[each, part])] = np.inf  # stay out
            order = np.argsort(d2, axis=1, kind="stable")[:, :take]
            return part[each, order], d2[each, order]
    if take < n:
        kth = np.partition(d2a, take - 1, axis=1)[:, take - 1]
        mask = d2a <= (kth + margins)[:, None]
    else:
        mask = np.isfinite(d2a)
    qi, ri = np.nonzero(mask)  # row-major: grouped by query, rows ascending
    diff = ds.keys[ri] - Q[qi]
    d2 = np.einsum("ij,ij->i", diff, diff)
    return _topk_rows(ds, qi, ri, d2, n_queries, take)


def _wrap_neighbors(
    ds: Datastore, rows: np.ndarray, dists: np.ndarray
) -> list[list[Neighbor]]:
    vals = ds.values[rows]
    talks = ds.talk_ids[rows]
    return [
        [
            Neighbor(r, d, v, t)
            for r, d, v, t in zip(rw.tolist(), dw.tolist(), vw.tolist(), tw.tolist())
        ]
        for rw, dw, vw, tw in zip(rows, dists, vals, talks)
    ]


def query_exact(
    ds: Datastore, query: np.ndarray, k: int, exclude_talk: int | None = None
) -> list[Neighbor]:
    """k nearest entries by squared L2, ascending, row index breaking ties.
    Entries from `exclude_talk` are never returned; fewer than k eligible
    entries return all of them."""
    q = _check_query(ds, query, k)
    if len(ds) == 0:
        return []
    return query_exact_batch(ds, q[None, :], k, exclude_talk)[0]


def query_exact_batch(
    ds: Datastore, queries: np.ndarray, k: int, exclude_talk: int | None = None
) -> list[list[Neighbor]]:
    """query_exact for a whole (B, dim) query matrix at once; per-row
    results are identical to the single-query form."""
    rows, dists = query_exact_batch_rows(ds, queries, k, exclude_talk)
    return _wrap_neighbors(ds, rows, dists)


def query_exact_batch_rows(
    ds: Datastore, queries: np.ndarray, k: int, exclude_talk: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Bulk exact search returning (row indices, distances) as two
    (B, take) arrays, take = min(k, eligible rows), each row ordered like
    query_exact. Ranking estimates come from one norm-expansion matrix
    product over the keys; reported distances are always recomputed from
    the actual float32 differences."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    Q = np.asarray(queries, dtype=np.float32)
    if Q.ndim != 2 or Q.shape[1] != ds.dim:
        raise ValueError(f"query matrix shape {Q.shape}, want (B, {ds.dim})")
    excluded, eligible = _exclusion(ds, exclude_talk)
    take = min(k, eligible)
    if len(ds) == 0 or len(Q) == 0 or take <= 0:
        width = max(take, 0) if len(ds) else 0
        return (
            np.zeros((len(Q), width), dtype=np.int64),
            np.zeros((len(Q), width), dtype=np.float32),
        )
    sq_norms = _norm_cache(ds)
    d2a = Q @ ds._keys_T2  # (B, N), the one pass over the keys
    d2a += sq_norms[None, :]
    qq = np.einsum("ij,ij->i", Q, Q)
    if excluded is not None:
        d2a[:, excluded] = np.inf
    return _refine_batch(ds, Q, d2a, take, qq, excluded is not None)


def train_ivf(
    ds: Datastore,
    n_clusters: int,
    iterations: int = 25,
    seed: int = 0,
    nprobe: int = 1,
) -> IvfIndex:
    """Lloyd k-means over the keys, initialized from distinct random rows.
    A cluster that empties is reseeded on the point currently farthest from
    its centroid. Stops early once assignments stop changing."""
    n = len(ds)
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must be in [1, {n}], got {n_clusters}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    keys = ds.keys.astype(np.float64)
    rng = np.random.default_rng(seed)
    centroids = keys[rng.choice(n, size=n_clusters, replace=False)].copy()
    assign = np.full(n, -1)
    for _ in range(iterations):
        d2 = (
            (keys**2).sum(axis=1)[:, None]
            - 2.0 * keys @ centroids.T
            + (centroids**2).sum(axis=1)[None, :]
        )
        new_assign = d2.argmin(axis=1)
        if (new_assign == assign).all():
            break
        assign = new_assign
        dist_own = d2[np.arange(n), assign]
        used: set[int] = set()
        for c in range(n_clusters):
            members = assign == c
            if members.any():
                centroids[c] = keys[members].mean(axis=0)
            else:
                far = np.where(
                    np.isin(np.arange(n), list(used)), -np.inf, dist_own
                ).argmax()
                centroids[c] = keys[far]
                used.add(int(far))
    lists = [
        np.flatnonzero(assign == c).astype(np.int64) for c in range(n_clusters)
    ]
    return IvfIndex(
        centroids=centroids.astype(np.float32), lists=lists, nprobe=nprobe
    )


def query_ivf(
    ds: Datastore,
    query: np.ndarray,
    k: int,
    exclude_talk: int | None = None,
    nprobe: int | None = None,
) -> list[Neighbor]:
    """Scan only the nprobe clusters whose centroids are nearest the query;
    within that scanned set, ordering and tie rules match exact search.
    nprobe equal to the cluster count reproduces exact search results."""
    if ds.index is None:
        raise ValueError("datastore has no IVF index; call train_ivf first")
    q = _check_query(ds, query, k)
    if len(ds) == 0:
        return []
    idx = ds.index
    probes = idx.nprobe if nprobe is None else nprobe
    if probes < 1 or probes > idx.n_clusters:
        raise ValueError(f"nprobe must be in [1, {idx.n_clusters}], got {probes}")
    cdiff = idx.centroids - q
    cd2 = np.einsum("ij,ij->i", cdiff, cdiff)
    nearest = np.argsort(cd2, kind="stable")[:probes]
    rows = np.concatenate([idx.lists[c] for c in nearest])
    if len(rows) == 0:
        return []
    rows = np.sort(rows)
    diff = ds.keys[rows] - q
    d2 = np.einsum("ij,ij->i", diff, diff)
    if exclude_talk is not None:
        excluded = ds.talk_ids[rows] == exclude_talk
        d2 = np.where(excluded, np.float32(np.inf), d2)
        eligible = len(d2) - int(excluded.sum())
    else:
        eligible = len(d2)
    return _select(d2, rows, min(k, eligible), ds)


def save_datastore(ds: Datastore, path: str | Path) -> None:
    """Little-endian binary layout: magic, version, dim (u32), count (u64),
    then keys as float32, values as uint32, talk ids as uint32."""
    out = bytearray()
    out += DATASTORE_MAGIC
    out += struct.pack("<IIQ", FORMAT_VERSION, ds.dim, len(ds))
    out += np.ascontiguousarray(ds.keys, dtype="<f4").tobytes()
    out += np.ascontiguousarray(ds.values, dtype="<u4").tobytes()
    out += np.ascontiguousarray(ds.talk_ids, dtype="<u4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_datastore(path: str | Path) -> Datastore:
    blob = Path(path).read_bytes()
    if blob[:4] != DATASTORE_MAGIC:
        raise ValueError(f"{path}: not a datastore file")
    version, dim, count = struct.unpack_from("<IIQ", blob, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported datastore version {version}")
    offset = 4 + 16
    keys = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=offset)
    offset += count * dim * 4
    values = np.frombuffer(blob, dtype="<u4", count=count, offset=offset)
    offset += count * 4
    talks = np.frombuffer(blob, dtype="<u4", count=count, offset=offset)
    return Datastore(
        dim=dim,
        keys=keys.reshape(count, dim).copy(),
        values=values.copy(),
        talk_ids=talks.copy(),
    )


def save_ivf(index: IvfIndex, path: str | Path) -> None:
    """Magic, version, dim, n_clusters, nprobe (u32), centroids as float32,
    then per cluster a u64 length and u64 row indices."""
    dim = index.centroids.shape[1]
    out = bytearray()
    out += IVF_MAGIC
    out += struct.pack("<4I", FORMAT_VERSION, dim, index.n_clusters, index.nprobe)
    out += np.ascontiguousarray(index.centroids, dtype="<f4").tobytes()
    for lst in index.lists:
        out += struct.pack("<Q", len(lst))
        out += np.ascontiguousarray(lst, dtype="<u8").tobytes()
    Path(path).write_bytes(bytes(out))


def load_ivf(path: str | Path) -> IvfIndex:
    blob = Path(path).read_bytes()
    if blob[:4] != IVF_MAGIC:
        raise ValueError(f"{path}: not an IVF index file")
    version, dim, n_clusters, nprobe = struct.unpack_from("<4I", blob, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported index version {version}")
    offset = 4 + 16
    centroids = np.frombuffer(blob, dtype="<f4", count=n_clusters * dim, offset=offset)
    offset += n_clusters * dim * 4
    lists = []
    for _ in range(n_clusters):
        (length,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        lst = np.frombuffer(blob, dtype="<u8", count=length, offset=offset)
        offset += length * 8
        lists.append(lst.astype(np.int64))
    return IvfIndex(
        centroids=centroids.reshape(n_clusters, dim).copy(),
        lists=lists,
        nprobe=nprobe,
    )
