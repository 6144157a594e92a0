"""Dataset model for gold-standard (GS) and preference-based (PB) evaluation samples.

A GS sample carries an expert/rubric quality gain ``r`` for the premium model
over the alternative; a PB sample carries a preference-derived gain ``y``
(``{-1, 0, 1}`` for pairwise judges).  Both can be merged into a single
combined dataset of ``(s, t, o)`` units, where ``t`` indicates which
evaluation mechanism produced the observed outcome ``o``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._util import mask64

__all__ = [
    "DatasetError",
    "Query",
    "GsSample",
    "PbSample",
    "CombinedSample",
    "SplitSpec",
    "load_dataset",
    "make_combined_dataset",
    "reconstruct_sources",
    "split_dataset",
    "combined_arrays",
    "stack_embeddings",
]

_SOURCES = ("gs", "pb", "both")


class DatasetError(ValueError):
    """Malformed dataset file or inconsistent sample collection."""


def _check_tokens(value, name):
    if value is None:
        return None
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 0:
        raise DatasetError(f"{name} must be a nonnegative integer, got {value!r}")
    return int(value)


@dataclass(eq=False)
class Query:
    """A query represented by its precomputed embedding, plus optional token counts."""

    id: str
    embedding: np.ndarray
    tokens_in: int | None = None
    tokens_out_p: int | None = None
    tokens_out_a: int | None = None

    def __post_init__(self):
        emb = np.asarray(self.embedding, dtype=np.float64)
        if emb.ndim != 1:
            raise DatasetError(f"query {self.id!r}: embedding must be a 1-D vector")
        if not np.isfinite(emb).all():
            raise DatasetError(f"query {self.id!r}: embedding has non-finite coordinates")
        self.embedding = emb
        self.tokens_in = _check_tokens(self.tokens_in, "tokens_in")
        self.tokens_out_p = _check_tokens(self.tokens_out_p, "tokens_out_p")
        self.tokens_out_a = _check_tokens(self.tokens_out_a, "tokens_out_a")

    @property
    def dim(self) -> int:
        return self.embedding.shape[0]


@dataclass(eq=False)
class GsSample:
    """Query with its gold-standard quality gain."""

    query: Query
    r: float

    def __post_init__(self):
        self.r = float(self.r)
        if not math.isfinite(self.r):
            raise DatasetError(f"query {self.query.id!r}: non-finite GS outcome")


@dataclass(eq=False)
class PbSample:
    """Query with its preference-based quality gain."""

    query: Query
    y: float

    def __post_init__(self):
        self.y = float(self.y)
        if not math.isfinite(self.y):
            raise DatasetError(f"query {self.query.id!r}: non-finite PB outcome")


@dataclass(eq=False)
class CombinedSample:
    """One (s, t, o) unit of the merged dataset.

    ``t = 1`` means the outcome ``o`` is a GS evaluation, ``t = 0`` a PB one.
    ``origin`` records the source list ("gs" or "pb") and the index within it,
    so the merge is invertible.
    """

    s: Query
    t: int
    o: float
    origin: tuple[str, int]


@dataclass(frozen=True)
class SplitSpec:
    """Sizes and seed for the test / GS-train / PB-train partition."""

    n_test: int
    n_gs_train: int
    seed: int

    def __post_init__(self):
        if self.n_test < 1:
            raise DatasetError("n_test must be a positive integer")
        if self.n_gs_train < 1:
            raise DatasetError("n_gs_train must be a positive integer")


def _parse_record(raw: dict, lineno: int) -> dict:
    for key in ("id", "embedding", "source", "outcome"):
        if key not in raw:
            raise DatasetError(f"line {lineno}: missing required field {key!r}")
    source = raw["source"]
    if source not in _SOURCES:
        raise DatasetError(f"line {lineno}: unknown source tag {source!r}")
    emb = raw["embedding"]
    if not isinstance(emb, list) or not all(isinstance(v, (int, float)) for v in emb):
        raise DatasetError(f"line {lineno}: embedding must be a list of numbers")
    out = raw["outcome"]
    if not isinstance(out, (int, float)) or isinstance(out, bool) or not math.isfinite(out):
        raise DatasetError(f"line {lineno}: outcome must be a finite number")
    pb_out = raw.get("pb_outcome")
    if pb_out is not None:
        if not isinstance(pb_out, (int, float)) or isinstance(pb_out, bool) or not math.isfinite(pb_out):
            raise DatasetError(f"line {lineno}: pb_outcome must be a finite number")
    if source == "both" and pb_out is None:
        raise DatasetError(f"line {lineno}: source 'both' requires a pb_outcome field")
    return {
        "id": str(raw["id"]),
        "embedding": emb,
        "source": source,
        "outcome": float(out),
        "pb_outcome": None if pb_out is None else float(pb_out),
        "tokens_in": raw.get("tokens_in"),
        "tokens_out_p": raw.get("tokens_out_p"),
        "tokens_out_a": raw.get("tokens_out_a"),
    }


def load_dataset(path, schema: str = "mixed") -> tuple[list[GsSample], list[PbSample]]:
    """Read a JSONL dataset, returning (GS samples, PB samples).

    ``schema`` restricts which source tags are legal: "gs" and "pb" demand a
    single-source file, "mixed" accepts "gs", "pb" and "both" records.  A
    "both" record contributes one sample to each returned list (GS outcome
    from ``outcome``, PB outcome from ``pb_outcome``).  Errors name the
    offending line.  Unknown extra fields (e.g. a "truth" sub-object from the
    synthetic generator) are ignored.
    """
    if schema not in ("gs", "pb", "mixed"):
        raise DatasetError(f"unknown schema {schema!r}; expected 'gs', 'pb' or 'mixed'")
    gs: list[GsSample] = []
    pb: list[PbSample] = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(raw, dict):
                raise DatasetError(f"line {lineno}: record must be a JSON object")
            rec = _parse_record(raw, lineno)
            if schema != "mixed" and rec["source"] != schema:
                raise DatasetError(
                    f"line {lineno}: source {rec['source']!r} not allowed under schema {schema!r}"
                )
            if dim is None:
                dim = len(rec["embedding"])
            elif len(rec["embedding"]) != dim:
                raise DatasetError(
                    f"line {lineno}: embedding dimension {len(rec['embedding'])} != {dim}"
                )
            try:
                query = Query(
                    id=rec["id"],
                    embedding=rec["embedding"],
                    tokens_in=rec["tokens_in"],
                    tokens_out_p=rec["tokens_out_p"],
                    tokens_out_a=rec["tokens_out_a"],
                )
            except DatasetError as exc:
                raise DatasetError(f"line {lineno}: {exc}") from exc
            if rec["source"] in ("gs", "both"):
                gs.append(GsSample(query=query, r=rec["outcome"]))
            if rec["source"] == "pb":
                pb.append(PbSample(query=query, y=rec["outcome"]))
            elif rec["source"] == "both":
                pb.append(PbSample(query=query, y=rec["pb_outcome"]))
    return gs, pb


def _common_dim(gs, pb):
    dims = {s.query.dim for s in gs} | {s.query.dim for s in pb}
    if len(dims) > 1:
        raise DatasetError(f"embedding dimension mismatch across samples: {sorted(dims)}")
    return dims.pop() if dims else None


def make_combined_dataset(gs: list[GsSample], pb: list[PbSample]) -> list[CombinedSample]:
    """Merge GS and PB samples into (s, t, o) units with invertible origin tags."""
    _common_dim(gs, pb)
    combined = [
        CombinedSample(s=g.query, t=1, o=g.r, origin=("gs", i)) for i, g in enumerate(gs)
    ]
    combined.extend(
        CombinedSample(s=p.query, t=0, o=p.y, origin=("pb", i)) for i, p in enumerate(pb)
    )
    return combined


def reconstruct_sources(combined: list[CombinedSample]) -> tuple[list[GsSample], list[PbSample]]:
    """Invert make_combined_dataset using the origin bookkeeping."""
    gs_items: dict[int, GsSample] = {}
    pb_items: dict[int, PbSample] = {}
    for c in combined:
        tag, idx = c.origin
        if tag == "gs":
            if c.t != 1 or idx in gs_items:
                raise DatasetError("origin bookkeeping is not a bijection onto the GS source")
            gs_items[idx] = GsSample(query=c.s, r=c.o)
        elif tag == "pb":
            if c.t != 0 or idx in pb_items:
                raise DatasetError("origin bookkeeping is not a bijection onto the PB source")
            pb_items[idx] = PbSample(query=c.s, y=c.o)
        else:
            raise DatasetError(f"unknown origin tag {tag!r}")
    for items in (gs_items, pb_items):
        if items and sorted(items) != list(range(len(items))):
            raise DatasetError("origin indices do not cover the source dataset")
    return (
        [gs_items[i] for i in range(len(gs_items))],
        [pb_items[i] for i in range(len(pb_items))],
    )


def split_dataset(
    gs_pool: list[GsSample],
    pb_pool: list[PbSample],
    spec: SplitSpec,
) -> tuple[list[GsSample], list[GsSample], list[PbSample]]:
    """Partition a pool into (test, GS train, PB train), seeded and disjoint.

    The pool must provide a GS outcome for every query (``gs_pool``); PB
    outcomes for the split-off remainder are looked up in ``pb_pool`` by query
    id.  An empty ``pb_pool`` is legal and yields an empty PB training set
    (GS-only ablation).
    """
    n = len(gs_pool)
    if spec.n_test + spec.n_gs_train > n:
        raise DatasetError(
            f"pool of {n} samples cannot supply n_test={spec.n_test} "
            f"plus n_gs_train={spec.n_gs_train}"
        )
    rng = np.random.default_rng(mask64(spec.seed))
    perm = rng.permutation(n)
    test = [gs_pool[i] for i in perm[: spec.n_test]]
    train_gs = [gs_pool[i] for i in perm[spec.n_test : spec.n_test + spec.n_gs_train]]
    rest = perm[spec.n_test + spec.n_gs_train :]
    if not pb_pool:
        return test, train_gs, []
    by_id: dict[str, PbSample] = {}
    for p in pb_pool:
        if p.query.id in by_id:
            raise DatasetError(f"duplicate PB query id {p.query.id!r}")
        by_id[p.query.id] = p
    train_pb = []
    for i in rest:
        qid = gs_pool[i].query.id
        if qid not in by_id:
            raise DatasetError(f"no PB outcome available for split-off query {qid!r}")
        train_pb.append(by_id[qid])
    return test, train_gs, train_pb


def stack_embeddings(samples) -> np.ndarray:
    """Stack the query embeddings of GS/PB samples into an (n, D) matrix."""
    return np.stack([s.query.embedding for s in samples]) if samples else np.empty((0, 0))


def combined_arrays(combined: list[CombinedSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (S, t, o) arrays for a combined dataset."""
    if not combined:
        return np.empty((0, 0)), np.empty(0), np.empty(0)
    S = np.stack([c.s.embedding for c in combined])
    t = np.array([c.t for c in combined], dtype=np.float64)
    o = np.array([c.o for c in combined], dtype=np.float64)
    return S, t, o
