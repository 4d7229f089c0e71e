"""Cold-user resolution via exact top-k cosine retrieval.

Three heuristics approximate a missing user vector from training data:
H1 finds authors of textually similar posts, H2 finds authors of similar
comments under those posts, H3 compares comments by their reply-chain
prefix sums instead of raw text. The index is a brute-force normalized
matrix scan, exact by construction.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .assembly import all_chain_representations
from .corpus import Sample
from .embedding import EmbeddingTable, FormatError, pack_ids, sha256_file, unpack_ids
from .text import TextProvider

logger = logging.getLogger(__name__)

IDX_MAGIC = b"UENIDX1"


@dataclass(frozen=True)
class ColdMapConfig:
    k1: int = 19
    k2: int = 72
    heuristics: frozenset = frozenset({"h1", "h2", "h3"})

    def __post_init__(self):
        if self.k1 < 1:
            raise ValueError("k1 must be >= 1")
        if "h2" in self.heuristics and self.k2 < 1:
            raise ValueError("k2 must be >= 1 when H2 is enabled")
        unknown = set(self.heuristics) - {"h1", "h2", "h3"}
        if unknown:
            raise ValueError(f"unknown heuristics: {sorted(unknown)}")


@dataclass(frozen=True)
class SimIndex:
    keys: tuple[str, ...]
    vectors: np.ndarray  # (n, d) float32, rows L2-normalized (or zero)
    owners: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def build_index(entries) -> SimIndex:
    """entries: iterable of (key, vector, owner). Rows are normalized here."""
    keys, vecs, owners = [], [], []
    dim = None
    for key, vec, owner in entries:
        vec = np.asarray(vec, dtype=np.float64)
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise FormatError(
                f"index entry {key!r}: dimension {vec.shape[0]} != {dim}"
            )
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec = vec / norm
        keys.append(key)
        vecs.append(vec.astype(np.float32))
        owners.append(owner)
    matrix = np.stack(vecs) if vecs else np.zeros((0, dim or 0), dtype=np.float32)
    return SimIndex(keys=tuple(keys), vectors=matrix, owners=tuple(owners))


def topk(index: SimIndex, query: np.ndarray, k: int) -> list[tuple[str, str, float]]:
    """Exact cosine top-k, descending score, ties broken by key ascending."""
    if len(index) == 0:
        raise FormatError("topk on an empty index")
    query = np.asarray(query, dtype=np.float64)
    if query.shape[0] != index.dim:
        raise FormatError(f"query dim {query.shape[0]} != index dim {index.dim}")
    qnorm = np.linalg.norm(query)
    if qnorm > 0:
        query = query / qnorm
    scores = index.vectors.astype(np.float64) @ query
    order = sorted(range(len(index)), key=lambda i: (-scores[i], index.keys[i]))
    return [
        (index.keys[i], index.owners[i], float(scores[i]))
        for i in order[: min(k, len(index))]
    ]


def map_cold_author(
    post_vec: np.ndarray, post_index: SimIndex, users: EmbeddingTable, k1: int
) -> np.ndarray:
    """Mean user vector of the k1 most text-similar training posts' authors."""
    if len(post_index) == 0:
        logger.warning("empty post index; falling back to global mean user vector")
        return users.mean_vector().astype(np.float64)
    hits = topk(post_index, post_vec, k1)
    rows = np.stack([users.vector(owner) for _, owner, _ in hits]).astype(np.float64)
    return rows.mean(axis=0)


@dataclass
class TrainSideData:
    """Precomputed training-side retrieval structures for the mapper."""

    post_index: SimIndex
    comments_by_post: dict  # post_id -> list of (comment_key, rep_vector, author)
    all_comments: list = field(default_factory=list)  # pooled, for H1-less mode


def build_train_side(
    train: list[Sample],
    texts: TextProvider,
    common_author: str | None = None,
    use_chains: bool = True,
) -> TrainSideData:
    """Index train posts by text and precompute per-post comment representations.

    use_chains=False (H3 off) represents comments by raw text vectors.
    """
    post_entries = []
    comments_by_post: dict[str, list] = {}
    pooled: list = []
    for s in train:
        post_entries.append(
            (s.post_id, np.asarray(texts(s.text_key), dtype=np.float64),
             s.resolved_author(common_author))
        )
        reps = (
            all_chain_representations(s, texts)
            if use_chains
            else {c.id: np.asarray(texts(c.text_key), dtype=np.float64) for c in s.comments}
        )
        entries = [(c.id, reps[c.id], c.author) for c in s.comments]
        comments_by_post[s.post_id] = entries
        pooled.extend(entries)
    return TrainSideData(
        post_index=build_index(post_entries),
        comments_by_post=comments_by_post,
        all_comments=pooled,
    )


def map_cold_commenter(
    sample: Sample,
    comment_id: str,
    train_side: TrainSideData,
    texts: TextProvider,
    users: EmbeddingTable,
    cfg: ColdMapConfig,
) -> np.ndarray:
    """H1 narrows to similar posts, H3 transforms comments to chain sums,
    H2 retrieves the k2 nearest comments and averages their authors."""
    post_vec = np.asarray(texts(sample.text_key), dtype=np.float64)
    if "h1" in cfg.heuristics:
        if len(train_side.post_index) == 0:
            logger.warning("empty post index; falling back to global mean user vector")
            return users.mean_vector().astype(np.float64)
        hits = topk(train_side.post_index, post_vec, cfg.k1)
        collected = []
        for key, _, _ in hits:
            collected.extend(train_side.comments_by_post[key])
    else:
        collected = train_side.all_comments
    if not collected:
        if "h1" in cfg.heuristics:
            return map_cold_author(post_vec, train_side.post_index, users, cfg.k1)
        logger.warning("no training comments to match; using global mean user vector")
        return users.mean_vector().astype(np.float64)
    if "h3" in cfg.heuristics:
        cold_rep = sum_chain(sample, comment_id, texts)
    else:
        comment = next(c for c in sample.comments if c.id == comment_id)
        cold_rep = np.asarray(texts(comment.text_key), dtype=np.float64)
    pool = build_index(collected)
    hits = topk(pool, cold_rep, cfg.k2)
    rows = np.stack([users.vector(owner) for _, owner, _ in hits]).astype(np.float64)
    return rows.mean(axis=0)


def sum_chain(sample: Sample, comment_id: str, texts: TextProvider) -> np.ndarray:
    from .assembly import chain_prefix_representation

    return chain_prefix_representation(sample, comment_id, texts)


def make_resolver(
    mode: str,
    users: EmbeddingTable,
    train_side: TrainSideData | None = None,
    texts: TextProvider | None = None,
    cfg: ColdMapConfig | None = None,
):
    """Resolver factory for modes train-lookup, mean-fallback, cold-mapper.

    Known users always resolve by direct lookup; the mode only decides what
    happens for users outside the table.
    """
    if mode == "train-lookup":

        def resolver(user_id, context):
            return users.vector(user_id).astype(np.float64)

        return resolver
    if mode == "mean-fallback":
        mean = users.mean_vector().astype(np.float64)

        def resolver(user_id, context):
            if user_id in users:
                return users.vector(user_id).astype(np.float64)
            return mean

        return resolver
    if mode == "cold-mapper":
        if train_side is None or texts is None or cfg is None:
            raise ValueError("cold-mapper mode needs train_side, texts, and cfg")
        use_h2 = "h2" in cfg.heuristics

        def resolver(user_id, context):
            if user_id in users:
                return users.vector(user_id).astype(np.float64)
            if context[0] == "post":
                sample = context[1]
                post_vec = np.asarray(texts(sample.text_key), dtype=np.float64)
                if "h1" in cfg.heuristics:
                    return map_cold_author(
                        post_vec, train_side.post_index, users, cfg.k1
                    )
                return users.mean_vector().astype(np.float64)
            sample, comment_id = context[1], context[2]
            if use_h2:
                return map_cold_commenter(
                    sample, comment_id, train_side, texts, users, cfg
                )
            if "h1" in cfg.heuristics:
                post_vec = np.asarray(texts(sample.text_key), dtype=np.float64)
                return map_cold_author(post_vec, train_side.post_index, users, cfg.k1)
            return users.mean_vector().astype(np.float64)

        return resolver
    raise ValueError(f"unknown resolver mode {mode!r}")


def save_index(index: SimIndex, path) -> None:
    path = str(path)
    with open(path, "wb") as fh:
        fh.write(IDX_MAGIC)
        fh.write(struct.pack("<II", len(index), index.dim))
        fh.write(pack_ids(index.keys))
        fh.write(pack_ids(index.owners))
        fh.write(index.vectors.astype("<f4").tobytes())
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump({"rows": len(index), "dim": index.dim, "sha256": sha256_file(path)}, fh)


def load_index(path) -> SimIndex:
    path = str(path)
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[: len(IDX_MAGIC)] != IDX_MAGIC:
        raise FormatError(f"{path}: bad magic, not a similarity index")
    try:
        with open(path + ".json", "r", encoding="utf-8") as fh:
            if json.load(fh).get("sha256") != sha256_file(path):
                raise FormatError(f"{path}: checksum mismatch against sidecar")
    except FileNotFoundError:
        pass
    rows, dim = struct.unpack_from("<II", buf, len(IDX_MAGIC))
    keys, offset = unpack_ids(buf, rows, len(IDX_MAGIC) + 8)
    owners, offset = unpack_ids(buf, rows, offset)
    vectors = np.frombuffer(buf, dtype="<f4", count=rows * dim, offset=offset)
    return SimIndex(
        keys=tuple(keys), vectors=vectors.reshape(rows, dim).copy(), owners=tuple(owners)
    )
