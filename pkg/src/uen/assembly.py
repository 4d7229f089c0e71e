"""Per-sample node features and the local graph fed to the GNN.

Each node row is text vector || user vector (text first). The post is node
0, comments follow in input order, and edges mirror the sample's reply
tree. Comment-chain prefix sums (used by the cold mapper's history
heuristic) also live here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .corpus import Sample
from .text import TextProvider

# Resolver contract: (user_id, context) -> user vector. The context carries
# the occurrence (post vs a specific comment) so one user can resolve to
# different vectors in different spots of the same sample.
# context is ("post", sample) or ("comment", sample, comment_id).
UserResolver = Callable[[str, tuple], np.ndarray]


@dataclass(frozen=True)
class SampleGraph:
    node_order: tuple[str, ...]  # post_id first, then comment ids
    features: np.ndarray  # (n_nodes, feat_dim)
    edges: tuple[tuple[int, int], ...]  # undirected, indices into node_order
    label: Optional[int]
    sample_id: str


def assemble(
    sample: Sample,
    texts: TextProvider,
    resolver: Optional[UserResolver],
    common_author: Optional[str] = None,
) -> SampleGraph:
    """Build the node-feature matrix and tree adjacency for one sample.

    resolver=None drops user features entirely (text-only node rows).
    """
    node_order = [sample.post_id] + [c.id for c in sample.comments]
    pos = {nid: i for i, nid in enumerate(node_order)}
    rows = []
    post_text = np.asarray(texts(sample.text_key), dtype=np.float64)
    if resolver is None:
        rows.append(post_text)
        for c in sample.comments:
            rows.append(np.asarray(texts(c.text_key), dtype=np.float64))
    else:
        post_author = sample.resolved_author(common_author)
        rows.append(
            np.concatenate([post_text, resolver(post_author, ("post", sample))])
        )
        for c in sample.comments:
            tvec = np.asarray(texts(c.text_key), dtype=np.float64)
            uvec = resolver(c.author, ("comment", sample, c.id))
            rows.append(np.concatenate([tvec, uvec]))
    edges = tuple((pos[p], pos[c]) for p, c in sample.edges())
    return SampleGraph(
        node_order=tuple(node_order),
        features=np.stack(rows),
        edges=edges,
        label=sample.label,
        sample_id=sample.post_id,
    )


def chain_prefix_representation(
    sample: Sample, comment_id: str, texts: TextProvider
) -> np.ndarray:
    """Sum of text vectors from the first-level comment down to comment_id.

    The post's own text vector is excluded; a top-level comment is just its
    own vector.
    """
    by_id = {c.id: c for c in sample.comments}
    if comment_id not in by_id:
        raise KeyError(f"comment {comment_id!r} not in sample {sample.post_id!r}")
    total = None
    cur = by_id[comment_id]
    while True:
        vec = np.asarray(texts(cur.text_key), dtype=np.float64)
        total = vec if total is None else total + vec
        if cur.parent == sample.post_id:
            return total
        cur = by_id[cur.parent]


def all_chain_representations(sample: Sample, texts: TextProvider) -> dict[str, np.ndarray]:
    """Chain prefix sums for every comment, via the prefix recurrence."""
    out: dict[str, np.ndarray] = {}
    by_id = {c.id: c for c in sample.comments}

    def rep(cid: str) -> np.ndarray:
        if cid in out:
            return out[cid]
        c = by_id[cid]
        vec = np.asarray(texts(c.text_key), dtype=np.float64)
        if c.parent != sample.post_id:
            vec = vec + rep(c.parent)
        out[cid] = vec
        return vec

    for c in sample.comments:
        rep(c.id)
    return out
