"""Synthetic cascade corpora with planted, recoverable structure.

Users live in communities split into a fake-prone and a true-prone side;
user_signal_strength controls how strongly a sample's participants come
from the side matching its label. text_signal_strength controls how many
topical-cluster tokens appear in each text, where every cluster belongs to
one label. Test samples can draw from reserved cold-user pools that mimic
an existing community, so the cold mapper has signal to recover.
Everything is a pure function of the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Sample, Comment, corpus_users, temporal_split


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 300
    n_communities: int = 6
    n_samples: int = 2000
    comments_per_sample: tuple[int, int] = (4, 10)
    max_chain_depth: int = 3
    fake_fraction: float = 0.5
    text_signal_strength: float = 0.3
    user_signal_strength: float = 0.8
    cold_user_rate_test: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for name in ("fake_fraction", "text_signal_strength",
                     "user_signal_strength", "cold_user_rate_test"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1]")
        if self.n_users < 1 or self.n_samples < 1 or self.n_communities < 2:
            raise ValueError("counts must be positive (communities >= 2)")
        if self.comments_per_sample[0] < 1:
            raise ValueError("samples need at least one comment")


# Lexical signal is planted as topical clusters: each cluster owns a small
# disjoint token pool and belongs wholly to one label. Cascades about the
# same cluster share several rare tokens, so nearest-neighbor retrieval
# recovers label-leaning neighbors with high purity, while a classifier has
# to memorize many separate token-to-label associations, which keeps the
# text channel from being trivially separable.
_CLUSTERS_PER_LABEL = 96
_CLUSTER_TOKENS = 2
_CLUSTER_POOLS = [
    [[f"k{y}_{c}_{i}" for i in range(_CLUSTER_TOKENS)]
     for c in range(_CLUSTERS_PER_LABEL)]
    for y in (0, 1)
]
_COMMON_POOL = [f"cm{i}" for i in range(1000)]

# Posts carry more of the lexical signal than comments (scales below are the
# per-token cluster-pool probability at full signal strength).
_POST_SIGNAL_SCALE = 1.0
_COMMENT_SIGNAL_SCALE = 0.2
_POST_TOKENS = 16
_COMMENT_TOKENS = 5


def _text(rng, label: int, cluster: int, n_tokens: int, p_label: float) -> str:
    pool = _CLUSTER_POOLS[label][cluster]
    toks = []
    for _ in range(n_tokens):
        if rng.random() < p_label:
            toks.append(pool[rng.integers(len(pool))])
        else:
            toks.append(_COMMON_POOL[rng.integers(len(_COMMON_POOL))])
    return " ".join(toks)


def generate(cfg: SynthConfig) -> Corpus:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    n_comm = cfg.n_communities
    communities = [
        [f"u{c:02d}_{i:04d}" for i in range(i_start, cfg.n_users, n_comm)]
        for c, i_start in enumerate(range(n_comm))
    ]
    cold_pool_size = max(4, cfg.n_users // n_comm)
    cold_pools = [
        [f"cold{c:02d}_{i:04d}" for i in range(cold_pool_size)] for c in range(n_comm)
    ]
    # even community indices lean fake, odd lean true
    fake_side = [c for c in range(n_comm) if c % 2 == 0]
    true_side = [c for c in range(n_comm) if c % 2 == 1]

    n_fake = round(cfg.fake_fraction * cfg.n_samples)
    labels = np.array([0] * n_fake + [1] * (cfg.n_samples - n_fake))
    rng.shuffle(labels)

    n_train = round(cfg.n_samples * 0.7)
    n_val = round(cfg.n_samples * 0.1)
    test_start = n_train + n_val
    if cfg.cold_user_rate_test > 0 and test_start >= cfg.n_samples:
        raise ValueError("cold users requested but the corpus has no test range")

    train_seen: set[str] = set()

    def pick_community(label: int) -> int:
        aligned = fake_side if label == 0 else true_side
        other = true_side if label == 0 else fake_side
        p_aligned = 0.5 + 0.5 * cfg.user_signal_strength
        side = aligned if rng.random() < p_aligned else other
        return side[rng.integers(len(side))]

    def pick_user(label: int, region: str, cold: bool) -> str:
        comm = pick_community(label)
        if cold:
            pool = cold_pools[comm]
            return pool[rng.integers(len(pool))]
        if region == "train":
            users = communities[comm]
            u = users[rng.integers(len(users))]
            train_seen.add(u)
            return u
        # warm val/test slots reuse users that actually appeared in training
        candidates = [u for u in communities[comm] if u in train_seen]
        if not candidates:
            candidates = sorted(train_seen)
        return candidates[rng.integers(len(candidates))]

    samples = []
    for i in range(cfg.n_samples):
        label = int(labels[i])
        region = "train" if i < n_train else ("val" if i < test_start else "test")
        if region == "test":
            r = rng.random()
            if r < cfg.cold_user_rate_test:
                mode = "all_cold"
            elif r < 2 * cfg.cold_user_rate_test:
                mode = "mixed"
            else:
                mode = "warm"
        else:
            mode = "warm"

        def is_cold() -> bool:
            if mode == "all_cold":
                return True
            if mode == "mixed":
                return bool(rng.random() < 0.5)
            return False

        cluster = int(rng.integers(_CLUSTERS_PER_LABEL))
        author = pick_user(label, region, is_cold())
        n_comments = int(
            rng.integers(cfg.comments_per_sample[0], cfg.comments_per_sample[1] + 1)
        )
        post_id = f"p{i:06d}"
        ts = 1_000_000 + i * 60
        comments = []
        depths = {post_id: 0}
        for j in range(n_comments):
            cid = f"{post_id}c{j:03d}"
            # deeper chains are allowed up to max_chain_depth
            shallow = [nid for nid, d in depths.items() if d < cfg.max_chain_depth]
            parent = shallow[rng.integers(len(shallow))] if rng.random() < 0.5 else post_id
            depths[cid] = depths[parent] + 1
            comments.append(
                Comment(
                    id=cid,
                    author=pick_user(label, region, is_cold()),
                    parent=parent,
                    text_key=_text(rng, label, cluster, _COMMENT_TOKENS,
                                   _COMMENT_SIGNAL_SCALE * cfg.text_signal_strength),
                    timestamp=ts + (j + 1) * 5,
                )
            )
        samples.append(
            Sample(
                post_id=post_id,
                author=author,
                text_key=_text(rng, label, cluster, _POST_TOKENS,
                               _POST_SIGNAL_SCALE * cfg.text_signal_strength),
                timestamp=ts,
                comments=tuple(comments),
                label=label,
            )
        )
    return Corpus(samples=tuple(samples))


def describe(corpus: Corpus) -> dict:
    """Dataset statistics table: counts, user coverage, split spans."""
    split = temporal_split(corpus)
    train_users = corpus_users(split.train, corpus.common_author)
    test_users = corpus_users(split.test, corpus.common_author)
    all_users = corpus_users(corpus.samples, corpus.common_author)
    return {
        "samples": len(corpus.samples),
        "comments": sum(len(s.comments) for s in corpus.samples),
        "fake_samples": sum(1 for s in corpus.samples if s.label == 0),
        "true_samples": sum(1 for s in corpus.samples if s.label == 1),
        "unique_users": len(all_users),
        "cold_users": len(test_users - train_users),
        "train_size": len(split.train),
        "val_size": len(split.val),
        "test_size": len(split.test),
        "train_span": [split.train[0].timestamp, split.train[-1].timestamp],
        "val_span": [split.val[0].timestamp, split.val[-1].timestamp],
        "test_span": [split.test[0].timestamp, split.test[-1].timestamp],
    }
