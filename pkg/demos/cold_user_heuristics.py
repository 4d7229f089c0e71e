"""
Cold users: retrieval heuristics in slow motion
===============================================

Shows what the cold-user mapper actually does. A user with no training
history has no learned embedding, so the mapper borrows vectors from
behaviorally similar training users found through text: similar posts
(H1), similar comments under those posts (H2), and reply-chain prefix
sums instead of raw comment text (H3).
"""

import numpy as np

from uen.coldmap import (
    ColdMapConfig,
    build_train_side,
    map_cold_author,
    map_cold_commenter,
    topk,
)
from uen.corpus import corpus_users, temporal_split
from uen.graph import build_interaction_graph
from uen.node2vec import Node2VecConfig, learn_user_embeddings
from uen.synth import SynthConfig, generate
from uen.text import make_hash_provider

# 1. Corpus, split, and real user embeddings learned from the train graph.
corpus = generate(SynthConfig(n_samples=200, n_users=60, seed=3))
split = temporal_split(corpus)
graph = build_interaction_graph(split.train, corpus.common_author)
users = learn_user_embeddings(
    graph, Node2VecConfig(d1=16, walk_length=10, walks_per_node=4, window=4,
                          epochs=2, seed=0))
texts = make_hash_provider()
side = build_train_side(list(split.train), texts, corpus.common_author)

# 2. Find a test cascade authored by a user the table has never seen.
known = corpus_users(split.train, corpus.common_author)
cold_sample = next(
    s for s in split.test
    if s.resolved_author(corpus.common_author) not in users)
cold_author = cold_sample.resolved_author(corpus.common_author)
print("cold author:", cold_author)
print("post text:  ", cold_sample.text_key[:60], "...")

# 3. H1: which training posts look like this one?
post_vec = np.asarray(texts(cold_sample.text_key), dtype=np.float64)
hits = topk(side.post_index, post_vec, 5)
print("\nnearest training posts (key, author, cosine):")
for key, owner, score in hits:
    print("  %-8s %-10s %.3f" % (key, owner, score))

# 4. The mapped author vector is the mean of those authors' embeddings.
mapped = map_cold_author(post_vec, side.post_index, users, k1=5)
nearest_owner = hits[0][1]
print("\nmapped vector norm %.3f; cosine to top hit's author %.3f"
      % (np.linalg.norm(mapped),
         float(mapped @ users.vector(nearest_owner)
               / (np.linalg.norm(mapped)
                  * np.linalg.norm(users.vector(nearest_owner))))))

# 5. H2+H3 for a cold commenter: candidate comments come from the k1
#    most similar posts and are compared by chain prefix sums, so a
#    deep reply inherits the context it was written under.
cold_comment = cold_sample.comments[0]
cfg = ColdMapConfig(k1=5, k2=8)
commenter_vec = map_cold_commenter(cold_sample, cold_comment.id, side,
                                   texts, users, cfg)
print("\ncold commenter %s mapped; norm %.3f"
      % (cold_comment.author, np.linalg.norm(commenter_vec)))

# 6. H3 off for contrast: raw comment text instead of chain sums.
side_flat = build_train_side(list(split.train), texts, corpus.common_author,
                             use_chains=False)
flat_vec = map_cold_commenter(
    cold_sample, cold_comment.id, side_flat, texts, users,
    ColdMapConfig(k1=5, k2=8, heuristics=frozenset({"h1", "h2"})))
delta = np.linalg.norm(commenter_vec - flat_vec)
print("difference between chain-sum and raw-text mapping: %.4f" % delta)

# 7. Both mappings live inside the convex hull of training embeddings,
#    so they can never be wilder than any real user.
max_norm = float(np.linalg.norm(users.matrix, axis=1).max())
print("max training-user norm %.3f >= mapped norms %.3f / %.3f"
      % (max_norm, np.linalg.norm(commenter_vec), np.linalg.norm(flat_vec)))
