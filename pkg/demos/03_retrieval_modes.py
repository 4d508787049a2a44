# Goal: build dense and lexical indexes over the same items, search both,
# fuse them with reciprocal ranks, and apply a re-ranking hook.

from riskrank import (
    HashEmbedder,
    build_dense_index,
    build_lexical_index,
    dense_search,
    lexical_search,
    rerank,
    rrf_fuse,
)

items = {
    "guide-car": "capital adequacy requirements and risk weighted assets",
    "guide-lcr": "liquidity coverage ratio and high quality liquid assets",
    "guide-irb": "internal ratings based approach to credit risk capital",
    "guide-ops": "operational risk capital and loss event categories",
    "guide-sec": "securitization exposures and special purpose entities",
}
query = "how is credit risk capital calculated"

embedder = HashEmbedder(dim=256, seed=0)
ids = list(items)
dense_index = build_dense_index(ids, embedder.embed(list(items.values())))
lexical_index = build_lexical_index(ids, list(items.values()))

dense_hits = dense_search(dense_index, embedder(query), k=5, query_id="q1")
lexical_hits = lexical_search(lexical_index, query, k=5, query_id="q1")

print(f"query: {query!r}\n")
print("dense (cosine):")
for hit in dense_hits.hits:
    print(f"  {hit.rank}. {hit.item_id:<9} {hit.score:+.4f}")
print("lexical (BM25):")
for hit in lexical_hits.hits:
    print(f"  {hit.rank}. {hit.item_id:<9} {hit.score:+.4f}")

fused = rrf_fuse([dense_hits, lexical_hits], k_rrf=60, depth=100)
print("hybrid (reciprocal-rank fusion):")
for hit in fused.hits:
    print(f"  {hit.rank}. {hit.item_id:<9} {hit.score:.6f}")

# A hook may rescore or permute the candidates, but never add or drop any.
identity = rerank(None, query, fused)
print("\nidentity re-rank leaves the list unchanged:", identity == fused)
