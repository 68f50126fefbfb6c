# %% [markdown]
# # Keyword retrieval with TF-IRF weights
#
# A handful of restaurant reviews, each already reduced to keywords. We
# build the keyword-item index, inspect its weights and query it with a
# cold-start user who has only described what they like.

# %%
from keyrec import Corpus, ReviewRecord, build_index, build_profiles, jaccard_retrieve, retrieve

reviews = (
    ReviewRecord("ana", "pub", 5, "", ("live music", "craft beer", "cheap eats")),
    ReviewRecord("ben", "pub", 4, "", ("live music", "craft beer")),
    ReviewRecord("ben", "cafe", 4, "", ("good coffee", "cheap eats", "quiet")),
    ReviewRecord("cai", "cafe", 5, "", ("good coffee", "pastries")),
    ReviewRecord("cai", "bistro", 5, "", ("natural wine", "quiet", "small plates")),
    ReviewRecord("dee", "bistro", 3, "", ("natural wine", "small plates", "pricey")),
    ReviewRecord("dee", "diner", 4, "", ("cheap eats", "late night", "burgers")),
)
corpus = Corpus(reviews)
_, items = build_profiles(corpus)
index = build_index(items)
print(len(index.vocab), "keywords x", len(index.items), "items")

# %% [markdown]
# A keyword concentrated on one item gets a high weight there. "cheap eats"
# appears on three of four items, so its inverse frequency is small.

# %%
for item in index.items:
    top = index.item_keywords(item)[:3]
    print(f"{item:7s}", ", ".join(f"{kw} ({w:.3f})" for kw, w, _ in top))
print("irf(cheap eats) =", round(index.irf_of("cheap eats"), 3))
print("irf(burgers)    =", round(index.irf_of("burgers"), 3))

# %% [markdown]
# Retrieval sums the weight rows of the query keywords. "natural wines" is not
# in the vocabulary, so it is replaced by its nearest keyword under the
# character-trigram fallback embedding.

# %%
candidates, query = retrieve(index, ["quiet", "natural wines"], k=4)
print("substitutions:", query.substitutions)
for item_id, score in candidates.entries:
    print(f"{item_id:7s} {score:.3f}")

# %% [markdown]
# The Jaccard baseline ignores weights and only counts overlap.

# %%
print(jaccard_retrieve(items, ["quiet", "natural wine"], k=4).entries)
