# %% [markdown]
# # Prompting and re-ranking
#
# Candidates from retrieval become a keyword-only prompt. A language model
# (here an offline stand-in) answers with a ranked list, which is parsed
# and repaired so the result is always a permutation of the candidates.

# %%
import json

from keyrec import (PromptConfig, ScriptedClient, build_index, build_profiles, build_prompt,
                    cold_start_split, SplitSpec, parse_response, rerank, retrieve, select_examples)
from keyrec.llm import CallableClient, RetryPolicy, TransportError
from keyrec.prompts import candidate_ids_in_prompt
from keyrec.synthetic import make_corpus

corpus = make_corpus(n_users=40, n_items=15, n_keywords=50, n_reviews=250, seed=3)
train, test = cold_start_split(corpus, SplitSpec(0.2, seed=3))
train_users, items = build_profiles(train)
test_users, _ = build_profiles(test)
index = build_index(items)

user, profile = sorted(test_users.items())[0]
query = profile.top_keywords(6)
candidates, _ = retrieve(index, query, k=5)
print(user, query)
print(candidates.item_ids)

# %% [markdown]
# Two training users with similar keywords serve as worked examples.

# %%
config = PromptConfig(shots=2, keywords_per_item=5)
examples = select_examples(train_users, query, config.shots, index, n_candidates=5)
bundle = build_prompt(query, candidates, index, examples, config)
print(bundle.text)
print("fingerprint", bundle.config_fingerprint[:16])

# %% [markdown]
# Model answers are rarely clean. Unknown ids and duplicates are dropped,
# then missing candidates are appended in retrieval order.

# %%
messy = f'Sure! ["{candidates.item_ids[2]}", "made-up place", "{candidates.item_ids[2]}"]'
ranked = parse_response(messy, candidates.item_ids)
print(ranked.item_ids)
print(ranked.provenance, "repaired:", ranked.repaired_count)

# %% [markdown]
# Transport failures are retried with backoff. This client fails once and
# then answers by listing the candidates it was shown in reverse.

# %%
flaky = ScriptedClient([TransportError("503"),
                        lambda p: json.dumps(candidate_ids_in_prompt(p)[::-1])])
result = rerank(flaky, bundle, retry=RetryPolicy(attempts=3, backoff=0.0))
print(result.item_ids)

# %%
echo = CallableClient(lambda p: json.dumps(candidate_ids_in_prompt(p)))
assert rerank(echo, bundle).item_ids == candidates.item_ids
