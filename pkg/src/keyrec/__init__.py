"""Keyword-driven candidate retrieval and LLM re-ranking for cold-start users."""

__version__ = "0.1.0"

from .corpus import (Corpus, ItemProfile, ReviewRecord, SplitSpec, UserProfile, build_profiles,
                     cold_start_split, load_reviews)
from .embeddings import EmbeddingStore, fallback_embed, load_embeddings, nearest_keyword
from .keywords import TaggedToken, extract_keywords, load_pretagged, normalize_keyword
from .llm import (IdentityClient, ReverseClient, ScriptedClient, HttpClient, RankedList,
                  parse_response, rerank)
from .metrics import MetricsReport, evaluate_run, metrics_at_k
from .prompts import PromptConfig, build_prompt, select_examples
from .retrieval import (CandidateList, KeywordItemIndex, QueryVector, build_index, jaccard_retrieve,
                        retrieve, score_items)
