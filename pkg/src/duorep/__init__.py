"""duorep: dual-family dense passage retrieval engine and comparison harness.

Three retrieval systems behind one interface — a BM25 inverted index, exact
inner-product search over single-vector representations, and two-stage
approximate-then-exact search over per-token representations — plus the
evaluation machinery to compare them per query.
"""

from .bm25 import SparseIndex
from .corpus import Qrels, Ranking, TextCollection, read_run, tokenize, write_run
from .embed import EmbedderConfig, SyntheticEmbedder, load_embeddings, write_embeddings
from .evalsuite import (
    average_precision,
    bonferroni,
    classify_quartile,
    classify_threshold,
    compare_runs,
    delta_report,
    evaluate_run,
    ndcg_at,
    paired_t_test,
    rr_at,
    win_loss_reward_risk,
)
from .flat import FlatIndex
from .ivfpq import IVFPQIndex, PQCodebook, pq_decode, pq_encode, train_kmeans, train_pq
from .kernels import active_backend
from .lateinter import (
    InteractionReport,
    TokenStore,
    explain_interaction,
    generate_candidates,
    maxsim_score,
    rank_candidates,
    two_stage_search,
)

__version__ = "0.1.0"
