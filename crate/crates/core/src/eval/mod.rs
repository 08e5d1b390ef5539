//! Filtered link-prediction ranking, entity classification on frozen
//! embeddings, and re-ranking of retrieval runs.

mod classify;
mod link_prediction;
mod ranking;
mod retrieval;

pub use classify::{
    accuracy, balanced_accuracy, fit_softmax, read_labels, train_classifier, ClassifierReport,
    LabeledSet, SoftmaxRegression, L2_GRID,
};
pub use link_prediction::{evaluate_link_prediction, rank_triples};
pub use ranking::{rank_of, ranking_metrics, RankingMetrics, RankingReport, TripleRanks};
pub use retrieval::{
    alpha_grid, dcg_at_k, grid_search_alpha, inner_products, make_folds, ndcg_at_k, paired_t_test,
    rerank, rerank_with, EmbeddingScores, FoldResult, GridSearchReport, NdcgReport, Qrels,
    RetrievalRun, RunEntry, TTest,
};
