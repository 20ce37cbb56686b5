//! Retrieval, QA, classifier and RAG-capability metrics, latency
//! statistics and report rendering.

mod classifier;
mod judge;
mod latency;
mod qa;
mod qrels;
mod report;
mod retrieval;

pub use classifier::{classifier_metrics, ClassifierMetrics};
pub use judge::{
    context_relevancy, rag_score, retrieval_similarity, CapabilityJudge, JudgeMetric, LlmJudge, OverlapJudge,
    RagComponents, RelevanceJudge,
};
pub use latency::{latency_stats, percentile, LatencyStats, StageStats};
pub use qa::{accuracy_with_extraction, lenient_em, normalize_answer, token_f1, AnswerPatterns, Extraction};
pub use qrels::{read_run, read_run_file, write_run, write_run_file, LineIssue, Qrels, DEFAULT_THRESHOLD};
pub use report::{render_markdown, EvalReport, ReportRow};
pub use retrieval::{
    average_precision, hit_at, mrr_at, ndcg_at, recall_at, retrieval_metrics, MetricSpec, RetrievalReport,
    DEFAULT_METRICS,
};
