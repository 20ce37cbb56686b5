//! End-to-end orchestration: configuration and presets, per-query runs,
//! evaluation runs, ablations and α sweeps.

mod components;
mod config;
mod eval;
mod run;

pub use components::{chat_client, embedder, scorer, Components, IndexLayout};
pub use config::{
    preset, Backends, ChatSpec, ClassifierSpec, EmbedderSpec, EvalUnit, HydeConfig, JudgeKind, PipelineConfig,
    RerankerKind, RetrievalMode, ScorerSpec, SummarizerKind, TimingMode, TransformMode, BALANCED_EFFICIENCY,
    BEST_PERFORMANCE, DEFAULT_RERANK_K, DEFAULT_WORKERS,
};
pub use eval::{
    ablation_sweep, ablation_variants, alpha_sweep, default_alpha_values, evaluate, qrels_from_queries, read_queries,
    run_eval, sample_queries, to_eval_unit, write_run_dir, AblationGroup, AblationTable, CandidateCache, EvalOptions, CONFIG_FILE,
    REPORT_JSON, REPORT_MD, TRACES_FILE,
};
pub use run::{
    run_pipeline, FirstStage, Pipeline, PipelineTrace, StageError, StageLatency, StopAfter, SubRetrieval, STAGES,
};

#[cfg(test)]
mod tests;
