//! The file boundary: corpora in, trace pools in and out, reports out.

pub mod corpus;
pub mod report;
pub mod traces;

pub use corpus::{
    chunk_documents, load_corpus, parse_documents, read_documents, split_documents, CorpusSplit, Document, SplitConfig,
};
pub use report::{format_auc, render_report, render_roc, ReportFormat, RocCurve};
pub use traces::{
    is_trace_header, parse_pool, read_traces, write_pool, write_traces, ReadMode, ReadPool, TRACE_VERSION,
};
