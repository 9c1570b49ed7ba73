//! Filtering of teacher trajectories into a fine-tuning set, and the
//! evaluation metrics.

mod filter;
mod judge;
mod metrics;
mod sft;

pub use filter::{filter_trajectory, FilterCheck, FilterConfig, FilterVerdict};
pub use judge::{Judge, JudgeError, RemoteJudge, RuleJudge};
pub use metrics::{evaluate, hits_at_1, web_calls_per_tool_call, web_search_ratio, EvalError, EvalReport};
pub use sft::SftRecord;
