//! Fault localization driven by a fixed sequence of LLM tasks over
//! method-call traces, with an Ochiai baseline and Top-N evaluation.
//!
//! The usual entry point is [`pipeline::run_bug`]: load a
//! [`index::CodebaseIndex`], a trace ([`trace::parse_trace`]) and the failed
//! tests ([`pipeline::input::load_failures`]), pick a [`llm::ChatBackend`],
//! and score the resulting reports with [`eval::aggregate`].

pub mod agents;
pub mod config;
pub mod eval;
pub mod index;
pub mod llm;
pub mod pipeline;
pub mod sbfl;
pub mod tokens;
pub mod trace;

/// Logs to stderr, filtered by `SOPFL_LOG` (default `warn`).
pub fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("SOPFL_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .try_init();
}
