//! Desk-scale latency and working-set benchmarks for the pooling kernels.
//!
//! [`harness::sweep`] runs every kernel over a resolution ladder and
//! [`report`] turns the records into CSV, JSON or an aligned table. Install
//! [`alloc::CountingAllocator`] as the global allocator of the final binary to
//! get measured auxiliary bytes next to the analytic model.

pub mod alloc;
pub mod config;
pub mod harness;
pub mod report;

pub use config::{default_ladder, BenchConfig, BenchConfigError, ShapeCell};
pub use harness::{run_benchmark, run_benchmark_with, sweep, BenchRecord, RecordStatus, RunSettings, Stopwatch};
pub use report::{emit_report, parse_report, render_table, Format, ReportError, ReportRow};

