//! Scripted teacher, episode runner, metrics, benchmark sweeps and the
//! distillation recorder.

pub mod bench;
pub mod dataset;
pub mod episode;
pub mod metrics;
pub mod teacher;

pub use bench::{run_benchmark, run_sweep, write_csv, BenchSpec, Budget, SplitFilter};
pub use dataset::{read_dataset, record_distillation, DatasetWriter, DistillRecord};
pub use episode::{run_episode, CloseEvent, EpisodeLog, EpisodeOptions, StepCallback, StepRecord, StepSample};
pub use metrics::{compute_metrics, MetricsReport, MetricsRow};
pub use teacher::{teacher_step, GraspMode, Teacher, TeacherConfig};
