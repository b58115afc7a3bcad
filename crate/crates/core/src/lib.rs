//! Human-guided curation of tabular datasets: an append-only state bank,
//! a registry of data-centric tools, a coordinator/worker loop that plans
//! and executes curation episodes, and a corruption harness for checking
//! that curation undoes known damage.

pub mod coordinator;
pub mod dataset;
pub mod feedback;
pub mod harness;
pub mod llm;
pub mod models;
pub mod plan;
pub mod registry;
pub mod session;
pub mod state;
pub mod stats;
pub mod task;
pub mod tools;
pub mod worker;

pub use coordinator::{CoordinatorConfig, CoordinatorView, DecisionDocument, Observation};
pub use dataset::{Cell, ColumnKind, TabularDataset};
pub use feedback::{Answer, Author, ExpertQuestion, FeedbackItem, QuestionOptions};
pub use llm::{LlmProvider, MockProvider, RecordingProvider, ReplayProvider};
pub use models::{FittedModel, MetricResult};
pub use plan::{Episode, EpisodeMeta, EpisodeStatus, Plan};
pub use registry::{Params, ToolCategory, ToolManifest, ToolRegistry, ToolReport};
pub use session::{Control, Policy, Session, SessionConfig, SessionError, SessionInputs, SessionReport, SessionStatus};
pub use state::{EventKind, EventRecord, StateBank, SystemState};
pub use task::{TaskKind, TaskSpec};
