//! Node/coordinator protocol for one-shot FedMerDel.
//!
//! Nodes fit their batch and send a single batch summary; the coordinator
//! collects summaries (over TCP or from a directory), combines them and runs
//! the global merge search. Raw rows and responsibilities stay on the nodes.

pub mod audit;
pub mod coordinator;
pub mod error;
pub mod frame;
pub mod message;
pub mod node;

pub use coordinator::{run_coordinator, CoordinatorConfig, CoordinatorOutput, Dropout, NodeSpec, Source};
pub use error::{Result, TransportError};
pub use message::{DataRef, FitRequest, PriorSpec, WireMessage};
pub use node::{handle_fit, serve_node_dir, serve_node_tcp, NodeOptions, NodeOutcome};
