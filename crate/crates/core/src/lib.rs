//! Performance and energy simulator for heterogeneous near-memory chiplet
//! systems running multimodal LLM inference.
//!
//! The crate is split along the flow of a simulation:
//!
//! * [`workload`] turns a model configuration into an [`OperatorGraph`] of
//!   GEMM / SFPE / KV kernels for encode, connect, prefill and decode.
//! * [`hardware`] describes the M3D DRAM and M3D RRAM chiplets and the
//!   inter-chiplet link.
//! * [`mapper`] places kernels on chiplets, groups them into fused
//!   near-memory kernels and lays out weights and KV-cache blocks.
//! * [`engine`] runs the mapped graph through an event-driven roofline model
//!   and produces a [`SimReport`].
//! * [`kernels`] holds double-precision reference implementations of the
//!   fused kernels.

pub mod engine;
pub mod error;
pub mod hardware;
pub mod kernels;
pub mod mapper;
pub mod presets;
pub mod workload;

pub use engine::{run, simulate, Experiment, SimReport, Workload};
pub use error::{Error, Result};
pub use hardware::PlatformSpec;
pub use mapper::{build_plan, MappingPlan, PlacementPolicy};
pub use workload::{build_graph, ModelConfig, OperatorGraph};
