pub mod app;
pub mod cost;
pub mod deploy;
pub mod gateway;
pub mod instance;
pub mod metrics;
pub mod orchestrator;
pub mod session;
pub mod wire;
