//! SMS gateway: signed inbound webhooks routed into instances under a
//! sender policy, and the outbound leg to the external provider.

pub mod mock;
mod outbox;
mod policy;
mod webhook;

pub use mock::{run_mock_gateway, InjectRequest, InjectResult, LedgerEntry, MockGateway, MockGatewayConfig};
pub use outbox::{DeliveryReceipt, OutboundRequest, Outbox, OutboxConfig, OutboxError};
pub use policy::{
    contains_url, decide, Decision, InboundWebhook, PolicyMode, RejectReason, SenderPolicy,
    MAX_INBOUND_BODY,
};
pub use webhook::{
    router, sign, verify, BoxFut, Disposition, Gateway, GatewayError, MessageSink, Policies,
    SinkError, SIGNATURE_HEADER,
};

/// Name of the quarantine log under the data directory.
pub const QUARANTINE_FILE: &str = "quarantine.ndjson";
