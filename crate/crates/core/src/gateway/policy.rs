use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Concatenated-SMS bound on inbound bodies.
pub const MAX_INBOUND_BODY: usize = 1600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InboundWebhook {
    pub message_id: String,
    pub from: String,
    pub to: String,
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    AllowAll,
    Allowlist,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenderPolicy {
    pub mode: PolicyMode,
    #[serde(default)]
    pub allowed: BTreeSet<String>,
    #[serde(default = "yes")]
    pub strip_link_previews: bool,
}

fn yes() -> bool {
    true
}

impl Default for SenderPolicy {
    /// Closed: nothing is delivered until senders are listed.
    fn default() -> Self {
        SenderPolicy {
            mode: PolicyMode::Allowlist,
            allowed: BTreeSet::new(),
            strip_link_previews: true,
        }
    }
}

impl SenderPolicy {
    pub fn allow_all() -> Self {
        SenderPolicy {
            mode: PolicyMode::AllowAll,
            ..Self::default()
        }
    }

    pub fn allowlist<I: IntoIterator<Item = S>, S: Into<String>>(numbers: I) -> Self {
        SenderPolicy {
            mode: PolicyMode::Allowlist,
            allowed: numbers.into_iter().map(Into::into).collect(),
            strip_link_previews: true,
        }
    }

    pub fn permits(&self, sender: &str) -> bool {
        match self.mode {
            PolicyMode::AllowAll => true,
            PolicyMode::Allowlist => self.allowed.contains(sender),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    Unauthentic,
    SenderBlocked,
    NoRoute,
    TooLarge,
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Deliver { no_preview: bool },
    Reject(RejectReason),
}

/// True when the body carries an `http://` or `https://` link.
pub fn contains_url(body: &str) -> bool {
    let lower = body.to_ascii_lowercase();
    lower.contains("http://") || lower.contains("https://")
}

/// Policy decision for an authenticated, routed webhook.
pub fn decide(policy: &SenderPolicy, hook: &InboundWebhook) -> Decision {
    if hook.body.len() > MAX_INBOUND_BODY {
        return Decision::Reject(RejectReason::TooLarge);
    }
    if !policy.permits(&hook.from) {
        return Decision::Reject(RejectReason::SenderBlocked);
    }
    Decision::Deliver {
        no_preview: policy.strip_link_previews || contains_url(&hook.body),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hook(from: &str, body: &str) -> InboundWebhook {
        InboundWebhook {
            message_id: "m".into(),
            from: from.into(),
            to: "+15550000".into(),
            body: body.into(),
        }
    }

    #[test]
    fn allowlist_blocks_unknown_sender() {
        let p = SenderPolicy::allowlist(["+15550001"]);
        assert_eq!(
            decide(&p, &hook("+15559999", "hi")),
            Decision::Reject(RejectReason::SenderBlocked)
        );
        assert!(matches!(decide(&p, &hook("+15550001", "hi")), Decision::Deliver { .. }));
    }

    #[test]
    fn empty_allowlist_rejects_everything() {
        let p = SenderPolicy::allowlist(Vec::<String>::new());
        assert_eq!(decide(&p, &hook("+1", "x")), Decision::Reject(RejectReason::SenderBlocked));
    }

    #[test]
    fn links_are_never_previewed() {
        let mut p = SenderPolicy::allow_all();
        assert_eq!(decide(&p, &hook("a", "see http://x.example")), Decision::Deliver { no_preview: true });
        p.strip_link_previews = false;
        assert_eq!(decide(&p, &hook("a", "HTTPS://x.example")), Decision::Deliver { no_preview: true });
        assert_eq!(decide(&p, &hook("a", "no link, just ftp://x")), Decision::Deliver { no_preview: false });
    }

    #[test]
    fn oversize_body() {
        let p = SenderPolicy::allow_all();
        let body = "a".repeat(MAX_INBOUND_BODY + 1);
        assert_eq!(decide(&p, &hook("a", &body)), Decision::Reject(RejectReason::TooLarge));
        let body = "a".repeat(MAX_INBOUND_BODY);
        assert!(matches!(decide(&p, &hook("a", &body)), Decision::Deliver { .. }));
    }

    #[test]
    fn policy_json() {
        let p: SenderPolicy = serde_json::from_str(r#"{"mode":"allowlist","allowed":["+1"]}"#).unwrap();
        assert!(p.strip_link_previews);
        assert!(p.permits("+1") && !p.permits("+2"));
        let p: SenderPolicy = serde_json::from_str(r#"{"mode":"allow_all","strip_link_previews":false}"#).unwrap();
        assert!(p.permits("anyone"));
    }
}
