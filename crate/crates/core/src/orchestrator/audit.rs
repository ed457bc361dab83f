use std::net::SocketAddr;
use std::time::Duration;

use uuid::Uuid;

use super::{digest_dir, InstanceState, Orchestrator, OrchestratorError};
use crate::app::{IsolationAuditReport, ProbeAction, ProbeOutcome, ProbeTargets, SiblingDigest};
use crate::instance::InstanceError;

const PROBE_TIMEOUT: Duration = Duration::from_secs(15);

impl Orchestrator {
    fn sibling_digests(&self, suspect: Uuid) -> Vec<(Uuid, String)> {
        let mut v: Vec<_> = self
            .all_slots()
            .iter()
            .filter(|s| s.spec.instance_id != suspect)
            .map(|s| {
                let d = digest_dir(&s.spec.sandbox_dir).unwrap_or_else(|e| format!("unreadable: {e}"));
                (s.spec.instance_id, d)
            })
            .collect();
        v.sort();
        v
    }

    /// Drives the suspect instance through the forbidden actions and checks
    /// the siblings afterwards. Returns an empty report when the suspect is
    /// not compromised. `exfil_addr` is the attacker endpoint the instance
    /// tries to reach.
    pub async fn audit_isolation(
        &self,
        suspect: Uuid,
        exfil_addr: Option<SocketAddr>,
    ) -> Result<IsolationAuditReport, OrchestratorError> {
        let slot = self.slot(suspect)?;
        let mut targets = ProbeTargets {
            exfil_addr,
            ..ProbeTargets::default()
        };
        for s in self.all_slots() {
            if s.spec.instance_id == suspect {
                continue;
            }
            targets.sibling_dirs.push(s.spec.sandbox_dir.clone());
            let i = s.info();
            if let (InstanceState::Running, Some(addr)) = (i.state, i.endpoint) {
                targets.sibling_controls.push(addr);
            }
        }
        let parent = slot
            .spec
            .sandbox_dir
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| self.data_dir().to_path_buf());
        targets.escape_paths = vec![
            parent.join(format!("escape-{suspect}")),
            std::env::temp_dir().join(format!("zc-escape-{suspect}")),
        ];
        for p in &targets.escape_paths {
            let _ = std::fs::remove_file(p);
        }

        let before = self.sibling_digests(suspect);
        let probe = self
            .with_admin(suspect, |c| {
                let targets = targets.clone();
                Box::pin(async move {
                    if !c.status().await?.compromised {
                        return Ok(None);
                    }
                    c.probe(targets, PROBE_TIMEOUT).await.map(Some)
                })
            })
            .await;
        let mut report = match probe {
            Ok(Some(r)) => r,
            Ok(None) => return Ok(IsolationAuditReport::default()),
            Err(OrchestratorError::Instance(InstanceError::Timeout)) => {
                return Err(OrchestratorError::ProbeTimeout)
            }
            Err(e) => return Err(e),
        };
        report.instance_id = Some(suspect);

        // Trust the filesystem over the instance's own account.
        for r in report.records.iter_mut() {
            if r.action == ProbeAction::EscapeWrite
                && r.outcome == ProbeOutcome::Denied
                && std::path::Path::new(&r.target).exists()
            {
                r.outcome = ProbeOutcome::Allowed;
                r.evidence = format!("file exists despite reported failure: {}", r.evidence);
            }
        }
        for p in &targets.escape_paths {
            let _ = std::fs::remove_file(p);
        }

        let after = self.sibling_digests(suspect);
        report.sibling_digests = before
            .into_iter()
            .map(|(id, b)| SiblingDigest {
                instance_id: id,
                after: after
                    .iter()
                    .find(|(a, _)| *a == id)
                    .map(|(_, d)| d.clone())
                    .unwrap_or_else(|| "gone".into()),
                before: b,
            })
            .collect();
        Ok(report)
    }
}
