use std::sync::atomic::Ordering;
use std::time::Duration;

use tokio::task::JoinHandle;

use super::{now_ms, InstanceState, Orchestrator};

/// Background reset loop. Dropping the handle stops it.
pub struct SchedulerHandle {
    task: JoinHandle<()>,
}

impl SchedulerHandle {
    pub fn stop(self) {}
}

impl Drop for SchedulerHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

impl Orchestrator {
    /// Checks every `tick` for instances past their reset deadline and
    /// resets them. A reset never overlaps another reset of the same
    /// instance. The worst-case delay past a deadline is one tick plus
    /// the restore time.
    pub fn schedule_resets(&self, tick: Duration) -> SchedulerHandle {
        let orch = self.clone();
        let task = tokio::spawn(async move {
            let mut interval = tokio::time::interval(tick);
            interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                interval.tick().await;
                let now = now_ms();
                for slot in orch.all_slots() {
                    let due = {
                        let i = slot.info();
                        i.state == InstanceState::Running && i.next_reset_at_ms <= now
                    };
                    if !due || slot.reset_in_flight.swap(true, Ordering::AcqRel) {
                        continue;
                    }
                    let orch = orch.clone();
                    tokio::spawn(async move {
                        let id = slot.spec.instance_id;
                        if let Err(e) = orch.reset(id).await {
                            tracing::warn!(%id, "scheduled reset failed: {e}");
                        }
                        slot.reset_in_flight.store(false, Ordering::Release);
                    });
                }
            }
        });
        SchedulerHandle { task }
    }
}
