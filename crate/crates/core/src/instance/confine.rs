//! Filesystem confinement for instance processes.
//!
//! Uses Landlock (unprivileged, Linux >= 5.13): after [`confine_to`] the
//! process and every thread it spawns later can only touch files beneath the
//! sandbox directory. Signal and abstract-socket scoping are added where the
//! kernel supports them.

use std::path::Path;

#[cfg(target_os = "linux")]
pub fn confine_to(dir: &Path) -> String {
    use landlock::{
        path_beneath_rules, Access, AccessFs, CompatLevel, Compatible, Ruleset, RulesetAttr,
        RulesetCreatedAttr, RulesetStatus, Scope, ABI,
    };

    let abi = ABI::V6;
    let result = Ruleset::default()
        .set_compatibility(CompatLevel::BestEffort)
        .handle_access(AccessFs::from_all(abi))
        .and_then(|r| r.scope(Scope::from_all(abi)))
        .and_then(|r| r.create())
        .and_then(|r| r.add_rules(path_beneath_rules([dir], AccessFs::from_all(abi))))
        .and_then(|r| r.restrict_self());
    match result {
        Ok(status) => match status.ruleset {
            RulesetStatus::FullyEnforced => "landlock:full".into(),
            RulesetStatus::PartiallyEnforced => "landlock:partial".into(),
            RulesetStatus::NotEnforced => "none".into(),
        },
        Err(e) => format!("none ({e})"),
    }
}

#[cfg(not(target_os = "linux"))]
pub fn confine_to(_dir: &Path) -> String {
    "none (unsupported platform)".into()
}
