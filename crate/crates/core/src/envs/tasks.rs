//! The built-in task library: four office tasks and ten craft tasks, shipped
//! as `.rm` fixtures and parsed at first use.

use std::sync::Arc;

use super::EnvId;
use crate::dsl::parse_rm;
use crate::rm::SimpleRewardMachine;

/// A named task: a validated machine plus the world it belongs to.
#[derive(Clone, Debug)]
pub struct TaskSpec {
    pub name: String,
    pub number: usize,
    pub env: EnvId,
    pub rm: Arc<SimpleRewardMachine>,
}

const OFFICE_SOURCES: [(&str, &str); 4] = [
    ("coffee", include_str!("../../../../tasks/office_1_coffee.rm")),
    ("mail", include_str!("../../../../tasks/office_2_mail.rm")),
    ("patrol", include_str!("../../../../tasks/office_3_patrol.rm")),
    ("coffee-mail", include_str!("../../../../tasks/office_4_coffee_mail.rm")),
];

const CRAFT_SOURCES: [(&str, &str); 10] = [
    ("plank", include_str!("../../../../tasks/craft_01_plank.rm")),
    ("stick", include_str!("../../../../tasks/craft_02_stick.rm")),
    ("cloth", include_str!("../../../../tasks/craft_03_cloth.rm")),
    ("rope", include_str!("../../../../tasks/craft_04_rope.rm")),
    ("bridge", include_str!("../../../../tasks/craft_05_bridge.rm")),
    ("bed", include_str!("../../../../tasks/craft_06_bed.rm")),
    ("axe", include_str!("../../../../tasks/craft_07_axe.rm")),
    ("shears", include_str!("../../../../tasks/craft_08_shears.rm")),
    ("gold", include_str!("../../../../tasks/craft_09_gold.rm")),
    ("gem", include_str!("../../../../tasks/craft_10_gem.rm")),
];

fn build(env: EnvId, sources: &[(&str, &str)]) -> Vec<TaskSpec> {
    sources
        .iter()
        .enumerate()
        .map(|(i, (name, src))| {
            let rm = parse_rm(src).unwrap_or_else(|e| {
                panic!("shipped task fixture `{name}` must parse and validate: {e}")
            });
            TaskSpec {
                name: (*name).to_string(),
                number: i + 1,
                env,
                rm: Arc::new(rm),
            }
        })
        .collect()
}

/// The four office tasks, in protocol order.
pub fn office_tasks() -> Vec<TaskSpec> {
    build(EnvId::Office, &OFFICE_SOURCES)
}

/// The ten craft tasks, in protocol order.
pub fn craft_tasks() -> Vec<TaskSpec> {
    build(EnvId::Craft, &CRAFT_SOURCES)
}

/// Raw fixture text by env, for DSL round-trip checks and the CLI.
pub fn task_sources(env: EnvId) -> Vec<(&'static str, &'static str)> {
    match env {
        EnvId::Office => OFFICE_SOURCES.to_vec(),
        EnvId::Craft => CRAFT_SOURCES.to_vec(),
    }
}
