use std::path::PathBuf;

use cmslab::catalog;
use cmslab::pipeline::ExperimentPlan;
use cmslab::{MarkovSystem, SystemConfig};

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_systems_match_the_catalog() {
    for (file, expected) in [
        ("sys_a.json", catalog::sys_a()),
        ("sys_b.json", catalog::sys_b()),
        ("sys_c.json", catalog::sys_c()),
    ] {
        let text = std::fs::read_to_string(configs_dir().join(file)).unwrap();
        let cfg = SystemConfig::from_json(&text).unwrap();
        assert_eq!(cfg, expected, "{file}");
        MarkovSystem::from_config(&cfg).unwrap();
    }
}

#[test]
fn shipped_plans_load_and_pass_their_checks() {
    for file in ["plan_sys_a.json", "plan_sys_b.json", "plan_sys_c.json"] {
        let plan = ExperimentPlan::from_file(&configs_dir().join(file)).unwrap();
        let sys = cmslab::pipeline::load_system(&plan.system).unwrap();
        plan.check(&sys).unwrap_or_else(|e| panic!("{file}: {e}"));
    }
}
