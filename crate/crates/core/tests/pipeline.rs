use std::path::Path;

use streamforge::pipeline::{PipelineError, Run, RunConfig, Stage, StageOutcome};

fn small_config(out: &Path) -> RunConfig {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut c = RunConfig::load(&root.join("configs/latin_square.toml")).unwrap();
    c.problem = root.join(&c.problem);
    c.out = out.to_path_buf();
    c.train_instances = vec!["n4".into(), "q10_1".into()];
    c.test_instances = vec!["q12_2".into(), "q15_1".into(), "r15_1".into()];
    c.cnn.epochs = 8;
    c
}

#[test]
fn stages_check_prerequisites_resume_and_skip() {
    let dir = tempfile::tempdir().unwrap();
    let run = Run::open(small_config(dir.path())).unwrap();
    assert!(matches!(
        run.run_stage(Stage::Validate),
        Err(PipelineError::Prerequisite { stage: Stage::Validate, missing: Stage::Pool })
    ));

    let first = run.run_all().unwrap();
    assert!(first.iter().all(|(_, o)| *o == StageOutcome::Ran));
    let race = std::fs::read_to_string(run.path("race/summary.json")).unwrap();

    let again = Run::open(small_config(dir.path())).unwrap();
    assert!(again.run_all().unwrap().iter().all(|(_, o)| *o == StageOutcome::Skipped));

    // a lost manifest reruns the stage from its checkpoint without solving
    std::fs::remove_file(again.path("manifests/validate.json")).unwrap();
    assert_eq!(again.run_stage(Stage::Validate).unwrap(), StageOutcome::Ran);
    assert_eq!(again.manifest(Stage::Validate).unwrap().summary["solves_run"], 0);
    std::fs::remove_file(again.path("manifests/race.json")).unwrap();
    again.run_stage(Stage::Race).unwrap();
    assert_eq!(std::fs::read_to_string(again.path("race/summary.json")).unwrap(), race);

    let mut changed = small_config(dir.path());
    changed.k = 2;
    let rerun = Run::open(changed).unwrap();
    assert_eq!(rerun.run_stage(Stage::Race).unwrap(), StageOutcome::Ran);
}
