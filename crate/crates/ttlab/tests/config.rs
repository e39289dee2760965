use ttlab::config::{ExperimentConfig, Task, Times};
use ttlab::LabError;

fn schema_error(text: &str) -> String {
    match ExperimentConfig::from_toml(text) {
        Err(LabError::Schema(msg)) => msg,
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn explicit_system_round_trips() {
    let text = r#"
seed = 4
workers = 1

[system.base]
kind = "sft"
transitions = [[1, 1], [1, 0]]

[system.cocycle]
kind = "lattice"
values = [[[1], [1]], [[0], [0]]]

[system.fiber]
kind = "rotation"
alpha = 0.25

[[system.observables]]
base = [1.0, 2.0]
cos = [{ k = [1] }]

[[system.observables]]
terms = [{ k = [2], re = 0.5, im = 0.1 }, { k = [-2], re = 0.5, im = -0.1 }]

[[tasks]]
task = "exact-corr"
times = [0, 3, 9]
pair = [0, 1]

[[tasks]]
task = "partitions"
s = 3
times = [0, 2, 5]
rule = { rule = "power", scale = 1.0, exponent = 0.5 }
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let built = cfg.system.as_ref().unwrap().build().unwrap();
    assert_eq!(built.observables.len(), 2);
    assert_eq!(cfg.tasks[0], Task::ExactCorr { times: Times::List(vec![0, 3, 9]), pair: Some([0, 1]) });
    let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn cross_field_errors() {
    let preset_and_base = r#"
[system]
preset = "golden-rotation"
[system.fiber]
kind = "rotation"
alpha = 0.1
[[tasks]]
task = "tau-dist"
n = 2
"#;
    assert!(schema_error(preset_and_base).contains("preset excludes"));

    let bad_index = "[system]\npreset = \"golden-rotation\"\n[[tasks]]\ntask = \"exact-corr\"\ntimes = [1]\npair = [0, 3]\n";
    assert!(schema_error(bad_index).contains("observable index 3"));

    let no_system = "[[tasks]]\ntask = \"tau-dist\"\nn = 2\n";
    assert!(schema_error(no_system).contains("[system]"));

    let unknown_scenario = "[[tasks]]\ntask = \"scenario\"\nid = \"S99\"\n";
    assert!(schema_error(unknown_scenario).contains("S99"));

    let not_primitive = r#"
[system.base]
kind = "sft"
transitions = [[0, 1], [1, 0]]
[system.cocycle]
kind = "lattice"
values = [[[0], [1]], [[1], [0]]]
[system.fiber]
kind = "rotation"
alpha = 0.1
[[system.observables]]
cos = [{ k = [1] }]
[[tasks]]
task = "tau-dist"
n = 2
"#;
    assert!(schema_error(not_primitive).contains("primitive"));

    let nested_unknown = "[system]\npreset = \"golden-rotation\"\n[[system.observables]]\ncos = [{ k = [1], phase = 2 }]\n[[tasks]]\ntask = \"tau-dist\"\nn = 1\n";
    assert!(schema_error(nested_unknown).contains("phase"));
}

#[test]
fn exit_codes() {
    assert_eq!(LabError::Schema(String::new()).exit_code(), 2);
    assert_eq!(LabError::Tolerance(String::new()).exit_code(), 1);
    let budget: LabError = ttlab_core::Error::BudgetExceeded { required: 2, budget: 1 }.into();
    assert_eq!(budget.exit_code(), 3);
}
