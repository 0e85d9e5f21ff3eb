use bcns::harness::{run_scenario, sweep, SweepPlan};
use bcns::io::config::RunConfig;

fn small_base() -> RunConfig {
    let mut c = RunConfig::default();
    c.grid.n = 32;
    c.integrator.t_end = 0.5;
    c.estimates.calibrate_c1 = false;
    c
}

#[test]
fn single_cell_equals_run_scenario() {
    let base = small_base();
    let plan = SweepPlan {
        a_w: vec![0.75],
        eps: vec![2e-3],
        n0: vec![1],
    };
    let res = sweep(&base, &plan).unwrap();
    assert_eq!(res.cells.len(), 1);
    let direct = run_scenario(&SweepPlan::cell_config(&base, 0.75, 2e-3, 1)).unwrap();
    assert_eq!(res.cells[0].outcome.as_ref(), Some(&direct.outcome));
}

#[test]
fn two_by_two_plan_is_complete_and_deterministic() {
    let base = small_base();
    let plan = SweepPlan {
        a_w: vec![0.5, 1.0],
        eps: vec![1e-3, 1e-2],
        n0: vec![1],
    };
    let a = sweep(&base, &plan).unwrap();
    assert_eq!(a.cells.len(), 4);
    assert!(a.cells.iter().all(|c| c.outcome.is_some() != c.error.is_some()));
    assert_eq!(a.monotonicity.len(), 2);
    assert!(a.monotonicity.iter().all(|m| m.constants.len() == 2));
    let b = sweep(&base, &plan).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.table(), b.table());
}

#[test]
fn failing_cells_are_recorded() {
    let mut base = small_base();
    base.scenario.initial.band_coupling = 1;
    // eps_v = 0 with a coupled band cannot be generated
    let plan = SweepPlan {
        a_w: vec![0.5],
        eps: vec![0.0, 1e-3],
        n0: vec![1],
    };
    let res = sweep(&base, &plan).unwrap();
    assert_eq!(res.cells.len(), 2);
    assert!(res.cells[0].error.is_some() && res.cells[0].outcome.is_none());
    assert!(res.cells[1].outcome.is_some());
    assert!(res.pass_rate < 1.0);
}

#[test]
fn empty_plan_is_rejected() {
    let plan = SweepPlan {
        a_w: vec![],
        eps: vec![1e-3],
        n0: vec![1],
    };
    assert!(sweep(&small_base(), &plan).is_err());
}
