mod common;

use proptest::prelude::*;

use hjb_core::network::{forward, grad_x, init_xavier, Architecture, NetParams};
use hjb_core::problems::ControlProblem;
use hjb_core::sampling::uniform_points;
use hjb_core::sdre::{DataMode, DataPoint, GradientDataset};
use hjb_core::training::{
    data_loss, hjb_residual, residual_loss, run_mode, train_supervised, two_step, Adam, AdamConfig,
    CollocationSet, Phase, Seeds, TrainConfig, TrainMode,
};

use common::{central_diff, random_net, rel_err, rng};

fn alpha() -> f64 {
    (1.0 + 6f64.sqrt()) / 5.0
}

fn beta() -> f64 {
    (1.0 - 6f64.sqrt()) / 5.0
}

fn dataset(points: Vec<DataPoint>) -> GradientDataset {
    GradientDataset {
        points,
        problem_tag: "test".into(),
        seed: 0,
        mode: DataMode::Pointwise,
    }
}

fn constant_net(n: usize, c: f64) -> NetParams {
    let mut p = NetParams::zeros(Architecture::new(n, vec![3]).unwrap());
    p.bias_mut(1)[0] = c;
    p
}

/// Targets taken from `params` itself.
fn self_dataset(params: &NetParams, xs: &[Vec<f64>]) -> GradientDataset {
    dataset(
        xs.iter()
            .map(|x| DataPoint {
                x: x.clone(),
                v: forward(params, x).unwrap(),
                dv: grad_x(params, x).unwrap(),
            })
            .collect(),
    )
}

fn fd_loss(params: &NetParams, loss: impl Fn(&NetParams) -> f64) -> Vec<f64> {
    let arch = params.architecture().clone();
    central_diff(params.as_slice(), 1e-6, |theta| {
        loss(&NetParams::from_flat(arch.clone(), theta.to_vec()).unwrap())
    })
}

/// Short schedules so whole pipelines run in well under a second.
fn quick_config(problem: &ControlProblem) -> TrainConfig {
    let mut c = TrainConfig::defaults_for(problem);
    c.hidden_widths = vec![6, 6];
    c.supervised_phases = vec![Phase::new(40, 1e-2)];
    c.residual_phases = vec![Phase::new(40, 1e-2)];
    c.n1 = 8;
    c.n2 = 16;
    c
}

#[test]
fn residual_vanishes_for_both_linear_roots() {
    let lin = ControlProblem::linear2d();
    for x in uniform_points(lin.domain(), 3, 50) {
        for root in [alpha(), beta()] {
            let g: Vec<f64> = x.iter().map(|v| root * v).collect();
            assert!(hjb_residual(&lin, &x, &g).unwrap().abs() < 1e-12);
        }
    }
    for p in [lin, ControlProblem::cucker_smale(5).unwrap()] {
        let z = vec![0.0; p.dim()];
        assert_eq!(hjb_residual(&p, &z, &z).unwrap(), 0.0);
    }
}

#[test]
fn data_loss_of_a_constant_net_at_one_point() {
    let ds = dataset(vec![DataPoint {
        x: vec![0.3, -0.2],
        v: 2.5,
        dv: vec![1.0, 1.0],
    }]);
    let loss = data_loss(&constant_net(2, 0.75), &ds, 1.0, 0.0).unwrap();
    assert!((loss.value - 1.75f64.powi(2)).abs() < 1e-14);
    let zero = data_loss(&constant_net(2, 0.75), &ds, 0.0, 0.0).unwrap();
    assert_eq!(zero.value, 0.0);
    assert!(zero.grad.iter().all(|&g| g == 0.0));
}

#[test]
fn data_loss_of_a_memorizing_net_is_zero() {
    let (params, _) = random_net(&mut rng(9));
    let xs = uniform_points(&hjb_core::problems::Domain::cube(params.input_dim(), -1.0, 1.0).unwrap(), 2, 12);
    let loss = data_loss(&params, &self_dataset(&params, &xs), 1.0, 1.0).unwrap();
    assert_eq!(loss.value, 0.0);
    assert!(loss.grad.iter().all(|&g| g == 0.0));
}

#[test]
fn empty_inputs_are_rejected() {
    let p = constant_net(2, 0.0);
    assert!(data_loss(&p, &dataset(vec![]), 1.0, 1.0).is_err());
    assert!(CollocationSet::new(&ControlProblem::linear2d(), &[]).is_err());
}

#[test]
fn residual_loss_gradient_on_the_ten_dimensional_benchmark() {
    let cs = ControlProblem::cucker_smale(5).unwrap();
    let params = init_xavier(&Architecture::new(10, vec![5, 4]).unwrap(), 4);
    let set = CollocationSet::new(&cs, &uniform_points(cs.domain(), 8, 12)).unwrap();
    let exact = residual_loss(&params, &set).unwrap().grad;
    let fd = fd_loss(&params, |p| residual_loss(p, &set).unwrap().value);
    assert!(rel_err(&exact, &fd, 1e-8) < 1e-5, "{}", rel_err(&exact, &fd, 1e-8));
}

#[test]
fn adam_first_step_moves_each_coordinate_by_the_learning_rate() {
    let mut opt = Adam::new(3, AdamConfig::default());
    let mut p = vec![1.0, 2.0, 3.0];
    opt.step(&mut p, &[0.5, -3.0, 0.0], 0.01);
    assert!((p[0] - 0.99).abs() < 1e-9);
    assert!((p[1] - 2.01).abs() < 1e-9);
    assert_eq!(p[2], 3.0);
    let mut fresh = Adam::new(2, AdamConfig::default());
    let mut q = vec![4.0, -4.0];
    fresh.step(&mut q, &[0.0, 0.0], 0.1);
    assert_eq!(q, vec![4.0, -4.0]);
    assert_eq!(fresh.steps_taken(), 1);
}

#[test]
fn supervised_step_fits_linear_data() {
    let lin = ControlProblem::linear2d();
    let c = TrainConfig::defaults_for(&lin);
    let ds = hjb_core::sdre::generate_dataset(&lin, 20, 0, DataMode::Pointwise).unwrap();
    let out = train_supervised(&lin, &ds, &c, None).unwrap();
    let first = out.trace.records[0].data_loss.unwrap();
    assert!(out.final_loss < 1e-4, "final data loss {:e}", out.final_loss);
    assert!(out.final_loss < 1e-4 * first);
}

#[test]
fn trace_iterations_increase_across_stages() {
    let lin = ControlProblem::linear2d();
    let out = two_step(&lin, &quick_config(&lin), None).unwrap();
    let its: Vec<usize> = out.trace.records.iter().map(|r| r.iteration).collect();
    assert!(its.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(out.dataset.as_ref().map(|d| d.len()), Some(8));
    assert!(out.theta_dat.is_some());
}

#[test]
fn training_is_bitwise_deterministic() {
    let nl = ControlProblem::nonlinear2d(1.0).unwrap();
    let c = quick_config(&nl);
    let a = two_step(&nl, &c, None).unwrap();
    let b = two_step(&nl, &c, None).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.trace, b.trace);
    let mut other = c.clone();
    other.seeds = Seeds::all(1);
    assert_ne!(two_step(&nl, &other, None).unwrap().params, a.params);
}

#[test]
fn two_step_without_data_is_residual_only() {
    let lin = ControlProblem::linear2d();
    let mut c = quick_config(&lin);
    c.n1 = 0;
    let a = two_step(&lin, &c, None).unwrap();
    let b = run_mode(&lin, &c, TrainMode::ResidualOnly, None, None).unwrap();
    assert_eq!(a.params, b.params);
    assert!(a.theta_dat.is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn data_loss_gradient_matches_finite_differences(seed in any::<u64>(), l1 in 0.0..2.0f64, l2 in 0.0..2.0f64) {
        let mut r = rng(seed);
        let (params, x) = random_net(&mut r);
        let (other, _) = random_net(&mut r);
        let n = x.len();
        // Targets from an unrelated net of the same input size, else constants.
        let xs: Vec<Vec<f64>> = (0..4).map(|k| x.iter().map(|v| v * (0.5 + 0.3 * k as f64)).collect()).collect();
        let ds = if other.input_dim() == n {
            self_dataset(&other, &xs)
        } else {
            dataset(xs.iter().map(|x| DataPoint { x: x.clone(), v: 1.0, dv: vec![0.5; n] }).collect())
        };
        let loss = data_loss(&params, &ds, l1, l2).unwrap();
        prop_assert!(loss.value >= 0.0);
        let fd = fd_loss(&params, |p| data_loss(p, &ds, l1, l2).unwrap().value);
        prop_assert!(rel_err(&loss.grad, &fd, 1e-7) < 1e-5);
    }

    #[test]
    fn residual_loss_gradient_matches_finite_differences(seed in any::<u64>(), eps in 0.1..3.0f64) {
        let mut r = rng(seed);
        let problem = ControlProblem::nonlinear2d(eps).unwrap();
        let params = init_xavier(&Architecture::new(2, vec![4, 3]).unwrap(), rand::Rng::gen(&mut r));
        let set = CollocationSet::new(&problem, &uniform_points(problem.domain(), rand::Rng::gen(&mut r), 10)).unwrap();
        let loss = residual_loss(&params, &set).unwrap();
        prop_assert!(loss.value >= 0.0);
        let fd = fd_loss(&params, |p| residual_loss(p, &set).unwrap().value);
        prop_assert!(rel_err(&loss.grad, &fd, 1e-7) < 1e-5);
    }
}
