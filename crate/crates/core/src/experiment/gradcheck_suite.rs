use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::losses::VerificationSignal;
use crate::net::{NetworkConfig, SiameseModel, TapeParams};
use crate::tensor::gradcheck::{grad_check, GradCheckOptions};
use crate::tensor::tape::{Fault, Tape, Var};
use crate::tensor::{ConvSpec, PoolSpec, Tensor};

pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;
pub const SUITE_SEEDS: u64 = 5;
/// Coordinates sampled per parameter tensor in the whole-model check.
pub const MODEL_COORDS_PER_TENSOR: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckItem {
    pub name: &'static str,
    pub instances: usize,
    pub coords_checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckItem {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }

    pub fn line(&self) -> String {
        format!(
            "{:<14} {} instances {:>6} coords  max_rel_error {:.3e}  tol {:.0e}  {}",
            self.name,
            self.instances,
            self.coords_checked,
            self.max_rel_error,
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Random values at least `gap` away from zero, so kinks stay outside the
/// finite-difference stencil.
fn away_from_zero(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(gap..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn check_item<F, G>(name: &'static str, tolerance: f64, fault: Option<Fault>, mut make: G) -> Result<GradCheckItem>
where
    G: FnMut(&mut ChaCha8Rng) -> (Vec<Tensor>, F, Option<usize>),
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut worst = 0.0f64;
    let mut coords = 0;
    for seed in 0..SUITE_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inputs, f, max_coords) = make(&mut rng);
        let opts = GradCheckOptions {
            max_coords_per_input: max_coords,
            seed,
            fault,
            ..Default::default()
        };
        let report = grad_check(f, &inputs, &opts)?;
        worst = worst.max(report.max_rel_error);
        coords += report.coords_checked;
    }
    Ok(GradCheckItem {
        name,
        instances: SUITE_SEEDS as usize,
        coords_checked: coords,
        max_rel_error: worst,
        tolerance,
    })
}

/// Every layer, every loss and the tiny model's joint loss, each on
/// [`SUITE_SEEDS`] seeded instances. `fault` corrupts a backward rule.
pub fn gradcheck_suite(fault: Option<Fault>) -> Result<Vec<GradCheckItem>> {
    let mut items = Vec::new();

    items.push(check_item("conv3d", LAYER_TOLERANCE, fault, |rng| {
        let inputs = vec![
            Tensor::randn(&[2, 3, 4, 4], 1.0, rng),
            Tensor::randn(&[3, 2, 3, 3, 3], 0.5, rng),
            Tensor::randn(&[3], 0.5, rng),
        ];
        let probe = Tensor::randn(&[3, 3, 4, 4], 1.0, rng);
        let f = move |t: &mut Tape, v: &[Var]| {
            let y = t.conv3d(v[0], v[1], v[2], ConvSpec::same_3x3x3(3))?;
            t.dot_const(y, probe.clone())
        };
        (inputs, f, None)
    })?);

    items.push(check_item("maxpool3d", LAYER_TOLERANCE, fault, |rng| {
        // A shuffled grid keeps every window's maximum well separated.
        let n = 2 * 4 * 5 * 5;
        let mut values: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
        for i in (1..n).rev() {
            values.swap(i, rng.random_range(0..=i));
        }
        let inputs = vec![Tensor::new(&[2, 4, 5, 5], values).expect("sized")];
        let spec = PoolSpec::temporal(2, 2).with_spatial_padding(1);
        let probe = Tensor::randn(&[2, 2, 3, 3], 1.0, rng);
        let f = move |t: &mut Tape, v: &[Var]| {
            let y = t.maxpool3d(v[0], spec)?;
            t.dot_const(y, probe.clone())
        };
        (inputs, f, None)
    })?);

    items.push(check_item("fc", LAYER_TOLERANCE, fault, |rng| {
        let inputs = vec![
            Tensor::randn(&[7], 1.0, rng),
            Tensor::randn(&[5, 7], 0.5, rng),
            Tensor::randn(&[5], 0.5, rng),
        ];
        let probe = Tensor::randn(&[5], 1.0, rng);
        let f = move |t: &mut Tape, v: &[Var]| {
            let y = t.linear(v[0], v[1], v[2])?;
            t.dot_const(y, probe.clone())
        };
        (inputs, f, None)
    })?);

    items.push(check_item("relu", LAYER_TOLERANCE, fault, |rng| {
        let inputs = vec![away_from_zero(&[2, 3, 4], 0.05, rng)];
        let probe = Tensor::randn(&[2, 3, 4], 1.0, rng);
        let f = move |t: &mut Tape, v: &[Var]| {
            let y = t.relu(v[0])?;
            t.dot_const(y, probe.clone())
        };
        (inputs, f, None)
    })?);

    items.push(check_item("softmax", LAYER_TOLERANCE, fault, |rng| {
        let inputs = vec![Tensor::randn(&[6], 2.0, rng)];
        let probe = Tensor::randn(&[6], 1.0, rng);
        let f = move |t: &mut Tape, v: &[Var]| {
            let y = t.softmax(v[0])?;
            t.dot_const(y, probe.clone())
        };
        (inputs, f, None)
    })?);

    items.push(check_item("abs_diff", LAYER_TOLERANCE, fault, |rng| {
        let a = Tensor::randn(&[9], 1.0, rng);
        let gap = away_from_zero(&[9], 0.05, rng);
        let b = Tensor::from_fn(&[9], |i| a.data()[i] + gap.data()[i]);
        let probe = Tensor::randn(&[9], 1.0, rng);
        let f = move |t: &mut Tape, v: &[Var]| {
            let y = t.abs_diff(v[0], v[1])?;
            t.dot_const(y, probe.clone())
        };
        (vec![a, b], f, None)
    })?);

    items.push(check_item("identification", LAYER_TOLERANCE, fault, |rng| {
        let inputs = vec![Tensor::randn(&[5], 1.5, rng)];
        let label = rng.random_range(0..5);
        let f = move |t: &mut Tape, v: &[Var]| {
            let p = t.softmax(v[0])?;
            t.nll(p, label)
        };
        (inputs, f, None)
    })?);

    items.push(check_item("verification", LAYER_TOLERANCE, fault, |rng| {
        let f1 = Tensor::randn(&[6], 1.0, rng);
        let gap = away_from_zero(&[6], 0.05, rng);
        let f2 = Tensor::from_fn(&[6], |i| f1.data()[i] + gap.data()[i]);
        let inputs = vec![f1, f2, Tensor::randn(&[2, 6], 0.5, rng), Tensor::randn(&[2], 0.5, rng)];
        let s = if rng.random_bool(0.5) {
            VerificationSignal::Same
        } else {
            VerificationSignal::Different
        };
        let f = move |t: &mut Tape, v: &[Var]| {
            let e = t.abs_diff(v[0], v[1])?;
            let z = t.linear(e, v[2], v[3])?;
            let p = t.softmax(z)?;
            t.nll(p, s.index())
        };
        (inputs, f, None)
    })?);

    items.push(check_item("contrastive", LAYER_TOLERANCE, fault, |rng| {
        // Close enough that the hinge is active for different-class pairs.
        let a = Tensor::randn(&[6], 1.0, rng);
        let b = Tensor::from_fn(&[6], |i| a.data()[i] + 0.1 + 0.1 * (i as f64));
        let same = rng.random_bool(0.5);
        let f = move |t: &mut Tape, v: &[Var]| t.contrastive(v[0], v[1], same, 1.0);
        (vec![a, b], f, None)
    })?);

    items.push(check_item("joint", LAYER_TOLERANCE, fault, |rng| {
        let f1 = Tensor::randn(&[6], 1.0, rng);
        let gap = away_from_zero(&[6], 0.05, rng);
        let f2 = Tensor::from_fn(&[6], |i| f1.data()[i] + gap.data()[i]);
        let inputs = vec![
            f1,
            f2,
            Tensor::randn(&[4, 6], 0.5, rng),
            Tensor::randn(&[4], 0.5, rng),
            Tensor::randn(&[2, 6], 0.5, rng),
            Tensor::randn(&[2], 0.5, rng),
        ];
        let (y1, y2) = (rng.random_range(0..4), rng.random_range(0..4));
        let lambda = rng.random_range(0.0..2.0);
        let s = VerificationSignal::from_labels(y1, y2);
        let f = move |t: &mut Tape, v: &[Var]| {
            let z1 = t.linear(v[0], v[2], v[3])?;
            let p1 = t.softmax(z1)?;
            let l1 = t.nll(p1, y1)?;
            let z2 = t.linear(v[1], v[2], v[3])?;
            let p2 = t.softmax(z2)?;
            let l2 = t.nll(p2, y2)?;
            let e = t.abs_diff(v[0], v[1])?;
            let zv = t.linear(e, v[4], v[5])?;
            let pv = t.softmax(zv)?;
            let lv = t.nll(pv, s.index())?;
            t.weighted_sum(&[(l1, 1.0), (l2, 1.0), (lv, lambda)])
        };
        (inputs, f, None)
    })?);

    items.push(check_item("tiny_model", MODEL_TOLERANCE, fault, |rng| {
        let seed = rng.random::<u64>();
        let model = SiameseModel::build(NetworkConfig::tiny(5).with_seed(seed)).expect("tiny preset builds");
        let shape = model.config().input_shape;
        let clip_1 = Tensor::randn(&shape, 1.0, rng);
        let clip_2 = Tensor::randn(&shape, 1.0, rng);
        let (y1, y2) = (rng.random_range(0..5), rng.random_range(0..5));
        let inputs = model.parameters().to_vec();
        let f = move |t: &mut Tape, v: &[Var]| {
            let p = TapeParams::from_vars(v.to_vec());
            let x1 = t.constant(clip_1.clone())?;
            let x2 = t.constant(clip_2.clone())?;
            let f1 = model.features_on_tape(t, &p, x1)?;
            let f2 = model.features_on_tape(t, &p, x2)?;
            let p1 = model.identify_on_tape(t, &p, f1)?;
            let p2 = model.identify_on_tape(t, &p, f2)?;
            let pv = model.verify_on_tape(t, &p, f1, f2)?;
            let l1 = t.nll(p1, y1)?;
            let l2 = t.nll(p2, y2)?;
            let lv = t.nll(pv, VerificationSignal::from_labels(y1, y2).index())?;
            t.weighted_sum(&[(l1, 1.0), (l2, 1.0), (lv, 1.0)])
        };
        (inputs, f, Some(MODEL_COORDS_PER_TENSOR))
    })?);

    Ok(items)
}
