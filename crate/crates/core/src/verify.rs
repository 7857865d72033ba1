//! Named verification suites over the library's analytic claims, with a
//! pass/fail status and an observed margin per suite. The CLI `verify`
//! command drives these; the margins quantify how far each property is
//! from its tolerance (positive = pass with room to spare).

use rand::Rng;

use crate::adversary::{
    audit_membership, build_grid, filter_grid_kept, FoolingFamily, FoolingPair, SampleTrace,
    Variant,
};
use crate::base_maps::{diagonal_affine_map, identity_map, iresnet_map};
use crate::error::Error;
use crate::geometry::AxisBox;
use crate::hat::{
    apply_shift, hat_as_fnn, hat_value, phi_as_cnn, phi_value, theta_block, HatParams, Sign,
};
use crate::metrics::{
    lipschitz_sample_estimate, lp_distance, sup_distance_fooling, Lp, QuadratureSpec,
};
use crate::nets::{ResidualBlock, ResidualNetwork};
use crate::num::{derive_rng, sup_dist, sup_norm};

/// Outcome of one verification suite.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    /// Stable identifier of the verified property.
    pub lemma: String,
    pub passed: bool,
    /// Smallest observed slack against the suite's tolerance; negative
    /// means the property was violated by that much.
    pub margin: f64,
    pub detail: String,
}

impl SuiteOutcome {
    fn new(lemma: &str, margin: f64, detail: String) -> Self {
        Self {
            lemma: lemma.to_string(),
            passed: margin >= 0.0,
            margin,
            detail,
        }
    }

    fn failure(lemma: &str, detail: String) -> Self {
        Self {
            lemma: lemma.to_string(),
            passed: false,
            margin: f64::NEG_INFINITY,
            detail,
        }
    }
}

/// Deliberate fault injection for exercising the failure paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Feed the block constructors an amplitude at the cap.
    AmplitudeTooLarge,
}

impl Fault {
    pub fn parse(s: &str) -> crate::Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "amplitude-too-large" | "amplitude" => Ok(Fault::AmplitudeTooLarge),
            other => Err(Error::InvalidInput(format!("unknown fault '{other}'"))),
        }
    }
}

fn random_valid_params(rng: &mut impl Rng, d: usize) -> HatParams {
    let z: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..0.9)).collect();
    let m = rng.random_range(1.0..6.0);
    let c = rng.random_range(0.05..0.95) / (3.0 * d as f64 * m);
    let v = if rng.random_bool(0.5) { Sign::Plus } else { Sign::Minus };
    HatParams::new(z, m, c, v).unwrap()
}

/// Hat support and range: zero outside the support cube, values in
/// `[0, c]`, at least `c/2` on the inner cube, exactly `c/2` at the
/// inner-cube corner.
pub fn hat_support_suite(seed: u64) -> SuiteOutcome {
    let mut rng = derive_rng(seed, 1);
    let mut margin = f64::INFINITY;
    for _ in 0..100 {
        let d = rng.random_range(1usize..=6);
        let p = random_valid_params(&mut rng, d);
        let support = p.support_cube();
        for _ in 0..100 {
            let x: Vec<f64> = p
                .z
                .iter()
                .map(|zi| zi + rng.random_range(-3.0 / p.m..3.0 / p.m))
                .collect();
            let v = hat_value(&x, &p);
            margin = margin.min(v).min(p.c - v);
            if !support.contains(&x) && v != 0.0 {
                return SuiteOutcome::failure(
                    "hat_support",
                    format!("nonzero value {v:.3e} outside the support cube"),
                );
            }
        }
        let inner = p.inner_cube();
        for _ in 0..100 {
            let x = inner.sample(&mut rng);
            margin = margin.min(hat_value(&x, &p) - p.c / 2.0);
        }
        let corner: Vec<f64> = p
            .z
            .iter()
            .map(|zi| zi + 1.0 / (2.0 * d as f64 * p.m))
            .collect();
        let corner_err = (hat_value(&corner, &p) - p.c / 2.0).abs();
        margin = margin.min(1e-12 - corner_err);
    }
    SuiteOutcome::new("hat_support", margin, "range, support, and inner-cube bounds".into())
}

/// Sampled difference quotients of the hat stay below `3cdM` (plus 1e-9).
pub fn hat_lipschitz_suite(seed: u64) -> SuiteOutcome {
    let mut rng = derive_rng(seed, 2);
    let mut margin = f64::INFINITY;
    for _ in 0..20 {
        let d = rng.random_range(1usize..=4);
        let p = random_valid_params(&mut rng, d);
        let domain = AxisBox::cube(&p.z, 2.0 / p.m);
        let est = lipschitz_sample_estimate(|x| vec![hat_value(x, &p)], &domain, 5_000, rng.random());
        margin = margin.min(p.lip_bound() + 1e-9 - est);
    }
    SuiteOutcome::new("hat_lipschitz", margin, "difference quotients vs 3cdM".into())
}

/// Residual-block variant: sup norm equals the hat value, the FNN
/// realization matches the direct formula, and the amplitude guard fires.
pub fn theta_block_suite(seed: u64, fault: Option<Fault>) -> SuiteOutcome {
    let mut rng = derive_rng(seed, 3);
    if fault == Some(Fault::AmplitudeTooLarge) {
        // injected fault: amplitude exactly at the cap must be rejected
        let p = HatParams::new(vec![0.5, 0.5], 2.0, 1.0 / 12.0, Sign::Plus).unwrap();
        return match theta_block(&p) {
            Err(Error::AmplitudeTooLarge { c, cap }) => SuiteOutcome::failure(
                "theta_block",
                format!("injected fault surfaced: amplitude {c} at cap {cap} rejected"),
            ),
            other => SuiteOutcome::failure(
                "theta_block",
                format!("injected fault NOT surfaced, got {other:?}"),
            ),
        };
    }
    let mut margin = f64::INFINITY;
    for _ in 0..50 {
        let d = rng.random_range(1usize..=4);
        let p = random_valid_params(&mut rng, d);
        let block = match theta_block(&p) {
            Ok(b) => b,
            Err(e) => return SuiteOutcome::failure("theta_block", e.to_string()),
        };
        margin = margin.min(1.0 - block.lip_bound());
        let net = block.as_fnn().unwrap();
        if net.architecture().dims != vec![d, 2 * d, 1, d] {
            return SuiteOutcome::failure("theta_block", "wrong architecture".into());
        }
        for _ in 0..200 {
            let x: Vec<f64> = p
                .z
                .iter()
                .map(|zi| zi + rng.random_range(-2.0 / p.m..2.0 / p.m))
                .collect();
            let theta = block.eval(&x);
            margin = margin.min(1e-9 - (sup_norm(&theta) - hat_value(&x, &p)).abs());
        }
        let est = lipschitz_sample_estimate(
            |x| block.eval(x),
            &AxisBox::cube(&p.z, 2.0 / p.m),
            2_000,
            rng.random(),
        );
        margin = margin.min(p.lip_bound() + 1e-9 - est);
    }
    SuiteOutcome::new("theta_block", margin, "sup norm, architecture, contraction".into())
}

/// Shift-orbit variant: bounds on orbit cubes, translation equivariance,
/// agreement between the convolutional realization and the formula.
pub fn phi_block_suite(seed: u64) -> SuiteOutcome {
    let mut rng = derive_rng(seed, 4);
    let mut margin = f64::INFINITY;
    for _ in 0..30 {
        let d = rng.random_range(2usize..=5);
        let p = random_valid_params(&mut rng, d);
        let net = match phi_as_cnn(&p) {
            Ok(n) => n,
            Err(e) => return SuiteOutcome::failure("phi_block", e.to_string()),
        };
        if net.architecture().dims != vec![1, 2 * d, 1, 1] {
            return SuiteOutcome::failure("phi_block", "wrong architecture".into());
        }
        let cubes = p.orbit_support_cubes();
        for _ in 0..200 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..1.5)).collect();
            let phi = phi_value(&x, &p);
            margin = margin.min(p.c + 1e-15 - sup_norm(&phi));
            if cubes.iter().all(|c| !c.contains(&x)) && sup_norm(&phi) != 0.0 {
                return SuiteOutcome::failure("phi_block", "support leaked beyond orbit".into());
            }
            let cnn = net.eval_single(&x).unwrap();
            margin = margin.min(1e-9 - sup_dist(&cnn, &phi));
            let equiv = sup_dist(
                &net.eval_single(&apply_shift(&x, 1)).unwrap(),
                &apply_shift(&cnn, 1),
            );
            margin = margin.min(1e-12 - equiv);
        }
        for cube in p.orbit_inner_cubes() {
            for _ in 0..50 {
                let x = cube.sample(&mut rng);
                margin = margin.min(sup_norm(&phi_value(&x, &p)) - p.c / 2.0 + 1e-15);
            }
        }
        let est = lipschitz_sample_estimate(
            |x| phi_value(x, &p),
            &AxisBox::cube(&p.z, 2.0 / p.m),
            2_000,
            rng.random(),
        );
        margin = margin.min(p.lip_bound() + 1e-9 - est);
    }
    SuiteOutcome::new("phi_block", margin, "orbit support, equivariance, cnn agreement".into())
}

/// Two-hidden-layer realization agrees with the hat formula.
pub fn hat_fnn_agreement_suite(seed: u64) -> SuiteOutcome {
    let mut rng = derive_rng(seed, 5);
    let mut margin = f64::INFINITY;
    for _ in 0..60 {
        let d = rng.random_range(1usize..=6);
        let p = random_valid_params(&mut rng, d);
        let net = hat_as_fnn(&p);
        for _ in 0..200 {
            let x: Vec<f64> = p
                .z
                .iter()
                .map(|zi| zi + rng.random_range(-2.0 / p.m..2.0 / p.m))
                .collect();
            let err = (net.eval(&x).unwrap()[0] - hat_value(&x, &p)).abs();
            margin = margin.min(1e-9 - err);
        }
    }
    SuiteOutcome::new("hat_fnn_agreement", margin, "network vs formula".into())
}

/// Preimage sandwich: the inner box maps into `V`, preimages of `V` stay
/// in the outer box.
pub fn preimage_box_suite(seed: u64) -> SuiteOutcome {
    let mut rng = derive_rng(seed, 6);
    let mut margin = f64::INFINITY;
    let maps = verification_maps(&mut rng);
    for f in &maps {
        let d = f.dim();
        let x = vec![0.5; d];
        let d_half = 0.3;
        let v = AxisBox::cube(&f.forward(&x), d_half);
        let (inner, outer) = f.preimage_box_bounds(&x, d_half).unwrap();
        for _ in 0..1000 {
            let p = inner.sample(&mut rng);
            margin = margin.min(box_slack(&v, &f.forward(&p)) + 1e-9);
            let q = v.sample(&mut rng);
            margin = margin.min(box_slack(&outer, &f.inverse(&q)) + 1e-7);
        }
    }
    SuiteOutcome::new("preimage_box", margin, "1000-point containment per map".into())
}

/// Image sandwich: the inner image box is reached from `V`, images of `V`
/// stay in the outer box.
pub fn image_box_suite(seed: u64) -> SuiteOutcome {
    let mut rng = derive_rng(seed, 7);
    let mut margin = f64::INFINITY;
    let maps = verification_maps(&mut rng);
    for f in &maps {
        let d = f.dim();
        let x = vec![0.5; d];
        let d_half = 0.3;
        let v = AxisBox::cube(&x, d_half);
        let (inner, outer) = f.image_box_bounds(&x, d_half).unwrap();
        for _ in 0..1000 {
            let y = inner.sample(&mut rng);
            margin = margin.min(box_slack(&v, &f.inverse(&y)) + 1e-7);
            let p = v.sample(&mut rng);
            margin = margin.min(box_slack(&outer, &f.forward(&p)) + 1e-9);
        }
    }
    SuiteOutcome::new("image_box", margin, "1000-point containment per map".into())
}

/// Pair distances: brackets for finite p, exactly `2c` at `p = ∞`.
pub fn pair_distance_suite(_seed: u64) -> SuiteOutcome {
    let mut margin = f64::INFINITY;
    for variant in [Variant::IResNet, Variant::Conv] {
        for d in 1..=2usize {
            let base = identity_map(d);
            let m = 4.0;
            let c = 1.0 / (6.0 * d as f64 * m);
            let hp = HatParams::new(vec![0.5; d], m, c, Sign::Plus).unwrap();
            let pair = match FoolingPair::from_params(&base, hp, variant) {
                Ok(p) => p,
                Err(e) => return SuiteOutcome::failure("pair_distance", e.to_string()),
            };
            let sup = match sup_distance_fooling(&pair) {
                Ok(s) => s,
                Err(e) => return SuiteOutcome::failure("pair_distance", e.to_string()),
            };
            margin = margin.min(1e-10 - (sup - 2.0 * c).abs());
            for p_ord in [1.0, 2.0] {
                let quad = QuadratureSpec::tensor_midpoint(
                    if d == 1 { 4096 } else { 256 },
                    AxisBox::unit(d),
                );
                let dist = lp_distance(
                    |x| pair.plus().eval(x),
                    |x| pair.minus().eval(x),
                    Lp::Finite(p_ord),
                    &quad,
                )
                .unwrap();
                let dp = d as f64 / p_ord;
                let lower = c * (d as f64).powf(-dp) * m.powf(-dp);
                let factor = if variant == Variant::Conv { d as f64 } else { 1.0 };
                let upper = c * 2.0f64.powf(dp + 1.0) * factor * m.powf(-dp);
                margin = margin.min(dist - lower * 0.99).min(upper * 1.01 - dist);
            }
        }
    }
    SuiteOutcome::new("pair_distance", margin, "sup = 2c; L^p inside brackets".into())
}

/// Grid cardinality bounds and the filtered-count floor on random traces.
pub fn grid_counts_suite(seed: u64) -> SuiteOutcome {
    let mut rng = derive_rng(seed, 8);
    let mut margin = f64::INFINITY;
    for variant in [Variant::IResNet, Variant::Conv] {
        for d in 1..=3usize {
            let base = identity_map(d);
            for _ in 0..20 {
                let m = rng.random_range(1usize..=25);
                let g = match build_grid(variant, m, &base) {
                    Ok(g) => g,
                    Err(e) => return SuiteOutcome::failure("grid_counts", e.to_string()),
                };
                let count = variant.grid_count(d, m) as f64;
                margin = margin.min(g.grid_size() as f64 - count);
                margin = margin.min(2f64.powi(d as i32) * count - g.grid_size() as f64);
                let n = rng.random_range(0usize..=2 * m);
                let points: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
                    .collect();
                let values: Vec<Vec<f64>> = points.iter().map(|p| base.forward(p)).collect();
                let trace = SampleTrace::new(points, values).unwrap();
                let kept = filter_grid_kept(&g, &trace).unwrap();
                let floor = match variant {
                    Variant::IResNet => g.grid_size() as f64 - n as f64,
                    Variant::Conv => g.grid_size() as f64 - (d * n) as f64,
                };
                margin = margin.min(kept.len() as f64 - floor);
            }
        }
    }
    SuiteOutcome::new("grid_counts", margin, "cardinality and filter floors".into())
}

/// Every generated block satisfies the membership conditions: exact
/// architecture, weight sup-norm at most 1, certified contraction.
pub fn membership_suite(seed: u64) -> SuiteOutcome {
    let mut rng = derive_rng(seed, 9);
    let mut margin = f64::INFINITY;
    for _ in 0..60 {
        let d = rng.random_range(1usize..=4);
        let m = rng.random_range(1usize..=30);
        let variant = if rng.random_bool(0.5) { Variant::IResNet } else { Variant::Conv };
        let family = match FoolingFamily::from_budget(variant, m, &identity_map(d)) {
            Ok(f) => f,
            Err(e) => return SuiteOutcome::failure("membership", e.to_string()),
        };
        let idx = rng.random_range(0..family.grid().grid_size());
        let pair = family.pair_at_index(idx).unwrap();
        for v in [Sign::Plus, Sign::Minus] {
            let report = match audit_membership(pair.member(v)) {
                Ok(r) => r,
                Err(e) => return SuiteOutcome::failure("membership", e.to_string()),
            };
            if !report.architecture_ok {
                return SuiteOutcome::failure(
                    "membership",
                    format!("architecture {}", report.architecture),
                );
            }
            margin = margin.min(1.0 - report.weight_sup);
            margin = margin.min(1.0 - report.lip_bound);
        }
    }
    SuiteOutcome::new("membership", margin, "architecture, weight cap, contraction".into())
}

/// Fixed-point inversion: roundtrips below 1e-8 and geometric residual
/// decay at the certified ratio.
pub fn inversion_suite(seed: u64) -> SuiteOutcome {
    let mut rng = derive_rng(seed, 10);
    let mut margin = f64::INFINITY;
    for _ in 0..40 {
        let d = rng.random_range(1usize..=4);
        let l = rng.random_range(0usize..=8);
        let blocks: Vec<ResidualBlock> = (0..l)
            .map(|_| theta_block(&random_valid_params(&mut rng, d)).unwrap())
            .collect();
        let net = ResidualNetwork::new(d, blocks).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let y = net.forward(&x).unwrap();
        let (back, stats) = match net.inverse_with_stats(&y, 1e-10) {
            Ok(r) => r,
            Err(e) => return SuiteOutcome::failure("inversion", e.to_string()),
        };
        margin = margin.min(1e-8 - sup_dist(&back, &x));
        for (block, s) in net.blocks().iter().rev().zip(&stats) {
            let q = block.lip_bound();
            for w in s.residuals.windows(2) {
                if w[0] > 1e-13 {
                    margin = margin.min(q * w[0] + 1e-15 - w[1]);
                }
            }
        }
    }
    SuiteOutcome::new("inversion", margin, "roundtrip and geometric decay".into())
}

fn verification_maps(rng: &mut impl Rng) -> Vec<crate::base_maps::BiLipschitzMap> {
    let blocks: Vec<ResidualBlock> = (0..2)
        .map(|_| theta_block(&random_valid_params(rng, 2)).unwrap())
        .collect();
    vec![
        identity_map(2),
        diagonal_affine_map(vec![2.0, 0.5], vec![0.1, -0.3]).unwrap(),
        iresnet_map(ResidualNetwork::new(2, blocks).unwrap(), 1e-11).unwrap(),
    ]
}

/// Signed slack of a point against a box: positive inside.
fn box_slack(b: &AxisBox, x: &[f64]) -> f64 {
    let mut slack = f64::INFINITY;
    for ((lo, hi), v) in b.lo().iter().zip(b.hi()).zip(x) {
        slack = slack.min(v - lo).min(hi - v);
    }
    slack
}

/// Run every suite with streams derived from one master seed.
pub fn run_all(master_seed: u64, fault: Option<Fault>) -> Vec<SuiteOutcome> {
    vec![
        hat_support_suite(master_seed),
        hat_lipschitz_suite(master_seed),
        hat_fnn_agreement_suite(master_seed),
        theta_block_suite(master_seed, fault),
        phi_block_suite(master_seed),
        preimage_box_suite(master_seed),
        image_box_suite(master_seed),
        pair_distance_suite(master_seed),
        grid_counts_suite(master_seed),
        membership_suite(master_seed),
        inversion_suite(master_seed),
    ]
}
