//! The adversarial construction: a regular grid Γ of hat-peak locations
//! inside the base map's image, fooling pairs `f_{z,±1} = (block ± id)∘f`
//! that agree with `f` on every sample whose image misses the support
//! cube, filtering of Γ against realized sample traces, and the resulting
//! guaranteed error floors.
//!
//! With budget `m` the grid scale is `M = 2·C2·⌈(3m)^(1/d)⌉` (feedforward
//! variant) or `M = 2·C2·⌈(3dm)^(1/d)⌉` (convolutional variant), the
//! amplitude is `c = 1/(6dM)`, and the grid holds between `3m` and
//! `2^d·3m` points (`3dm` to `2^d·3dm` for conv). After removing the
//! grid points whose cubes are touched by `n <= 2m` sample images, at
//! least `m` (resp. `dm`) survive; each survivor carries a pair of
//! functions indistinguishable from the base map on the trace yet `2c`
//! apart in sup norm, so no reconstruction gets below error `c` on both.

use serde_json::json;

use crate::base_maps::BiLipschitzMap;
use crate::error::{Error, Result};
use crate::geometry::AxisBox;
use crate::hat::{
    apply_shift, phi_as_cnn, phi_value, theta_fnn, theta_value, HatParams, Sign,
};
use crate::learners::{LearnerSpec, Reconstruction};
use crate::metrics::{lp_distance, Lp, QuadratureSpec};
use crate::nets::{ArchitectureKind, ConvNet, FeedForwardNet};
use crate::num::{ceil_nth_root, least_squares_slope, sup_dist};

/// Which theorem's construction is being exercised: hat blocks realized
/// as feedforward networks, or the shift-orbit variant realized as
/// 1-in/1-out-channel convolutional networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    IResNet,
    Conv,
}

impl Variant {
    /// Target grid cardinality `3m` (iresnet) or `3dm` (conv).
    pub fn grid_count(self, d: usize, m: usize) -> u64 {
        match self {
            Variant::IResNet => 3 * m as u64,
            Variant::Conv => 3 * d as u64 * m as u64,
        }
    }

    /// How many cyclic shifts of a sample image can touch a grid cube.
    fn shifts(self, d: usize) -> usize {
        match self {
            Variant::IResNet => 1,
            Variant::Conv => d,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iresnet" => Ok(Variant::IResNet),
            "conv" => Ok(Variant::Conv),
            other => Err(Error::InvalidInput(format!(
                "unknown variant '{other}' (expected iresnet or conv)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::IResNet => write!(f, "iresnet"),
            Variant::Conv => write!(f, "conv"),
        }
    }
}

// ── Grid ────────────────────────────────────────────────────────────────

/// The hat-peak grid `Γ = f(x*) + (1/M - 1/(2C2))·1⃗ + (2/M)·{0..K-1}^d`
/// for `x* = (1/2)·1⃗`, constructed so every support cube
/// `z + [-1/M, 1/M]^d` stays inside the image inner box
/// `f(x*) + [-1/(2C2), 1/(2C2)]^d`.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub variant: Variant,
    /// Sample budget `m`.
    pub budget: usize,
    pub d: usize,
    pub base: BiLipschitzMap,
    /// Inverse half-width `M` (grid spacing is `2/M`).
    pub m: f64,
    /// Grid points, axis 0 fastest.
    pub gamma: Vec<Vec<f64>>,
    pub x_star: Vec<f64>,
    /// Points per axis `K = ⌈count^(1/d)⌉`.
    pub k_per_axis: usize,
    origin: Vec<f64>,
    step: f64,
}

impl GridSpec {
    pub fn grid_size(&self) -> usize {
        self.gamma.len()
    }

    /// Support cube around a grid point.
    pub fn cube(&self, z: &[f64]) -> AxisBox {
        AxisBox::cube(z, 1.0 / self.m)
    }

    fn point_for(&self, flat: usize) -> Vec<f64> {
        let mut rest = flat;
        (0..self.d)
            .map(|a| {
                let j = rest % self.k_per_axis;
                rest /= self.k_per_axis;
                self.origin[a] + self.step * j as f64
            })
            .collect()
    }
}

/// Construct the grid for a budget; fails with `ImageTooSmall` when the
/// declared constants cannot place the grid (with all support cubes)
/// inside the base map's image over `[0,1]^d`.
pub fn build_grid(variant: Variant, m: usize, base: &BiLipschitzMap) -> Result<GridSpec> {
    if m < 1 {
        return Err(Error::InvalidInput("budget m must be >= 1".into()));
    }
    let d = base.dim();
    let count = variant.grid_count(d, m);
    let k = ceil_nth_root(count, d as u32) as usize;
    let c2 = base.c2();
    let m_scale = 2.0 * c2 * k as f64;
    let step = 2.0 / m_scale;
    let x_star = vec![0.5; d];
    let f_star = base.forward(&x_star);
    let offset = 1.0 / m_scale - 1.0 / (2.0 * c2);
    let origin: Vec<f64> = f_star.iter().map(|v| v + offset).collect();

    let grid = GridSpec {
        variant,
        budget: m,
        d,
        base: base.clone(),
        m: m_scale,
        gamma: Vec::new(),
        x_star,
        k_per_axis: k,
        origin,
        step,
    };
    let mut gamma = Vec::with_capacity(k.pow(d as u32));
    for flat in 0..k.pow(d as u32) {
        gamma.push(grid.point_for(flat));
    }
    let grid = GridSpec { gamma, ..grid };

    // the support cubes must fit in the image inner box, and every peak
    // must be reachable from the unit cube
    let (inner_box, _) = base.image_box_bounds(&grid.x_star, 0.5)?;
    let unit = AxisBox::unit(d);
    let half = 1.0 / grid.m;
    for z in &grid.gamma {
        if !AxisBox::cube(z, half).contained_in(&inner_box, 1e-9) {
            return Err(Error::ImageTooSmall(format!(
                "support cube around {z:?} leaves the image inner box"
            )));
        }
        let pre = base.inverse(z);
        if !unit.contains_with_tol(&pre, 1e-7) {
            return Err(Error::ImageTooSmall(format!(
                "grid point {z:?} has no preimage in the unit cube (got {pre:?})"
            )));
        }
    }
    Ok(grid)
}

// ── Sample traces ───────────────────────────────────────────────────────

/// Ordered record of queried points in `[0,1]^d` and the values an
/// algorithm received for them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    points: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl SampleTrace {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "SampleTrace::new",
                expected: points.len(),
                got: values.len(),
            });
        }
        if let Some(first) = points.first() {
            let d = first.len();
            if points.iter().any(|p| p.len() != d) || values.iter().any(|v| v.len() != d) {
                return Err(Error::InvalidInput("ragged trace entries".into()));
            }
            let unit = AxisBox::unit(d);
            if let Some(p) = points.iter().find(|p| !unit.contains(p)) {
                return Err(Error::InvalidInput(format!(
                    "trace point {p:?} lies outside the unit cube"
                )));
            }
        }
        Ok(Self { points, values })
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Check `values[i] = base.forward(points[i])` to the stated
    /// absolute tolerance.
    pub fn validate_against(&self, base: &BiLipschitzMap, tol: f64) -> Result<()> {
        for (p, v) in self.points.iter().zip(&self.values) {
            let expected = base.forward(p);
            let err = sup_dist(&expected, v);
            if err > tol {
                return Err(Error::InvalidInput(format!(
                    "trace value at {p:?} deviates from the base map by {err:.3e}"
                )));
            }
        }
        Ok(())
    }
}

// ── Filtering ───────────────────────────────────────────────────────────

/// Indices of grid points whose cubes are untouched by the trace.
///
/// A value `y` removes `z` when `y` lies in the closed cube
/// `z + [-1/M, 1/M]^d`; the conv variant also lets every cyclic shift
/// `yR^j` remove cubes. Closed cubes are conservative for the adversary:
/// a sample exactly on a cube face removes the neighbors too. Membership
/// is resolved by index arithmetic on the regular grid and is equivalent
/// to the per-cube intersection test (pinned by a brute-force oracle in
/// the tests).
pub fn filter_grid_kept(grid: &GridSpec, trace: &SampleTrace) -> Result<Vec<usize>> {
    let cap = 2 * grid.budget;
    if trace.n() > cap {
        return Err(Error::BudgetExceeded { n: trace.n(), cap });
    }
    let d = grid.d;
    let k = grid.k_per_axis;
    let half = 1.0 / grid.m;
    let mut removed = vec![false; grid.gamma.len()];

    let mut axis_candidates: Vec<Vec<usize>> = vec![Vec::new(); d];
    for y in trace.values() {
        for shift in 0..grid.variant.shifts(d) {
            let yy = apply_shift(y, shift as i64);
            let mut feasible = true;
            for a in 0..d {
                let cands = &mut axis_candidates[a];
                cands.clear();
                let t = (yy[a] - grid.origin[a]) / grid.step;
                for cand in [t.floor(), t.ceil(), t.round()] {
                    if cand >= 0.0 && cand < k as f64 {
                        let j = cand as usize;
                        let center = grid.origin[a] + grid.step * j as f64;
                        if (yy[a] - center).abs() <= half && !cands.contains(&j) {
                            cands.push(j);
                        }
                    }
                }
                if cands.is_empty() {
                    feasible = false;
                    break;
                }
            }
            if !feasible {
                continue;
            }
            // cartesian product of per-axis candidates (at most 2 each)
            let mut choice = vec![0usize; d];
            loop {
                let mut flat = 0usize;
                for a in (0..d).rev() {
                    flat = flat * k + axis_candidates[a][choice[a]];
                }
                removed[flat] = true;
                let mut a = 0;
                loop {
                    if a == d {
                        break;
                    }
                    choice[a] += 1;
                    if choice[a] < axis_candidates[a].len() {
                        break;
                    }
                    choice[a] = 0;
                    a += 1;
                }
                if choice.iter().all(|&c| c == 0) {
                    break;
                }
            }
        }
    }
    Ok((0..grid.gamma.len()).filter(|&i| !removed[i]).collect())
}

/// The filtered grid Γ̃ as points.
pub fn filter_grid(grid: &GridSpec, trace: &SampleTrace) -> Result<Vec<Vec<f64>>> {
    Ok(filter_grid_kept(grid, trace)?
        .into_iter()
        .map(|i| grid.gamma[i].clone())
        .collect())
}

// ── Fooling families ────────────────────────────────────────────────────

/// One member `f_{z,v} = (block_v + id) ∘ base` of a fooling family.
#[derive(Debug, Clone)]
pub struct FoolingMember {
    base: BiLipschitzMap,
    params: HatParams,
    variant: Variant,
}

impl FoolingMember {
    pub fn params(&self) -> &HatParams {
        &self.params
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// The residual disturbance at an image point.
    pub fn block_value(&self, y: &[f64]) -> Vec<f64> {
        match self.variant {
            Variant::IResNet => theta_value(y, &self.params),
            Variant::Conv => phi_value(y, &self.params),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let y = self.base.forward(x);
        let block = self.block_value(&y);
        y.iter().zip(&block).map(|(a, b)| a + b).collect()
    }

    /// The block as a feedforward network (iresnet variant only).
    pub fn block_fnn(&self) -> Result<FeedForwardNet> {
        match self.variant {
            Variant::IResNet => theta_fnn(&self.params),
            Variant::Conv => Err(Error::InvalidInput(
                "conv members realize their block as a CNN".into(),
            )),
        }
    }

    /// The block as a convolutional network (conv variant only).
    pub fn block_cnn(&self) -> Result<ConvNet> {
        match self.variant {
            Variant::Conv => phi_as_cnn(&self.params),
            Variant::IResNet => Err(Error::InvalidInput(
                "iresnet members realize their block as an FNN".into(),
            )),
        }
    }
}

/// The pair `(f_{z,+1}, f_{z,-1})`: indistinguishable from the base map
/// outside the support cube, `2c` apart at the peak preimage.
#[derive(Debug, Clone)]
pub struct FoolingPair {
    plus: FoolingMember,
    minus: FoolingMember,
}

impl FoolingPair {
    /// Build a pair directly from hat parameters (the sign of `params`
    /// is ignored; both signs are produced). Fails when the amplitude
    /// violates the invertibility cap.
    pub fn from_params(
        base: &BiLipschitzMap,
        params: HatParams,
        variant: Variant,
    ) -> Result<Self> {
        if params.dim() != base.dim() {
            return Err(Error::DimensionMismatch {
                context: "FoolingPair::from_params",
                expected: base.dim(),
                got: params.dim(),
            });
        }
        if !(params.lip_bound() < 1.0) {
            return Err(Error::AmplitudeTooLarge {
                c: params.c,
                cap: params.amplitude_cap(),
            });
        }
        let mut plus_params = params.clone();
        plus_params.v = Sign::Plus;
        let mut minus_params = params;
        minus_params.v = Sign::Minus;
        Ok(Self {
            plus: FoolingMember {
                base: base.clone(),
                params: plus_params,
                variant,
            },
            minus: FoolingMember {
                base: base.clone(),
                params: minus_params,
                variant,
            },
        })
    }

    pub fn plus(&self) -> &FoolingMember {
        &self.plus
    }

    pub fn minus(&self) -> &FoolingMember {
        &self.minus
    }

    pub fn member(&self, v: Sign) -> &FoolingMember {
        match v {
            Sign::Plus => &self.plus,
            Sign::Minus => &self.minus,
        }
    }

    pub fn params(&self) -> &HatParams {
        &self.plus.params
    }

    /// Known sup-norm maximizer `base.inverse(z)` of the pair difference.
    pub fn maximizer(&self) -> Vec<f64> {
        self.plus.base.inverse(&self.plus.params.z)
    }
}

/// Grid plus amplitude `c = 1/(6dM)`: generates all pairs `f_{z,±1}`.
#[derive(Debug, Clone)]
pub struct FoolingFamily {
    grid: GridSpec,
    c: f64,
}

impl FoolingFamily {
    pub fn new(grid: GridSpec) -> Self {
        let c = 1.0 / (6.0 * grid.d as f64 * grid.m);
        Self { grid, c }
    }

    pub fn from_budget(variant: Variant, m: usize, base: &BiLipschitzMap) -> Result<Self> {
        Ok(Self::new(build_grid(variant, m, base)?))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn variant(&self) -> Variant {
        self.grid.variant
    }

    /// The amplitude, which is also the guaranteed floor.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn params(&self, z: &[f64], v: Sign) -> HatParams {
        HatParams::new(z.to_vec(), self.grid.m, self.c, v).expect("family parameters are valid")
    }

    /// The fooling pair at a grid point; `z` must be a member of Γ.
    pub fn pair(&self, z: &[f64]) -> Result<FoolingPair> {
        if !self.grid.gamma.iter().any(|g| g == z) {
            return Err(Error::InvalidInput(format!(
                "{z:?} is not a point of the fooling grid"
            )));
        }
        self.pair_at_index(
            self.grid
                .gamma
                .iter()
                .position(|g| g == z)
                .expect("existence checked above"),
        )
    }

    pub fn pair_at_index(&self, index: usize) -> Result<FoolingPair> {
        let z = &self.grid.gamma[index];
        FoolingPair::from_params(&self.grid.base, self.params(z, Sign::Plus), self.variant())
    }
}

/// Guaranteed floor for any reconstruction produced from this trace: the
/// surviving pairs are indistinguishable yet `2c` apart, so the worst-case
/// sup error over the family is at least `c = 1/(6dM)`.
pub fn guaranteed_floor(family: &FoolingFamily, trace: &SampleTrace) -> Result<f64> {
    let kept = filter_grid_kept(family.grid(), trace)?;
    if kept.is_empty() {
        return Err(Error::EmptyFilteredGrid);
    }
    Ok(family.c())
}

/// Mean-error bound over the family for a deterministic algorithm within
/// budget: `(1/(3·2^(d+1))) · c · d^(-d/p) · C1^(-d/p) · M^(-d/p)`.
pub fn mean_error_bound(family: &FoolingFamily, p: Lp) -> f64 {
    let d = family.grid().d;
    let dp = p.d_over_p(d);
    let c1 = family.grid().base.c1();
    let m = family.grid().m;
    1.0 / (3.0 * 2f64.powi(d as i32 + 1))
        * family.c()
        * (d as f64).powf(-dp)
        * c1.powf(-dp)
        * m.powf(-dp)
}

/// The explicit constant in front of `(3m)^(-1/p-1/d)` (iresnet) or
/// `(3dm)^(-1/p-1/d)` (conv):
/// `(1/(3²·2^(d+3))) · d^(-d/p-1) · C1^(-d/p) · (4C2)^(-d/p-1)`.
pub fn lower_bound_constant(d: usize, p: Lp, c1: f64, c2: f64) -> f64 {
    let dp = p.d_over_p(d);
    1.0 / (9.0 * 2f64.powi(d as i32 + 3))
        * (d as f64).powf(-dp - 1.0)
        * c1.powf(-dp)
        * (4.0 * c2).powf(-dp - 1.0)
}

/// `C · (3m)^(-1/p-1/d)` resp. `C · (3dm)^(-1/p-1/d)`.
pub fn theoretical_bound_value(variant: Variant, d: usize, p: Lp, m: usize, c1: f64, c2: f64) -> f64 {
    let constant = lower_bound_constant(d, p, c1, c2);
    let count = variant.grid_count(d, m) as f64;
    constant * count.powf(-p.reciprocal() - 1.0 / d as f64)
}

// ── Set-membership audit ────────────────────────────────────────────────

/// The three membership conditions of the theorem's block set: exact
/// architecture, weight/kernel sup-norm at most 1, certified Lipschitz
/// constant below 1. Bias magnitudes are recorded but not capped.
#[derive(Debug, Clone)]
pub struct MembershipReport {
    pub architecture: String,
    pub architecture_ok: bool,
    pub weight_sup: f64,
    pub bias_sup: f64,
    pub lip_bound: f64,
}

impl MembershipReport {
    pub fn is_member(&self) -> bool {
        self.architecture_ok && self.weight_sup <= 1.0 && self.lip_bound < 1.0
    }
}

/// Audit a member's block network against the membership conditions.
pub fn audit_membership(member: &FoolingMember) -> Result<MembershipReport> {
    let d = member.params().dim();
    let lip_bound = member.params().lip_bound();
    match member.variant() {
        Variant::IResNet => {
            let net = member.block_fnn()?;
            let arch = net.architecture();
            let architecture_ok = arch.kind == ArchitectureKind::Fnn
                && arch.dims == vec![d, 2 * d, 1, d]
                && arch.activation == crate::nets::Activation::Relu;
            Ok(MembershipReport {
                architecture: arch.to_string(),
                architecture_ok,
                weight_sup: net.weight_sup(),
                bias_sup: net.bias_sup(),
                lip_bound,
            })
        }
        Variant::Conv => {
            let net = member.block_cnn()?;
            let arch = net.architecture();
            let architecture_ok = arch.kind == ArchitectureKind::Cnn
                && arch.data_size == Some(d)
                && arch.dims == vec![1, 2 * d, 1, 1]
                && arch.activation == crate::nets::Activation::Relu;
            Ok(MembershipReport {
                architecture: arch.to_string(),
                architecture_ok,
                weight_sup: net.kernel_sup(),
                bias_sup: net.bias_sup(),
                lip_bound,
            })
        }
    }
}

// ── Experiment harness ──────────────────────────────────────────────────

/// One row of the experiment report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub variant: Variant,
    pub d: usize,
    pub p: Lp,
    pub m: usize,
    pub learner: String,
    pub seed: u64,
    pub n_samples: usize,
    pub grid_size: usize,
    pub filtered_size: usize,
    pub floor_c: f64,
    pub worst_err: f64,
    pub mean_err: f64,
    pub bound_c: f64,
    pub bound_value: f64,
}

pub const REPORT_CSV_HEADER: &str = "variant,d,p,m,learner,seed,n_samples,grid_size,\
filtered_size,floor_c,worst_err,mean_err,bound_C,bound_value";

impl ReportRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.variant,
            self.d,
            self.p,
            self.m,
            self.learner,
            self.seed,
            self.n_samples,
            self.grid_size,
            self.filtered_size,
            self.floor_c,
            self.worst_err,
            self.mean_err,
            self.bound_c,
            self.bound_value
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "variant": self.variant.to_string(),
            "d": self.d,
            "p": self.p.to_string(),
            "m": self.m,
            "learner": self.learner,
            "seed": self.seed,
            "n_samples": self.n_samples,
            "grid_size": self.grid_size,
            "filtered_size": self.filtered_size,
            "floor_c": self.floor_c,
            "worst_err": self.worst_err,
            "mean_err": self.mean_err,
            "bound_C": self.bound_c,
            "bound_value": self.bound_value,
        })
    }
}

/// Harness configuration. `kept_cap`/`removed_cap` bound how many grid
/// points are assessed per run: surviving points are the theorem's
/// substance and default to a full sweep for `p = ∞`; removed points are
/// re-attacked individually (the learner sees the perturbed values), so
/// they are capped to keep fit-learner runs desk-scale.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub p: Lp,
    pub m_list: Vec<usize>,
    pub n_seeds: u64,
    pub master_seed: u64,
    pub learner: LearnerSpec,
    pub kept_cap: Option<usize>,
    pub removed_cap: usize,
}

impl ExperimentConfig {
    pub fn new(variant: Variant, p: Lp, learner: LearnerSpec, m_list: Vec<usize>) -> Self {
        let kept_cap = match p {
            Lp::Infinity => None,
            Lp::Finite(_) => Some(32),
        };
        Self {
            variant,
            p,
            m_list,
            n_seeds: 8,
            master_seed: 0,
            learner,
            kept_cap,
            removed_cap: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    /// Log-log slope of the guaranteed floor against `m`.
    pub floor_slope: Option<f64>,
}

fn learner_stream(master: u64, m: usize, seed: u64) -> u64 {
    master
        ^ (m as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ seed.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Measured error of a reconstruction against one family member. For
/// `p = ∞` the error is evaluated at the known maximizer plus an axis
/// refinement safeguard (a sup lower bound, exact for the pair trick);
/// finite `p` uses the default quadrature with the maximizer appended.
fn measure_member_error(
    member: &FoolingMember,
    recon: &Reconstruction,
    p: Lp,
    family: &FoolingFamily,
) -> Result<f64> {
    let grid = family.grid();
    let d = grid.d;
    let unit = AxisBox::unit(d);
    let x_hat_raw = grid.base.inverse(&member.params().z);
    if !unit.contains_with_tol(&x_hat_raw, 1e-9) {
        return Err(Error::MaximizerOutsideDomain { point: x_hat_raw });
    }
    let x_hat: Vec<f64> = x_hat_raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    match p {
        Lp::Infinity => {
            let mut points = vec![x_hat.clone()];
            let delta = 1.0 / (2.0 * d as f64 * grid.m * grid.base.c1());
            for a in 0..d {
                for sgn in [-1.0, 1.0] {
                    let mut q = x_hat.clone();
                    q[a] += sgn * delta;
                    if unit.contains(&q) {
                        points.push(q);
                    }
                }
            }
            let mut worst = 0.0f64;
            for q in &points {
                worst = worst.max(sup_dist(&member.eval(q), &recon(q)));
            }
            Ok(worst)
        }
        Lp::Finite(_) => {
            let quad = QuadratureSpec::default_for_dim(d, unit).with_extra_nodes(vec![x_hat]);
            lp_distance(|x| member.eval(x), |x| recon(x), p, &quad)
        }
    }
}

/// Run the harness: per `(m, seed)` the learner samples the base map,
/// the grid is filtered against its trace, and the surviving pairs (plus
/// a capped selection of removed points, each re-attacked with the
/// learner seeing the perturbed values) are measured against the
/// reconstruction. Rows are sorted, and the floor-vs-m slope is fitted.
pub fn run_experiment(
    base: &BiLipschitzMap,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.p.validate()?;
    if cfg.m_list.is_empty() {
        return Err(Error::InvalidInput("m_list must be nonempty".into()));
    }
    let d = base.dim();
    let mut rows = Vec::new();
    for &m in &cfg.m_list {
        let family = FoolingFamily::from_budget(cfg.variant, m, base)?;
        for seed in 0..cfg.n_seeds {
            rows.push(run_single(base, &family, cfg, m, seed, d)?);
        }
    }
    rows.sort_by(|a, b| {
        (a.variant, a.d, a.m, &a.learner, a.seed).cmp(&(b.variant, b.d, b.m, &b.learner, b.seed))
    });

    // one floor value per budget
    let mut floors: Vec<(usize, f64)> = Vec::new();
    for row in &rows {
        if !floors.iter().any(|(m, _)| *m == row.m) {
            floors.push((row.m, row.floor_c));
        }
    }
    let xs: Vec<f64> = floors.iter().map(|(m, _)| (*m as f64).ln()).collect();
    let ys: Vec<f64> = floors.iter().map(|(_, c)| c.ln()).collect();
    let floor_slope = least_squares_slope(&xs, &ys);

    Ok(ExperimentReport { rows, floor_slope })
}

fn run_single(
    base: &BiLipschitzMap,
    family: &FoolingFamily,
    cfg: &ExperimentConfig,
    m: usize,
    seed: u64,
    d: usize,
) -> Result<ReportRow> {
    let learner = cfg
        .learner
        .build(m, learner_stream(cfg.master_seed, m, seed), base, family);
    let base_target = |x: &[f64]| base.forward(x);
    let (trace, base_recon) = learner.run(&base_target, d);
    trace.validate_against(base, 1e-12)?;

    let grid = family.grid();
    let kept = filter_grid_kept(grid, &trace)?;
    if kept.is_empty() {
        return Err(Error::EmptyFilteredGrid);
    }
    let floor_c = family.c();

    let kept_eval: Vec<usize> = match cfg.kept_cap {
        Some(cap) => kept.iter().copied().take(cap).collect(),
        None => kept.clone(),
    };
    let kept_set: Vec<bool> = {
        let mut mask = vec![false; grid.grid_size()];
        for &i in &kept {
            mask[i] = true;
        }
        mask
    };
    let removed_eval: Vec<usize> = (0..grid.grid_size())
        .filter(|i| !kept_set[*i])
        .take(cfg.removed_cap)
        .collect();

    let mut errors: Vec<f64> = Vec::new();
    for &zi in &kept_eval {
        let pair = family.pair_at_index(zi)?;
        for v in [Sign::Plus, Sign::Minus] {
            errors.push(measure_member_error(pair.member(v), &base_recon, cfg.p, family)?);
        }
    }
    for &zi in &removed_eval {
        let pair = family.pair_at_index(zi)?;
        for v in [Sign::Plus, Sign::Minus] {
            let member = pair.member(v).clone();
            let member_target = |x: &[f64]| member.eval(x);
            let (_, recon) = learner.run(&member_target, d);
            errors.push(measure_member_error(&member, &recon, cfg.p, family)?);
        }
    }

    let worst_err = errors.iter().cloned().fold(0.0f64, f64::max);
    let mean_err = errors.iter().sum::<f64>() / errors.len() as f64;
    let bound_c = lower_bound_constant(d, cfg.p, base.c1(), base.c2());
    let bound_value = theoretical_bound_value(cfg.variant, d, cfg.p, m, base.c1(), base.c2());

    Ok(ReportRow {
        variant: cfg.variant,
        d,
        p: cfg.p,
        m,
        learner: learner.name().to_string(),
        seed,
        n_samples: trace.n(),
        grid_size: grid.grid_size(),
        filtered_size: kept.len(),
        floor_c,
        worst_err,
        mean_err,
        bound_c,
        bound_value,
    })
}
