//! Bi-Lipschitz base maps with known forward/inverse and declared
//! constants, plus the box-distortion bounds the adversary builds on:
//! for `V = f(x) + [-D, D]^d`,
//! `x + [-D/C1, D/C1]^d ⊂ f^{-1}(V) ⊂ x + [-C2·D, C2·D]^d`,
//! and symmetrically for images.
//!
//! Declared constants are validated only by sampling (falsification, never
//! certification); [`lipschitz_sample_estimate`](crate::metrics::lipschitz_sample_estimate)
//! reports the max observed quotient.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::AxisBox;
use crate::nets::ResidualNetwork;

type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Invertible map with Lipschitz forward (constant `C1`) and inverse
/// (constant `C2`), both with respect to the sup norm. Callables must be
/// pure; concurrent evaluation is fine.
#[derive(Clone)]
pub struct BiLipschitzMap {
    d: usize,
    c1: f64,
    c2: f64,
    forward: MapFn,
    inverse: MapFn,
}

impl std::fmt::Debug for BiLipschitzMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "BiLipschitzMap {{ d: {}, c1: {}, c2: {} }}",
            self.d, self.c1, self.c2
        )
    }
}

impl BiLipschitzMap {
    /// Wrap caller-supplied forward/inverse with declared constants.
    pub fn new<F, G>(d: usize, c1: f64, c2: f64, forward: F, inverse: G) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be >= 1".into()));
        }
        if !(c1 > 0.0) || !(c2 > 0.0) {
            return Err(Error::InvalidInput(
                "Lipschitz constants must be positive".into(),
            ));
        }
        Ok(Self {
            d,
            c1,
            c2,
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Declared bound on `Lip(forward)`.
    pub fn c1(&self) -> f64 {
        self.c1
    }

    /// Declared bound on `Lip(inverse)`.
    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.d, "forward: dimension mismatch");
        let y = (self.forward)(x);
        assert_eq!(y.len(), self.d, "forward returned wrong dimension");
        y
    }

    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.d, "inverse: dimension mismatch");
        let x = (self.inverse)(y);
        assert_eq!(x.len(), self.d, "inverse returned wrong dimension");
        x
    }

    /// Share the forward map as a plain callable.
    pub fn forward_fn(&self) -> MapFn {
        Arc::clone(&self.forward)
    }

    /// Boxes sandwiching `f^{-1}(f(x) + [-D, D]^d)`:
    /// inner `x ± D/C1`, outer `x ± C2·D`.
    pub fn preimage_box_bounds(&self, x: &[f64], d_half: f64) -> Result<(AxisBox, AxisBox)> {
        if !(d_half > 0.0) {
            return Err(Error::InvalidInput("box half-width must be > 0".into()));
        }
        let inner = AxisBox::cube(x, d_half / self.c1);
        let outer = AxisBox::cube(x, self.c2 * d_half);
        Ok((inner, outer))
    }

    /// Boxes sandwiching `f(x + [-D, D]^d)`:
    /// inner `f(x) ± D/C2`, outer `f(x) ± C1·D`.
    pub fn image_box_bounds(&self, x: &[f64], d_half: f64) -> Result<(AxisBox, AxisBox)> {
        if !(d_half > 0.0) {
            return Err(Error::InvalidInput("box half-width must be > 0".into()));
        }
        let fx = self.forward(x);
        let inner = AxisBox::cube(&fx, d_half / self.c2);
        let outer = AxisBox::cube(&fx, self.c1 * d_half);
        Ok((inner, outer))
    }
}

/// The identity on `R^d`, `C1 = C2 = 1`.
pub fn identity_map(d: usize) -> BiLipschitzMap {
    BiLipschitzMap::new(d, 1.0, 1.0, |x| x.to_vec(), |y| y.to_vec())
        .expect("identity map parameters are valid")
}

/// `x -> x ⊙ scales + offset`; `C1 = max scale`, `C2 = 1/min scale`.
pub fn diagonal_affine_map(scales: Vec<f64>, offset: Vec<f64>) -> Result<BiLipschitzMap> {
    let d = scales.len();
    if offset.len() != d {
        return Err(Error::DimensionMismatch {
            context: "diagonal_affine_map",
            expected: d,
            got: offset.len(),
        });
    }
    for (i, s) in scales.iter().enumerate() {
        if !(*s > 0.0) {
            return Err(Error::NonPositiveScale {
                index: i,
                value: *s,
            });
        }
    }
    let c1 = scales.iter().cloned().fold(f64::MIN, f64::max);
    let c2 = 1.0 / scales.iter().cloned().fold(f64::MAX, f64::min);
    let fwd_scales = scales.clone();
    let fwd_offset = offset.clone();
    BiLipschitzMap::new(
        d,
        c1,
        c2,
        move |x| {
            x.iter()
                .zip(fwd_scales.iter().zip(&fwd_offset))
                .map(|(xi, (s, o))| xi * s + o)
                .collect()
        },
        move |y| {
            y.iter()
                .zip(scales.iter().zip(&offset))
                .map(|(yi, (s, o))| (yi - o) / s)
                .collect()
        },
    )
}

/// Wrap a certified-invertible residual network as a bi-Lipschitz map.
/// Constants come from the per-block triangle inequality:
/// `C1 = Π(1 + q_ℓ)`, `C2 = Π 1/(1 - q_ℓ)`. The inverse closure runs the
/// fixed-point solver at `tol`; with valid certificates it always
/// converges, so a solver failure (wrong certificate) panics.
pub fn iresnet_map(net: ResidualNetwork, tol: f64) -> Result<BiLipschitzMap> {
    for (i, b) in net.blocks().iter().enumerate() {
        if !(b.lip_bound() < 1.0) {
            return Err(Error::NotCertifiedInvertible {
                block: i,
                bound: b.lip_bound(),
            });
        }
    }
    let c1 = net.blocks().iter().map(|b| 1.0 + b.lip_bound()).product();
    let c2 = net
        .blocks()
        .iter()
        .map(|b| 1.0 / (1.0 - b.lip_bound()))
        .product();
    let d = net.dim();
    let fwd_net = Arc::new(net);
    let inv_net = Arc::clone(&fwd_net);
    BiLipschitzMap::new(
        d,
        c1,
        c2,
        move |x| fwd_net.forward(x).expect("dimension validated by wrapper"),
        move |y| {
            inv_net
                .inverse(y, tol)
                .expect("certified residual network failed to invert (wrong certificate)")
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hat::{theta_block, HatParams, Sign};
    use crate::metrics::lipschitz_sample_estimate;
    use crate::num::{derive_rng, sup_dist};
    use rand::Rng;

    #[test]
    fn identity_map_examples() {
        let f = identity_map(2);
        assert_eq!(f.forward(&[0.3, 0.7]), vec![0.3, 0.7]);
        assert_eq!(f.c1(), 1.0);
        assert_eq!(f.c2(), 1.0);
        let (inner, outer) = f.preimage_box_bounds(&[0.5, 0.5], 0.5).unwrap();
        let expected = AxisBox::cube(&[0.5, 0.5], 0.5);
        assert_eq!(inner, expected);
        assert_eq!(outer, expected);
        let (im_inner, im_outer) = f.image_box_bounds(&[0.5, 0.5], 0.5).unwrap();
        assert_eq!(im_inner, expected);
        assert_eq!(im_outer, expected);
    }

    #[test]
    fn diagonal_map_examples() {
        let f = diagonal_affine_map(vec![2.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(f.forward(&[0.5, 0.5]), vec![1.0, 1.0]);
        assert_eq!(f.c1(), 2.0);
        assert_eq!(f.c2(), 0.5);
        // roundtrip is exact for dyadic scales
        let x = [0.25, -1.5];
        assert_eq!(f.inverse(&f.forward(&x)), x.to_vec());

        // sampled Lipschitz quotient stays below the declared constant
        let est = lipschitz_sample_estimate(
            |x| f.forward(x),
            &AxisBox::unit(2),
            20_000,
            99,
        );
        assert!(est <= 2.0 + 1e-9, "estimate {est}");
        assert!(est > 1.9, "diagonal stretch should be observed, got {est}");
    }

    #[test]
    fn diagonal_map_rejects_nonpositive_scale() {
        assert!(matches!(
            diagonal_affine_map(vec![1.0, 0.0], vec![0.0, 0.0]),
            Err(Error::NonPositiveScale { index: 1, .. })
        ));
        assert!(diagonal_affine_map(vec![-2.0], vec![0.0]).is_err());
    }

    #[test]
    fn diagonal_preimage_and_image_boxes() {
        let f = diagonal_affine_map(vec![2.0, 2.0], vec![0.0, 0.0]).unwrap();
        let x = [0.5, 0.5];
        let (pre_inner, pre_outer) = f.preimage_box_bounds(&x, 0.5).unwrap();
        assert_eq!(pre_inner, AxisBox::cube(&x, 0.25)); // D/C1
        assert_eq!(pre_outer, AxisBox::cube(&x, 0.25)); // C2*D
        let (im_inner, im_outer) = f.image_box_bounds(&x, 0.5).unwrap();
        assert_eq!(im_inner, AxisBox::cube(&[1.0, 1.0], 1.0)); // D/C2
        assert_eq!(im_outer, AxisBox::cube(&[1.0, 1.0], 1.0)); // C1*D
    }

    fn random_hat_net(rng: &mut impl Rng, d: usize, blocks: usize) -> ResidualNetwork {
        let blocks: Vec<_> = (0..blocks)
            .map(|_| {
                let z: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
                let m = rng.random_range(1.0..6.0);
                let c = rng.random_range(0.1..0.7) / (3.0 * d as f64 * m);
                theta_block(&HatParams::new(z, m, c, Sign::Plus).unwrap()).unwrap()
            })
            .collect();
        ResidualNetwork::new(d, blocks).unwrap()
    }

    #[test]
    fn iresnet_map_constants_and_roundtrip() {
        // L = 0: identity constants
        let id = iresnet_map(ResidualNetwork::identity(3), 1e-10).unwrap();
        assert_eq!(id.c1(), 1.0);
        assert_eq!(id.c2(), 1.0);

        // one hat block with q = 3dcM
        let d = 2;
        let (m, c) = (2.0, 0.05);
        let p = HatParams::new(vec![0.5, 0.5], m, c, Sign::Plus).unwrap();
        let q = p.lip_bound();
        let net = ResidualNetwork::new(d, vec![theta_block(&p).unwrap()]).unwrap();
        let f = iresnet_map(net, 1e-10).unwrap();
        assert!((f.c1() - (1.0 + q)).abs() < 1e-15);
        assert!((f.c2() - 1.0 / (1.0 - q)).abs() < 1e-15);

        let est = lipschitz_sample_estimate(|x| f.forward(x), &AxisBox::unit(d), 20_000, 7);
        assert!(est <= f.c1() + 1e-9, "sampled Lip {est} above declared {}", f.c1());

        let mut rng = derive_rng(31, 0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
            let back = f.inverse(&f.forward(&x));
            assert!(sup_dist(&back, &x) <= 1e-8);
        }
    }

    #[test]
    fn iresnet_map_rejects_uncertified_network() {
        let p = HatParams::new(vec![0.5], 2.0, 0.05, Sign::Plus).unwrap();
        let block = theta_block(&p).unwrap().with_lip_bound(1.5);
        let net = ResidualNetwork::new(1, vec![block]).unwrap();
        assert!(matches!(
            iresnet_map(net, 1e-10),
            Err(Error::NotCertifiedInvertible { .. })
        ));
    }

    #[test]
    fn preimage_boxes_contain_what_they_claim() {
        // Monte Carlo check of the sandwich on several maps
        let mut rng = derive_rng(32, 0);
        let maps = vec![
            identity_map(2),
            diagonal_affine_map(vec![2.0, 0.5], vec![0.3, -0.2]).unwrap(),
            iresnet_map(random_hat_net(&mut rng, 2, 3), 1e-11).unwrap(),
        ];
        for f in &maps {
            let x = vec![0.5, 0.5];
            let d_half = 0.4;
            let fx = f.forward(&x);
            let v = AxisBox::cube(&fx, d_half);
            let (inner, outer) = f.preimage_box_bounds(&x, d_half).unwrap();
            for _ in 0..1000 {
                // inner box maps into V
                let p = inner.sample(&mut rng);
                assert!(
                    v.contains_with_tol(&f.forward(&p), 1e-9),
                    "inner preimage point escaped V"
                );
                // preimages of V land in the outer box
                let q = v.sample(&mut rng);
                assert!(
                    outer.contains_with_tol(&f.inverse(&q), 1e-7),
                    "preimage left the outer box"
                );
            }
        }
    }

    #[test]
    fn image_boxes_contain_what_they_claim() {
        let mut rng = derive_rng(33, 0);
        let maps = vec![
            identity_map(2),
            diagonal_affine_map(vec![2.0, 0.5], vec![0.3, -0.2]).unwrap(),
            iresnet_map(random_hat_net(&mut rng, 2, 3), 1e-11).unwrap(),
        ];
        for f in &maps {
            let x = vec![0.5, 0.5];
            let d_half = 0.4;
            let v = AxisBox::cube(&x, d_half);
            let (inner, outer) = f.image_box_bounds(&x, d_half).unwrap();
            for _ in 0..1000 {
                // every point of the inner image box is hit from V
                let y = inner.sample(&mut rng);
                assert!(
                    v.contains_with_tol(&f.inverse(&y), 1e-7),
                    "inner image point not reached from V"
                );
                // images of V land in the outer box
                let p = v.sample(&mut rng);
                assert!(
                    outer.contains_with_tol(&f.forward(&p), 1e-9),
                    "image left the outer box"
                );
            }
        }
    }

    #[test]
    fn declared_constants_hold_on_sampled_pairs() {
        let mut rng = derive_rng(34, 0);
        let maps = vec![
            identity_map(1),
            diagonal_affine_map(vec![3.0], vec![0.1]).unwrap(),
            iresnet_map(random_hat_net(&mut rng, 1, 2), 1e-11).unwrap(),
        ];
        for f in &maps {
            let fwd = lipschitz_sample_estimate(|x| f.forward(x), &AxisBox::unit(1), 50_000, 5);
            assert!(fwd <= f.c1() * (1.0 + 1e-9), "forward quotient {fwd} > C1 {}", f.c1());
            // estimate the inverse constant on the image of the unit box
            let lo = f.forward(&[0.0]);
            let hi = f.forward(&[1.0]);
            let image = AxisBox::new(
                vec![lo[0].min(hi[0])],
                vec![lo[0].max(hi[0])],
            )
            .unwrap();
            let inv = lipschitz_sample_estimate(|y| f.inverse(y), &image, 50_000, 6);
            assert!(inv <= f.c2() * (1.0 + 1e-9) + 1e-9, "inverse quotient {inv} > C2 {}", f.c2());
        }
    }
}
