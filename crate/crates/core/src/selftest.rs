//! Built-in property checks, each deterministic in its seed.
//!
//! Check ids: 1 isometry of the sorting cross section, 2 invariance of the
//! invariant maps, 3 the sorted cone is a convex cone, 4 sorting is
//! non-expansive, 5 partition counts and layer equivariance, 6 gradients
//! against central differences, 11 rotation distance against a dense grid.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{Graph, GroupSpec, Permutation};
use crate::invariant::{is_sorted, partition_invariant_projection, reynolds_random_projection, sort_projection, InvariantMap, PoolKind};
use crate::nn::gradcheck::{finite_difference, relative_error};
use crate::nn::ops::{instance_norm, instance_norm_backward, relu, relu_backward, softmax, softmax_backward, softmax_cross_entropy};
use crate::nn::{basis_apply, basis_table, enumerate_partitions, ChannelMix, EquivariantLayer, NodeTensor};
use crate::quotient::{quotient_dist_bruteforce, quotient_dist_rotation, DEFAULT_ROTATION_GRID};
use crate::rng::{seeded, substream, Rng as StreamRng};
use crate::scalar::{euclidean, norm};
use crate::vae::{draw_noise, generate_synthetic, reparam_sample, SyntheticSpec, VaeParams, VaeShape};

pub const SELFTEST_CHECKS: [u8; 7] = [1, 2, 3, 4, 5, 6, 11];

pub const ISOMETRY_TOL: f64 = 1e-12;
pub const LINEAR_INVARIANCE_TOL: f64 = 1e-9;
pub const EXPANSION_SLACK: f64 = 1e-12;
pub const EQUIVARIANCE_TOL: f64 = 1e-9;
pub const GRADIENT_STEP: f64 = 1e-5;
pub const GRADIENT_TOL: f64 = 1e-4;
pub const ROTATION_TOL: f64 = 1e-6;
pub const ORACLE_GRID: usize = 1_000_000;

/// Smallest admissible |relu input| for a gradient instance.
const KINK_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{:>2}] {}: {}", self.id, self.name, self.detail)
    }
}

/// Runs one check by id.
pub fn run_check(id: u8, seed: u64) -> Result<CheckReport> {
    match id {
        1 => check_isometry(seed),
        2 => check_invariance(seed),
        3 => check_convex_cone(seed),
        4 => check_non_expansive(seed),
        5 => check_partitions_and_equivariance(seed),
        6 => check_gradients(seed),
        11 => check_rotation_distance(seed),
        other => Err(Error::Input(format!(
            "unknown self-test check {other} (available: {SELFTEST_CHECKS:?})"
        ))),
    }
}

pub fn run_selftest(seed: u64) -> Result<Vec<CheckReport>> {
    SELFTEST_CHECKS.iter().map(|&id| run_check(id, seed)).collect()
}

fn stream(seed: u64, id: u8) -> StreamRng {
    substream(seed, id as u64)
}

fn normal_vec(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn random_tensor(order: usize, n: usize, c: usize, rng: &mut impl Rng) -> NodeTensor<f64> {
    NodeTensor::from_vec(order, n, c, normal_vec(n.pow(order as u32) * c, rng)).expect("sized buffer")
}

pub fn check_isometry(seed: u64) -> Result<CheckReport> {
    let mut rng = stream(seed, 1);
    let mut worst = 0.0f64;
    for n in 2..=7 {
        let spec = GroupSpec::symmetric(n)?;
        for _ in 0..200 {
            let (a, b) = (normal_vec(n, &mut rng), normal_vec(n, &mut rng));
            let fast = crate::quotient::quotient_dist_sorted(&a, &b)?.distance;
            let slow = quotient_dist_bruteforce(&a, &b, &spec, 40320)?.distance;
            worst = worst.max((fast - slow).abs());
        }
    }
    Ok(CheckReport {
        id: 1,
        name: "sorted distance equals brute force",
        passed: worst < ISOMETRY_TOL,
        detail: format!("n = 2..7, 200 pairs each, max |diff| = {worst:.3e} (tol {ISOMETRY_TOL:e})"),
    })
}

pub fn check_invariance(seed: u64) -> Result<CheckReport> {
    let mut rng = stream(seed, 2);
    let sym4 = GroupSpec::symmetric(4)?;
    let cyc = GroupSpec::cyclic(12, vec![0, 1, 2])?;
    let maps: Vec<(InvariantMap<f64>, bool)> = vec![
        (InvariantMap::sort(7), true),
        (InvariantMap::pooling(6, 3, PoolKind::Sum), true),
        (InvariantMap::pooling(6, 3, PoolKind::Mean), true),
        (InvariantMap::pooling(6, 3, PoolKind::Max), true),
        (partition_invariant_projection(5, 2, 4, 1, seed)?, false),
        (partition_invariant_projection(5, 2, 4, 2, seed)?, false),
        (reynolds_random_projection(&sym4, 4, 3, seed, 40320)?, false),
        (reynolds_random_projection(&cyc, 5, 3, seed, 40320)?, false),
    ];
    let mut lines = Vec::new();
    let mut passed = true;
    for (map, exact) in &maps {
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let z = normal_vec(map.in_dim, &mut rng);
            let g = map.group.sample(&mut rng);
            worst = worst.max(map.invariance_defect(&z, &[g])?);
        }
        let ok = if *exact { worst == 0.0 } else { worst < LINEAR_INVARIANCE_TOL };
        passed &= ok;
        lines.push(format!("{:?}(order {}) {worst:.1e}", map.kind, map.order));
    }
    Ok(CheckReport {
        id: 2,
        name: "invariant maps ignore the group action",
        passed,
        detail: format!("1000 draws per map, max defect: {}", lines.join(", ")),
    })
}

pub fn check_convex_cone(seed: u64) -> Result<CheckReport> {
    let mut rng = stream(seed, 3);
    let mut failures = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=8);
        let a = sort_projection(&normal_vec(n, &mut rng))?.sorted;
        let b = sort_projection(&normal_vec(n, &mut rng))?.sorted;
        let alpha: f64 = rng.random_range(0.0..=1.0);
        let lambda: f64 = rng.random_range(0.0..=10.0);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect();
        let scaled: Vec<f64> = a.iter().map(|x| lambda * x).collect();
        if !is_sorted(&mix) || !is_sorted(&scaled) {
            failures += 1;
        }
    }
    Ok(CheckReport {
        id: 3,
        name: "sorted cone is closed under mixing and scaling",
        passed: failures == 0,
        detail: format!("1000 pairs, {failures} unsorted results"),
    })
}

pub fn check_non_expansive(seed: u64) -> Result<CheckReport> {
    let mut rng = stream(seed, 4);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(2..=10);
        let (x, y) = (normal_vec(n, &mut rng), normal_vec(n, &mut rng));
        let sorted = euclidean(&sort_projection(&x)?.sorted, &sort_projection(&y)?.sorted);
        worst = worst.max(sorted - euclidean(&x, &y));
    }
    Ok(CheckReport {
        id: 4,
        name: "sorting is non-expansive",
        passed: worst <= EXPANSION_SLACK,
        detail: format!("1000 pairs, max ||s(x)-s(y)|| - ||x-y|| = {worst:.3e}"),
    })
}

pub fn check_partitions_and_equivariance(seed: u64) -> Result<CheckReport> {
    let counts: Vec<usize> = (2..=4)
        .map(|m| enumerate_partitions(m).map(|p| p.len()))
        .collect::<Result<_>>()?;
    let counts_ok = counts == [2, 5, 15];

    let mut rng = stream(seed, 5);
    let mut worst = 0.0f64;
    let orders = [(1, 1), (1, 2), (2, 1), (2, 2)];
    for n in 4..=6 {
        let layers: Vec<EquivariantLayer<f64>> = orders
            .iter()
            .map(|&(k, l)| jittered_layer(k, l, n, &mut rng))
            .collect::<Result<_>>()?;
        let shape = VaeShape {
            n,
            ..VaeShape::default()
        };
        let vae = jittered_vae(shape, rng.random())?;
        let spec = SyntheticSpec::for_shape(n, shape.d_a, shape.d_e);
        let graph = generate_synthetic(&spec, 1, rng.random())?.remove(0);
        let z = normal_vec(n, &mut rng);
        let post = vae.encode(&graph)?;
        let logits = vae.decode(&z)?;

        for _ in 0..100 {
            let p = Permutation::random(n, &mut rng);
            for (&(k, l), layer) in orders.iter().zip(&layers) {
                let x = random_tensor(k, n, 2, &mut rng);
                let xp = x.permuted(&p)?;
                for gamma in &basis_table(k, l, n)?.partitions {
                    let lhs = basis_apply(gamma, &xp, l)?;
                    let rhs = basis_apply(gamma, &x, l)?.permuted(&p)?;
                    worst = worst.max(lhs.max_abs_diff(&rhs));
                }
                worst = worst.max(layer.forward(&xp)?.max_abs_diff(&layer.forward(&x)?.permuted(&p)?));
            }
            let moved = vae.encode(&graph.permuted(&p)?)?;
            for (a, b) in [(&moved.mu, &post.mu), (&moved.logvar, &post.logvar)] {
                worst = worst.max(max_diff(a, &p.apply(b)?));
            }
            let dec = vae.decode(&p.apply(&z)?)?;
            worst = worst.max(dec.nodes.max_abs_diff(&logits.nodes.permuted(&p)?));
            worst = worst.max(dec.edges.max_abs_diff(&logits.edges.permuted(&p)?));
        }
    }
    Ok(CheckReport {
        id: 5,
        name: "partition counts and equivariance",
        passed: counts_ok && worst < EQUIVARIANCE_TOL,
        detail: format!(
            "b(2..4) = {counts:?}; basis elements, layers, encoder and decoder at n = 4..6 over 100 permutations: max defect {worst:.3e} (tol {EQUIVARIANCE_TOL:e})"
        ),
    })
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn jittered_layer(k: usize, l: usize, n: usize, rng: &mut StreamRng) -> Result<EquivariantLayer<f64>> {
    let mut layer = EquivariantLayer::init(k, l, 2, 3, n, rng)?;
    for b in &mut layer.bias {
        *b = rng.sample(StandardNormal);
    }
    Ok(layer)
}

/// Initialized model with every parameter moved by 0.05·N(0, 1), so that
/// zero biases do not leave activations exactly on the relu kink.
fn jittered_vae(shape: VaeShape, seed: u64) -> Result<VaeParams<f64>> {
    let mut p = VaeParams::<f64>::init(shape, &mut seeded(seed))?;
    let jitter: Vec<f64> = draw_noise(p.num_params(), &mut substream(seed, 1));
    let moved: Vec<f64> = p.flat().iter().zip(&jitter).map(|(w, j)| w + 0.05 * j).collect();
    p.set_flat(&moved)?;
    Ok(p)
}

/// Outcome of one ELBO gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientInstance {
    pub relative_error: f64,
    /// Candidates rejected before this one.
    pub redrawn: usize,
}

/// Compares the analytic ELBO gradient with central differences at one
/// random instance; `stride` checks every `stride`-th parameter.
///
/// A candidate is redrawn when a probe step moves a relu input across zero,
/// or when the differences at `h` and `h/2` disagree by more than a quarter
/// of the tolerance, meaning the step does not resolve the local curvature.
/// Neither rule consults the analytic gradient.
pub fn elbo_gradient_error(shape: VaeShape, seed: u64, stride: usize) -> Result<GradientInstance> {
    let spec = SyntheticSpec::for_shape(shape.n, shape.d_a, shape.d_e);
    for candidate in 0..1000 {
        let s = substream(seed, candidate).random::<u64>();
        let g = generate_synthetic(&spec, 1, s)?.remove(0);
        let p = jittered_vae(shape, s)?;
        let eps: Vec<f64> = draw_noise(shape.n, &mut substream(s, 2));
        let post = p.encode(&g)?;
        let z = reparam_sample(&post.mu, &post.logvar, &eps);
        if p.relu_margin(&g, &z)? < KINK_MARGIN {
            continue;
        }
        if let Some(err) = resolved_gradient_error(&p, &g, &eps, stride)? {
            return Ok(GradientInstance {
                relative_error: err,
                redrawn: candidate as usize,
            });
        }
    }
    Err(Error::Input("no gradient instance resolvable at the probe step".into()))
}

fn resolved_gradient_error(p: &VaeParams<f64>, g: &Graph, eps: &[f64], stride: usize) -> Result<Option<f64>> {
    let pattern = |q: &VaeParams<f64>| -> Result<Vec<bool>> {
        let post = q.encode(g)?;
        q.relu_pattern(g, &reparam_sample(&post.mu, &post.logvar, eps))
    };
    let reference = pattern(p)?;
    let base = p.flat();
    let idx: Vec<usize> = (0..base.len()).step_by(stride.max(1)).collect();
    let x: Vec<f64> = idx.iter().map(|&i| base[i]).collect();
    let mut probe = p.clone();
    let mut full = base.clone();
    let mut crossed = false;
    let mut differences = |h: f64, check_pattern: bool| {
        finite_difference(&x, h, |xs| {
            for (&i, &v) in idx.iter().zip(xs) {
                full[i] = v;
            }
            probe.set_flat(&full).expect("same length");
            if check_pattern {
                crossed |= pattern(&probe).expect("valid instance") != reference;
            }
            probe.elbo_with_noise(g, eps).expect("valid instance").loss
        })
    };
    let fd = differences(GRADIENT_STEP, true);
    let fd_half = differences(GRADIENT_STEP / 2.0, false);
    if crossed || relative_error(&fd, &fd_half) > GRADIENT_TOL / 4.0 {
        return Ok(None);
    }
    let (_, grad) = p.elbo_gradient(g, eps)?;
    let analytic = grad.flat();
    let an: Vec<f64> = idx.iter().map(|&i| analytic[i]).collect();
    Ok(Some(relative_error(&an, &fd)))
}

fn dot(a: &NodeTensor<f64>, b: &NodeTensor<f64>) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Worst relative error per operation over 20 instances each.
fn op_gradient_errors(rng: &mut StreamRng) -> Result<Vec<(&'static str, f64)>> {
    let mut worst = vec![
        ("relu", 0.0f64),
        ("softmax", 0.0),
        ("cross-entropy", 0.0),
        ("instance-norm", 0.0),
        ("equivariant-layer", 0.0),
        ("channel-mix", 0.0),
    ];
    let n = 4;
    for _ in 0..20 {
        let x = random_tensor(2, n, 3, rng);
        let probe = random_tensor(2, n, 3, rng);
        let rebuild = |d: &[f64]| NodeTensor::from_vec(2, n, 3, d.to_vec()).expect("sized");

        let mut away = x.clone();
        for v in &mut away.data {
            if v.abs() < KINK_MARGIN {
                *v += 2.0 * KINK_MARGIN;
            }
        }
        let g = relu_backward(&away, &probe);
        let fd = finite_difference(&away.data, GRADIENT_STEP, |d| dot(&relu(&rebuild(d)), &probe));
        worst[0].1 = worst[0].1.max(relative_error(&g.data, &fd));

        let g = softmax_backward(&softmax(&x), &probe);
        let fd = finite_difference(&x.data, GRADIENT_STEP, |d| dot(&softmax(&rebuild(d)), &probe));
        worst[1].1 = worst[1].1.max(relative_error(&g.data, &fd));

        let logits = normal_vec(5, rng);
        let target = rng.random_range(0..5);
        let (_, g) = softmax_cross_entropy(&logits, target);
        let fd = finite_difference(&logits, GRADIENT_STEP, |l| softmax_cross_entropy(l, target).0);
        worst[2].1 = worst[2].1.max(relative_error(&g, &fd));

        let (y, cache) = instance_norm(&x);
        let g = instance_norm_backward(&y, &cache, &probe);
        let fd = finite_difference(&x.data, GRADIENT_STEP, |d| dot(&instance_norm(&rebuild(d)).0, &probe));
        worst[3].1 = worst[3].1.max(relative_error(&g.data, &fd));

        for (k, l) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            let layer = jittered_layer(k, l, n, rng)?;
            let input = random_tensor(k, n, 2, rng);
            let out_probe = random_tensor(l, n, 3, rng);
            let (g, gx) = layer.backward(&input, &out_probe)?;
            let params: Vec<f64> = layer.params().copied().collect();
            let mut moved = layer.clone();
            let fd = finite_difference(&params, GRADIENT_STEP, |p| {
                moved.params_mut().zip(p).for_each(|(a, b)| *a = *b);
                dot(&moved.forward(&input).expect("shape"), &out_probe)
            });
            let analytic: Vec<f64> = g.values().copied().collect();
            let fdx = finite_difference(&input.data, GRADIENT_STEP, |d| {
                let t = NodeTensor::from_vec(k, n, 2, d.to_vec()).expect("sized");
                dot(&layer.forward(&t).expect("shape"), &out_probe)
            });
            worst[4].1 = worst[4].1.max(relative_error(&analytic, &fd)).max(relative_error(&gx.data, &fdx));
        }

        let mut mix = ChannelMix::<f64>::init(3, 2, rng);
        mix.bias = normal_vec(2, rng);
        let out_probe = random_tensor(2, n, 2, rng);
        let (g, gx) = mix.backward(&x, &out_probe)?;
        let params: Vec<f64> = mix.weights.iter().chain(&mix.bias).copied().collect();
        let mut moved = mix.clone();
        let fd = finite_difference(&params, GRADIENT_STEP, |p| {
            moved.weights.copy_from_slice(&p[..6]);
            moved.bias.copy_from_slice(&p[6..]);
            dot(&moved.forward(&x).expect("shape"), &out_probe)
        });
        let analytic: Vec<f64> = g.values().copied().collect();
        let fdx = finite_difference(&x.data, GRADIENT_STEP, |d| dot(&mix.forward(&rebuild(d)).expect("shape"), &out_probe));
        worst[5].1 = worst[5].1.max(relative_error(&analytic, &fd)).max(relative_error(&gx.data, &fdx));
    }
    Ok(worst)
}

pub fn check_gradients(seed: u64) -> Result<CheckReport> {
    let mut rng = stream(seed, 6);
    let mut worst = op_gradient_errors(&mut rng)?;
    let small = VaeShape {
        n: 4,
        d_a: 3,
        d_e: 2,
        hidden: 3,
    };
    let seeds: Vec<u64> = (0..20).map(|_| rng.random()).collect();
    let mut redrawn = 0;
    for (label, shape, stride) in [
        ("elbo (small, all params)", small, 1),
        ("elbo (default, every 7th param)", VaeShape::default(), 7),
    ] {
        let runs = seeds
            .par_iter()
            .map(|&s| elbo_gradient_error(shape, s, stride))
            .collect::<Result<Vec<_>>>()?;
        redrawn += runs.iter().map(|r| r.redrawn).sum::<usize>();
        worst.push((label, runs.iter().map(|r| r.relative_error).fold(0.0, f64::max)));
    }
    let passed = worst.iter().all(|(_, e)| *e < GRADIENT_TOL);
    let parts: Vec<String> = worst.iter().map(|(name, e)| format!("{name} {e:.1e}")).collect();
    Ok(CheckReport {
        id: 6,
        name: "gradients match central differences",
        passed,
        detail: format!(
            "20 instances each, h = {GRADIENT_STEP:e}, {redrawn} unresolvable ELBO candidates redrawn, max relative error: {}",
            parts.join(", ")
        ),
    })
}

/// `min_θ ||z1 - R(θ) z2||` on a uniform grid, expanding the objective as
/// `|z1|² + |z2|² - 2 Σ_blocks (c_f·cos fθ + s_f·sin fθ)`.
pub fn rotation_grid_oracle(z1: &[f64], z2: &[f64], freqs: &[u32], grid: usize) -> f64 {
    let mut fixed = 0.0;
    let max_f = freqs.iter().copied().max().unwrap_or(0) as usize;
    let mut cos_coef = vec![0.0; max_f + 1];
    let mut sin_coef = vec![0.0; max_f + 1];
    let mut at = 0;
    for &f in freqs {
        if f == 0 {
            fixed += z1[at] * z2[at];
            at += 1;
        } else {
            let (a1, a2, b1, b2) = (z1[at], z1[at + 1], z2[at], z2[at + 1]);
            cos_coef[f as usize] += a1 * b1 + a2 * b2;
            sin_coef[f as usize] += a2 * b1 - a1 * b2;
            at += 2;
        }
    }
    let base = norm(z1).powi(2) + norm(z2).powi(2) - 2.0 * fixed;
    let step = std::f64::consts::TAU / grid as f64;
    let mut best = f64::INFINITY;
    for i in 0..grid {
        let mut cross = 0.0;
        for f in 1..=max_f {
            if cos_coef[f] != 0.0 || sin_coef[f] != 0.0 {
                let (s, c) = (f as f64 * step * i as f64).sin_cos();
                cross += cos_coef[f] * c + sin_coef[f] * s;
            }
        }
        best = best.min(base - 2.0 * cross);
    }
    best.max(0.0).sqrt()
}

pub fn check_rotation_distance(seed: u64) -> Result<CheckReport> {
    let mut rng = stream(seed, 11);
    let cases: Vec<(Vec<u32>, Vec<f64>, Vec<f64>)> = (0..100)
        .map(|_| {
            let blocks = rng.random_range(2..=5);
            let mut freqs: Vec<u32> = (0..blocks).map(|_| rng.random_range(0..=4)).collect();
            freqs[0] = rng.random_range(1..=2);
            freqs[1] = rng.random_range(3..=4);
            let dim = crate::group::layout_dim(&freqs);
            (freqs, normal_vec(dim, &mut rng), normal_vec(dim, &mut rng))
        })
        .collect();
    let worst = cases
        .par_iter()
        .map(|(freqs, a, b)| {
            let fast = quotient_dist_rotation(a, b, freqs, DEFAULT_ROTATION_GRID)?.distance;
            Ok((fast - rotation_grid_oracle(a, b, freqs, ORACLE_GRID)).abs())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(CheckReport {
        id: 11,
        name: "rotation distance matches a dense grid",
        passed: worst < ROTATION_TOL,
        detail: format!("100 multi-frequency pairs, 10^6-point grid, max |diff| = {worst:.3e} (tol {ROTATION_TOL:e})"),
    })
}
