//! Quotient distances `d([z1], [z2]) = min_g ||z1 - g·z2||`.
//!
//! An orbit is represented by any of its members, so every routine takes
//! plain vectors. The brute-force path enumerates the group and is the
//! reference for the fast paths: sorting for the symmetric group acting on
//! coordinates, and grid search plus golden-section refinement for planar
//! rotations acting through a frequency layout.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::group::{enumerate_group, rotate_layout, GroupElement, GroupSpec, Permutation};
use crate::invariant::sort_projection;
use crate::scalar::{euclidean, Scalar};

/// Default number of grid points for the rotation search.
pub const DEFAULT_ROTATION_GRID: usize = 720;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMethod {
    Bruteforce,
    Sorted,
    RotationOpt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuotientDistanceResult<T> {
    pub distance: T,
    /// Element `g` with `distance = ||z1 - g·z2||`.
    pub minimizer: GroupElement,
    pub method: DistanceMethod,
}

/// Exact minimum over the enumerated group. Ties go to the first element in
/// enumeration order.
pub fn quotient_dist_bruteforce<T: Scalar>(
    z1: &[T],
    z2: &[T],
    spec: &GroupSpec,
    cap: usize,
) -> Result<QuotientDistanceResult<T>> {
    check_dim("quotient distance", z1.len(), z2.len())?;
    check_dim("quotient distance vs group", spec.dim(), z1.len())?;
    let mut best: Option<(T, GroupElement)> = None;
    for g in enumerate_group(spec, cap)? {
        let d = euclidean(z1, &spec.act(&g, z2)?);
        if best.as_ref().is_none_or(|(b, _)| d < *b) {
            best = Some((d, g));
        }
    }
    let (distance, minimizer) = best.expect("groups are non-empty");
    Ok(QuotientDistanceResult {
        distance,
        minimizer,
        method: DistanceMethod::Bruteforce,
    })
}

/// Symmetric-group distance through the sorting cross section:
/// `||sort(z1) - sort(z2)||`.
pub fn quotient_dist_sorted<T: Scalar>(z1: &[T], z2: &[T]) -> Result<QuotientDistanceResult<T>> {
    check_dim("sorted quotient distance", z1.len(), z2.len())?;
    let s1 = sort_projection(z1)?;
    let s2 = sort_projection(z2)?;
    // σ1⁻¹σ2 carries z2 onto the positions z1 sorts from.
    let g: Permutation = s1.perm.inverse().compose(&s2.perm);
    Ok(QuotientDistanceResult {
        distance: euclidean(&s1.sorted, &s2.sorted),
        minimizer: GroupElement::Perm(g),
        method: DistanceMethod::Sorted,
    })
}

/// Rotation distance `min_θ ||z1 - R(θ) z2||` over the continuous circle.
///
/// The squared objective is scanned on a uniform grid of `grid` angles; the
/// three lowest local minima of the scan are refined by golden-section
/// search within their neighbouring grid cells.
pub fn quotient_dist_rotation<T: Scalar>(
    z1: &[T],
    z2: &[T],
    freqs: &[u32],
    grid: usize,
) -> Result<QuotientDistanceResult<T>> {
    check_dim("rotation quotient distance", z1.len(), z2.len())?;
    if grid < 8 {
        return Err(Error::Input(format!("rotation grid must have at least 8 points, got {grid}")));
    }
    let objective = RotationObjective::new(z1, z2, freqs)?;
    let tau = T::TAU();
    let step = tau / T::from_usize_lossy(grid);
    let values: Vec<T> = (0..grid)
        .map(|i| objective.eval(step * T::from_usize_lossy(i)))
        .collect();

    let mut minima: Vec<usize> = (0..grid)
        .filter(|&i| {
            let prev = values[(i + grid - 1) % grid];
            let next = values[(i + 1) % grid];
            values[i] <= prev && values[i] <= next
        })
        .collect();
    minima.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    minima.truncate(3);

    let mut best_theta = T::zero();
    let mut best_value = values[0];
    for &i in &minima {
        let centre = step * T::from_usize_lossy(i);
        let (theta, value) = golden_section(|t| objective.eval(t), centre - step, centre + step);
        let (theta, value) = if values[i] <= value { (centre, values[i]) } else { (theta, value) };
        if value < best_value {
            best_value = value;
            best_theta = theta;
        }
    }

    let rotated = rotate_layout(freqs, best_theta, z2)?;
    let angle = crate::group::normalize_angle(best_theta.as_f64());
    Ok(QuotientDistanceResult {
        distance: euclidean(z1, &rotated),
        minimizer: GroupElement::Angle(angle),
        method: DistanceMethod::RotationOpt,
    })
}

/// `||z1 - R(θ)z2||²` expanded as a trigonometric polynomial in θ.
struct RotationObjective<T> {
    constant: T,
    /// `(frequency, cos coefficient, sin coefficient)`.
    terms: Vec<(T, T, T)>,
}

impl<T: Scalar> RotationObjective<T> {
    fn new(z1: &[T], z2: &[T], freqs: &[u32]) -> Result<Self> {
        check_dim("rotation layout", crate::group::layout_dim(freqs), z1.len())?;
        let two = T::lit(2.0);
        let mut constant = z1.iter().chain(z2).map(|&x| x * x).sum::<T>();
        let mut terms = Vec::new();
        let mut at = 0;
        for &f in freqs {
            if f == 0 {
                constant -= two * z1[at] * z2[at];
                at += 1;
            } else {
                let (a0, a1, b0, b1) = (z1[at], z1[at + 1], z2[at], z2[at + 1]);
                // a · R(φ)b = cos φ (a·b) + sin φ (a1 b0 - a0 b1)
                terms.push((T::from_u32(f).unwrap(), -two * (a0 * b0 + a1 * b1), -two * (a1 * b0 - a0 * b1)));
                at += 2;
            }
        }
        Ok(Self { constant, terms })
    }

    fn eval(&self, theta: T) -> T {
        self.terms.iter().fold(self.constant, |acc, &(f, c, s)| {
            let (sn, cs) = (f * theta).sin_cos();
            acc + c * cs + s * sn
        })
    }
}

fn golden_section<T: Scalar>(f: impl Fn(T) -> T, mut a: T, mut b: T) -> (T, T) {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= T::epsilon() * T::lit(4.0) * (T::one() + a.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Method selection for [`quotient_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Auto,
    Bruteforce,
    Sorted,
    Rotation,
}

impl std::str::FromStr for MethodChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "auto" => Self::Auto,
            "bruteforce" => Self::Bruteforce,
            "sorted" => Self::Sorted,
            "rotation" => Self::Rotation,
            other => return Err(Error::Input(format!("unknown distance method '{other}'"))),
        })
    }
}

/// Dispatches to the path that fits the group: sorting for symmetric
/// groups, the continuous search for rotation layouts.
pub fn quotient_distance<T: Scalar>(
    z1: &[T],
    z2: &[T],
    spec: &GroupSpec,
    method: MethodChoice,
    cap: usize,
    grid: usize,
) -> Result<QuotientDistanceResult<T>> {
    check_dim("quotient distance vs group", spec.dim(), z1.len())?;
    match (method, spec) {
        (MethodChoice::Bruteforce, _) => quotient_dist_bruteforce(z1, z2, spec, cap),
        (MethodChoice::Auto | MethodChoice::Sorted, GroupSpec::Symmetric { .. }) => {
            quotient_dist_sorted(z1, z2)
        }
        (MethodChoice::Auto | MethodChoice::Rotation, GroupSpec::Cyclic { freqs, .. }) => {
            quotient_dist_rotation(z1, z2, freqs, grid)
        }
        (m, s) => Err(Error::Unsupported(format!("method {m:?} for group {s}"))),
    }
}
