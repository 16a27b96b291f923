//! Sub/supersolution pairs, their node-wise verification and the search for
//! the constants `C`, `δ`, `λ`.
//!
//! Every check evaluates the discrete inequality at interior nodes. The
//! quantifiers "for all admissible `v` and `ε`" are removed by taking the
//! exact supremum (or infimum) of the right-hand side over the interval
//! `|v| <= max(|lower_v|, |upper_v|)` and the range of `ε`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Grid, ScalarField};
use crate::problem::ProblemData;
use crate::spectral::{neg_laplacian, EigenPair, TorsionField};

/// Relative width of the band around the nodal contour where the singular
/// factor is bounded with `ε` alone.
pub const CONTOUR_BAND: f64 = 1e-12;

const SEARCH_CAP: f64 = (1u64 << 30) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    ConstantSign,
    SignChanging,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c: f64,
    pub delta: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct SubSuperPair {
    pub lower: [ScalarField; 2],
    pub upper: [ScalarField; 2],
    pub kind: PairKind,
    pub constants: Constants,
    /// `ε` interval for which the last verification passed.
    pub verified_for_eps: Option<(f64, f64)>,
}

impl SubSuperPair {
    /// Largest violation of `lower <= upper`, zero when ordered.
    pub fn order_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for (l, u) in self.lower[i].values().iter().zip(self.upper[i].values()) {
                worst = worst.max(l - u);
            }
        }
        worst
    }
}

/// `(-Cẽ, -Cẽ) / (Cẽ, Cẽ)` on the nodes of the original grid.
pub fn build_constant_sign(torsion: &TorsionField, c: f64) -> Result<SubSuperPair> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::config("C", format!("must be positive, got {c}")));
    }
    let up = torsion.on_omega.scaled(c);
    let lo = torsion.on_omega.scaled(-c);
    Ok(SubSuperPair {
        lower: [lo.clone(), lo],
        upper: [up.clone(), up],
        kind: PairKind::ConstantSign,
        constants: Constants {
            c,
            delta: 0.0,
            lambda: 0.0,
        },
        verified_for_eps: None,
    })
}

/// `φ₁^γ - γ φ₁` for each exponent.
pub fn build_sign_changing(eigen: &EigenPair, gamma1: f64, gamma2: f64) -> Result<(ScalarField, ScalarField)> {
    for (name, g) in [("gamma1", gamma1), ("gamma2", gamma2)] {
        if !(g > 0.0 && g < 1.0) {
            return Err(Error::config(name, format!("must lie in (0,1), got {g}")));
        }
    }
    let f = |g: f64| eigen.phi1.map(|p| p.powf(g) - g * p);
    Ok((f(gamma1), f(gamma2)))
}

/// `(-Cẽ, -Cẽ) / (ū, v̄)`: the order interval of the auxiliary problem.
pub fn sign_changing_pair(data: &ProblemData, torsion: &TorsionField, c: f64) -> Result<SubSuperPair> {
    let (ub, vb) = build_sign_changing(&data.eigen, data.comps[0].gamma()?, data.comps[1].gamma()?)?;
    let lo = torsion.on_omega.scaled(-c);
    Ok(SubSuperPair {
        lower: [lo.clone(), lo],
        upper: [ub, vb],
        kind: PairKind::SignChanging,
        constants: Constants {
            c,
            delta: 0.0,
            lambda: data.lambda,
        },
        verified_for_eps: None,
    })
}

/// Count of interior nodes where the sign of `upper` disagrees with the
/// side of the level `rho`, outside the contour band.
pub fn sign_structure_violations(grid: &Grid, upper: &ScalarField, phi1: &ScalarField, rho: f64) -> usize {
    let tol = CONTOUR_BAND * upper.max_abs();
    grid.interior_nodes()
        .filter(|&k| {
            let u = upper[k];
            if u.abs() <= tol {
                return false;
            }
            (u > 0.0) != (phi1[k] < rho)
        })
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Super,
    Sub,
}

/// Minimum margins over the three zones of the case split.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegionMargins {
    /// First `k` interior layers (the discrete `Ω_δ`).
    pub delta_band: Option<f64>,
    /// Strip nodes outside the band.
    pub strip: Option<f64>,
    /// Core nodes outside the band.
    pub core: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub kind: PairKind,
    pub side: Side,
    /// 1 or 2.
    pub component: usize,
    pub eps_range: (f64, f64),
    pub passed: bool,
    pub min_margin: f64,
    pub worst_node: Option<usize>,
    pub regions: RegionMargins,
    pub band_layers: usize,
    /// Left side minus right side (super) or right side minus left side
    /// (sub) at each interior node, in storage order.
    pub margins: Vec<f64>,
}

/// Number of leading interior layers whose `φ₁` values all lie below
/// `l_est · δ`.
pub fn delta_band_layers(grid: &Grid, eigen: &EigenPair, delta: f64) -> usize {
    let max_layer = (grid.n1().min(grid.n2()) - 1) / 2;
    let mut layer_max = vec![f64::NEG_INFINITY; max_layer + 1];
    for k in grid.interior_nodes() {
        let l = grid.layer(k);
        layer_max[l] = layer_max[l].max(eigen.phi1[k]);
    }
    let bound = eigen.l_est * delta;
    (1..=max_layer).take_while(|&l| layer_max[l] < bound).count()
}

fn check_eps(eps: (f64, f64)) -> Result<()> {
    let (lo, hi) = eps;
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(Error::config(
            "eps_range",
            format!("need 0 < min <= max <= 1, got ({lo}, {hi})"),
        ));
    }
    Ok(())
}

/// Node-wise bounds of `a f(w) / (|own| + ε)^α` over `|w| <= w_bound` and
/// `ε` in `eps`. Returns `(inf, sup)`.
fn rhs_bounds(
    a: f64,
    f: &crate::problem::FSpec,
    w_bound: f64,
    own: f64,
    alpha: f64,
    eps: (f64, f64),
    own_scale: f64,
) -> (f64, f64) {
    let near_contour = own.abs() < CONTOUR_BAND * own_scale;
    let den = |e: f64| {
        if near_contour {
            e.powf(alpha)
        } else {
            (own.abs() + e).powf(alpha)
        }
    };
    if a > 0.0 {
        (a * f.inf_on(w_bound) / den(eps.1), a * f.sup_on(w_bound) / den(eps.0))
    } else if a < 0.0 {
        (a * f.sup_on(w_bound) / den(eps.0), a * f.inf_on(w_bound) / den(eps.1))
    } else {
        (0.0, 0.0)
    }
}

fn verify_side(
    pair: &SubSuperPair,
    data: &ProblemData,
    eps: (f64, f64),
    side: Side,
    delta: Option<f64>,
) -> Result<[VerificationReport; 2]> {
    check_eps(eps)?;
    let grid = &data.grid;
    let phi = data.phi1();
    let band_layers = delta.map_or(0, |d| delta_band_layers(grid, &data.eigen, d));
    let lambda = data.lambda;
    let mut out = Vec::with_capacity(2);
    for i in 0..2 {
        let j = 1 - i;
        let comp = &data.comps[i];
        let own = match side {
            Side::Super => &pair.upper[i],
            Side::Sub => &pair.lower[i],
        };
        grid.check(own)?;
        let lap = neg_laplacian(grid, own)?;
        let own_scale = own.max_abs();
        let mut margins = Vec::with_capacity(grid.interior_count());
        let mut min_margin = f64::INFINITY;
        let mut worst = None;
        let mut regions = RegionMargins::default();
        for k in grid.interior_nodes() {
            let lhs = lap[k] + lambda * (own[k] + phi[k]);
            let w = pair.lower[j][k].abs().max(pair.upper[j][k].abs());
            let (inf, sup) = rhs_bounds(comp.a[k], &comp.f, w, own[k], comp.alpha, eps, own_scale);
            // For a <= 0 the supersolution test only needs lhs >= 0.
            let sup = if comp.a[k] <= 0.0 { 0.0 } else { sup };
            let m = match side {
                Side::Super => lhs - sup,
                Side::Sub => inf - lhs,
            };
            margins.push(m);
            if m < min_margin {
                min_margin = m;
                worst = Some(k);
            }
            let slot = if grid.layer(k) <= band_layers {
                &mut regions.delta_band
            } else if comp.regions.strip[k] {
                &mut regions.strip
            } else {
                &mut regions.core
            };
            *slot = Some(slot.map_or(m, |v: f64| v.min(m)));
        }
        out.push(VerificationReport {
            kind: pair.kind,
            side,
            component: i + 1,
            eps_range: eps,
            passed: min_margin >= 0.0,
            min_margin,
            worst_node: worst,
            regions,
            band_layers,
            margins,
        });
    }
    let b = out.pop().unwrap();
    let a = out.pop().unwrap();
    Ok([a, b])
}

/// `-Δ_h upper + λ(upper + φ₁) >= sup of the reaction` at interior nodes,
/// for both equations.
pub fn verify_supersolution(
    pair: &SubSuperPair,
    data: &ProblemData,
    eps_range: (f64, f64),
) -> Result<[VerificationReport; 2]> {
    let delta = (pair.constants.delta > 0.0).then_some(pair.constants.delta);
    verify_side(pair, data, eps_range, Side::Super, delta)
}

/// `-Δ_h lower + λ(lower + φ₁) <= inf of the reaction` at interior nodes.
/// For `-Cẽ` the left side is evaluated node-wise from the padded torsion
/// field, which is sharper than the global bound through `μ/c`.
pub fn verify_subsolution(
    pair: &SubSuperPair,
    data: &ProblemData,
    eps_range: (f64, f64),
) -> Result<[VerificationReport; 2]> {
    let delta = (pair.constants.delta > 0.0).then_some(pair.constants.delta);
    verify_side(pair, data, eps_range, Side::Sub, delta)
}

/// `-Δ_h ū - sup reaction >= 0` on the band: the convexity part of the
/// supersolution inequality, without help from the shift. Vacuous when the
/// band is empty.
pub fn convexity_certificate(
    pair: &SubSuperPair,
    data: &ProblemData,
    eps: (f64, f64),
    delta: f64,
) -> Result<(bool, usize, f64)> {
    let grid = &data.grid;
    let layers = delta_band_layers(grid, &data.eigen, delta);
    let mut min = f64::INFINITY;
    for i in 0..2 {
        let j = 1 - i;
        let comp = &data.comps[i];
        let own = &pair.upper[i];
        let lap = neg_laplacian(grid, own)?;
        let scale = own.max_abs();
        for k in grid.interior_nodes().filter(|&k| grid.layer(k) <= layers) {
            let w = pair.lower[j][k].abs().max(pair.upper[j][k].abs());
            let (_, sup) = rhs_bounds(comp.a[k], &comp.f, w, own[k], comp.alpha, eps, scale);
            min = min.min(lap[k] - sup.max(0.0));
        }
    }
    Ok((layers == 0 || min >= 0.0, layers, min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub constants: Constants,
    pub band_layers: usize,
    /// Outer passes of the `C` / `λ` alternation.
    pub rounds: usize,
    pub constant_sign_super: [VerificationReport; 2],
    pub constant_sign_sub: [VerificationReport; 2],
    pub sign_changing_super: [VerificationReport; 2],
    pub ordering_violation: f64,
}

fn ordering_gap(torsion: &TorsionField, c: f64, ub: &ScalarField, vb: &ScalarField) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..ub.len() {
        let ce = c * torsion.on_omega[k];
        worst = worst.max(ub[k].abs() - ce).max(vb[k].abs() - ce);
    }
    worst
}

/// Doubling search for `C`, halving search for `δ` and doubling search for
/// `λ` (unless `fixed_lambda` is given). On success `data.lambda` and
/// `data.c_scale` hold the returned constants.
pub fn calibrate(
    data: &mut ProblemData,
    torsion: &TorsionField,
    eps_range: (f64, f64),
    fixed_lambda: Option<f64>,
) -> Result<Calibration> {
    check_eps(eps_range)?;
    let g1 = data.comps[0].gamma()?;
    let g2 = data.comps[1].gamma()?;
    let (ub, vb) = build_sign_changing(&data.eigen, g1, g2)?;
    data.lambda = fixed_lambda.unwrap_or(1.0);
    data.torsion_sup = Some(torsion.e_sup);
    let mut c = 2.0;
    let mut rounds = 0;
    loop {
        rounds += 1;
        // C: constant-sign pair and the ordering of the sign-changing bound.
        loop {
            let pair = build_constant_sign(torsion, c)?;
            let sup = verify_supersolution(&pair, data, eps_range)?;
            let sub = verify_subsolution(&pair, data, eps_range)?;
            let ordered = ordering_gap(torsion, c, &ub, &vb) <= 0.0;
            if sup.iter().all(|r| r.passed) && sub.iter().all(|r| r.passed) && ordered {
                break;
            }
            c *= 2.0;
            if c > SEARCH_CAP {
                let worst = sup
                    .iter()
                    .chain(&sub)
                    .map(|r| r.min_margin)
                    .fold(f64::INFINITY, f64::min);
                return Err(Error::Calibration {
                    reason: format!(
                        "C exceeded 2^30 at lambda = {}; worst constant-sign margin {worst:.3e}",
                        data.lambda
                    ),
                });
            }
        }
        data.c_scale = Some(c);

        let mut pair = sign_changing_pair(data, torsion, c)?;
        let mut delta = 0.5 * data.comps[0].rho.min(data.comps[1].rho);
        let mut band_layers;
        loop {
            let (ok, layers, _) = convexity_certificate(&pair, data, eps_range, delta)?;
            band_layers = layers;
            if ok {
                break;
            }
            delta *= 0.5;
        }

        let sc_super = loop {
            pair.constants = Constants {
                c,
                delta,
                lambda: data.lambda,
            };
            let rep = verify_supersolution(&pair, data, eps_range)?;
            if rep.iter().all(|r| r.passed) {
                break rep;
            }
            if fixed_lambda.is_some() {
                return Err(Error::Calibration {
                    reason: format!(
                        "sign-changing supersolution fails at the fixed lambda = {} (min margin {:.3e})",
                        data.lambda,
                        rep.iter().map(|r| r.min_margin).fold(f64::INFINITY, f64::min)
                    ),
                });
            }
            data.lambda *= 2.0;
            if data.lambda > SEARCH_CAP {
                return Err(Error::Calibration {
                    reason: format!(
                        "lambda exceeded 2^30; worst sign-changing supersolution margin {:.3e}",
                        rep.iter().map(|r| r.min_margin).fold(f64::INFINITY, f64::min)
                    ),
                });
            }
        };

        let cs_pair = build_constant_sign(torsion, c)?;
        let sup = verify_supersolution(&cs_pair, data, eps_range)?;
        let sub = verify_subsolution(&cs_pair, data, eps_range)?;
        if sup.iter().all(|r| r.passed) && sub.iter().all(|r| r.passed) {
            return Ok(Calibration {
                constants: Constants {
                    c,
                    delta,
                    lambda: data.lambda,
                },
                band_layers,
                rounds,
                constant_sign_super: sup,
                constant_sign_sub: sub,
                sign_changing_super: sc_super,
                ordering_violation: ordering_gap(torsion, c, &ub, &vb).max(0.0),
            });
        }
    }
}
