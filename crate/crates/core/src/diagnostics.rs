//! Dyadic slab functional, vanishing bound, no-concentration curves,
//! inner-product decay of bubble pairs and the energy and mass ledgers.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bubbles::{synth_bubble, BubbleSpec, CenterPath, Cutoff, Profile, ScalePath};
use crate::error::{Error, Result};
use crate::extraction::DecompositionReport;
use crate::fields::quadrature::pairwise_sum;
use crate::fields::{
    h12_inner, inner_parts, lp_power, rescaled_pullback, Field, FieldSequence, Quadrature,
    QuadratureSpec, RefGrid,
};
use crate::geometry::ManifoldModel;

pub fn critical_exponent(dim: usize) -> f64 {
    2.0 * dim as f64 / (dim as f64 - 2.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabProfile {
    /// `2^{(N-2)/2}`.
    pub base: f64,
    /// Exponents `m`; slab `m` is `base^m <= |u| < base^{m+1}`.
    pub levels: Vec<i32>,
    pub masses: Vec<f64>,
    pub sup_mass: f64,
    /// `∫ |u|^{2*}` on the same nodes.
    pub total: f64,
}

fn slab_index(v: f64, base: f64) -> i32 {
    let mut m = (v.ln() / base.ln()).floor() as i32;
    while base.powi(m) > v {
        m -= 1;
    }
    while base.powi(m + 1) <= v {
        m += 1;
    }
    m
}

/// Masses `∫_{base^m <= |u| < base^{m+1}} |u|^{2*}` over all occupied levels.
pub fn dyadic_slab_profile(u: &Field, spec: &QuadratureSpec) -> Result<SlabProfile> {
    let n = u.model().dim;
    let base = 2f64.powf((n as f64 - 2.0) / 2.0);
    let empty = SlabProfile {
        base,
        levels: Vec::new(),
        masses: Vec::new(),
        sup_mass: 0.0,
        total: 0.0,
    };
    if u.is_zero() {
        return Ok(empty);
    }
    let p = critical_exponent(n);
    let q = Quadrature::for_fields(&[u], spec)?;
    let vals: Vec<(f64, f64)> = q
        .nodes
        .par_iter()
        .map(|nd| (u.value(&nd.point).abs(), nd.weight))
        .collect();
    let occupied: Vec<i32> = vals
        .iter()
        .filter(|(v, _)| *v > 0.0)
        .map(|(v, _)| slab_index(*v, base))
        .collect();
    let (Some(&lo), Some(&hi)) = (occupied.iter().min(), occupied.iter().max()) else {
        return Ok(empty);
    };
    let mut per: Vec<Vec<f64>> = vec![Vec::new(); (hi - lo + 1) as usize];
    let mut all = Vec::with_capacity(vals.len());
    for (v, w) in &vals {
        if *v > 0.0 {
            let c = w * v.powf(p);
            per[(slab_index(*v, base) - lo) as usize].push(c);
            all.push(c);
        }
    }
    let masses: Vec<f64> = per.iter().map(|v| pairwise_sum(v)).collect();
    let sup_mass = masses.iter().cloned().fold(0.0, f64::max);
    Ok(SlabProfile {
        base,
        levels: (lo..=hi).collect(),
        masses,
        sup_mass,
        total: pairwise_sum(&all),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VanishingCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// `‖u‖_{2*}^{2*}` against `C ‖u‖²_{H^{1,2}} (sup slab mass)^{2/N}`.
pub fn vanishing_bound_check(
    u: &Field,
    spec: &QuadratureSpec,
    c_hat: f64,
) -> Result<VanishingCheck> {
    let n = u.model().dim as f64;
    let slabs = dyadic_slab_profile(u, spec)?;
    let (g, l) = inner_parts(u, u, spec)?;
    let lhs = slabs.total;
    let rhs = c_hat * (g + l) * slabs.sup_mass.powf(2.0 / n);
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(VanishingCheck { lhs, rhs, ratio })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c_hat: f64,
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
    /// Ratios on the test part with the calibrated constant.
    pub test_ratios: Vec<f64>,
}

/// Seeded 60/40 split; `C_hat` is the largest unit-constant ratio on the first part.
pub fn calibrate_c_hat(fields: &[Field], seed: u64, spec: &QuadratureSpec) -> Result<Calibration> {
    if fields.len() < 2 {
        return Err(Error::Argument(
            "calibration needs at least two fields".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..fields.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((fields.len() as f64 * 0.6).round() as usize).clamp(1, fields.len() - 1);
    let (cal, test) = idx.split_at(cut);
    let mut c_hat = 0.0f64;
    for &i in cal {
        c_hat = c_hat.max(vanishing_bound_check(&fields[i], spec, 1.0)?.ratio);
    }
    let test_ratios = test
        .iter()
        .map(|&i| vanishing_bound_check(&fields[i], spec, c_hat).map(|v| v.ratio))
        .collect::<Result<_>>()?;
    Ok(Calibration {
        c_hat,
        calibration: cal.to_vec(),
        test: test.to_vec(),
        test_ratios,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoConcCurve {
    pub ks: Vec<i32>,
    pub maxima: Vec<f64>,
    pub passes: bool,
}

/// Grid maxima of `|t_k^{(N-2)/2} u_k(e_{y_k}(t_k ξ))|`; passes when the last three
/// samples strictly decrease, or the curve vanishes.
pub fn noconc_test(
    u: &FieldSequence,
    center: &CenterPath,
    scale: &ScalePath,
    grid: &RefGrid,
    ks: &[i32],
) -> Result<NoConcCurve> {
    let mut maxima = Vec::with_capacity(ks.len());
    for &k in ks {
        let f = u.at(k)?;
        let y = center.at(f.model(), k);
        let s = rescaled_pullback(&f, &y, scale.at(k), grid)?;
        maxima.push(s.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    }
    let vanishing = maxima.iter().all(|&v| v < 1e-12);
    let n = maxima.len();
    let decreasing = n >= 3 && (n - 3..n - 1).all(|i| maxima[i + 1] < maxima[i] * (1.0 - 1e-6));
    Ok(NoConcCurve {
        ks: ks.to_vec(),
        maxima,
        passes: vanishing || decreasing,
    })
}

/// `u_k(x) = k^{-N/2} v(x / k)` on euclidean space: bounded in `H^{1,2}`, spreading out.
pub fn spreading_sequence(
    model: &ManifoldModel,
    profile: Profile,
    k_range: (i32, i32),
) -> Result<FieldSequence> {
    let m = model.clone();
    let prof = Arc::new(Field::profile(model.dim, profile)?);
    Ok(FieldSequence::new(k_range, move |k| {
        let t = k as f64;
        let term = Field::scaled(
            &m,
            &m.origin(),
            t,
            t.powf(-(m.dim as f64) / 2.0),
            None,
            prof.clone(),
        )?;
        Ok(Field::new(&m, vec![(1.0, term)]))
    }))
}

/// `h12_inner` of the two synthesized bubbles at every `k`.
pub fn ao_decay_curve(
    model: &ManifoldModel,
    a: &BubbleSpec,
    b: &BubbleSpec,
    cutoff: &Cutoff,
    ks: &[i32],
    spec: &QuadratureSpec,
) -> Result<Vec<f64>> {
    ks.iter()
        .map(|&k| {
            h12_inner(
                &synth_bubble(model, a, cutoff, k)?,
                &synth_bubble(model, b, cutoff, k)?,
                spec,
            )
        })
        .collect()
}

/// `∫|a + b|^{2*} - ∫|a|^{2*} - ∫|b|^{2*}`.
pub fn brezis_lieb_defect(a: &Field, b: &Field, spec: &QuadratureSpec) -> Result<f64> {
    let p = critical_exponent(a.model().dim);
    Ok(lp_power(&a.plus(1.0, b), p, spec)? - lp_power(a, p, spec)? - lp_power(b, p, spec)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub k: i32,
    /// `∫ |∇w*|²` per bubble.
    pub bubbles: Vec<f64>,
    /// `∫ (|∇w̄|² + w̄²)` per shift.
    pub shifts: Vec<f64>,
    pub weak_limit: f64,
    pub lhs: f64,
    pub input_gradient: f64,
    pub input_l2: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassRow {
    pub k: i32,
    pub bubbles: Vec<f64>,
    pub shifts: Vec<f64>,
    pub weak_limit: f64,
    pub sum: f64,
    /// `∫ |u_k|^{2*}`.
    pub input: f64,
    pub ratio: f64,
    pub gap: f64,
}

/// Both sides of the energy inequality and the mass balance at every evaluation step.
pub fn ledgers(
    report: &DecompositionReport,
    u: &FieldSequence,
    spec: &QuadratureSpec,
) -> Result<(Vec<EnergyRow>, Vec<MassRow>)> {
    let p = critical_exponent(report.model.dim);
    let be: Vec<f64> = report.bubbles.iter().map(|b| b.profile_energy).collect();
    let bm: Vec<f64> = report.bubbles.iter().map(|b| b.profile_mass).collect();
    let se: Vec<f64> = report
        .shift_terms
        .iter()
        .map(|s| s.component.energy + s.component.l2)
        .collect();
    let sm: Vec<f64> = report
        .shift_terms
        .iter()
        .map(|s| s.component.mass)
        .collect();
    let we = report.weak_limit.energy + report.weak_limit.l2;
    let wm = report.weak_limit.mass;
    let mut erows = Vec::new();
    let mut mrows = Vec::new();
    for &k in &report.config.k_eval {
        let f = u.at(k)?;
        let (g, l) = inner_parts(&f, &f, spec)?;
        let mass = lp_power(&f, p, spec)?;
        let lhs = be.iter().sum::<f64>() + se.iter().sum::<f64>() + we;
        erows.push(EnergyRow {
            k,
            bubbles: be.clone(),
            shifts: se.clone(),
            weak_limit: we,
            lhs,
            input_gradient: g,
            input_l2: l,
            rhs: g + l,
            slack: g + l - lhs,
        });
        let sum = bm.iter().sum::<f64>() + sm.iter().sum::<f64>() + wm;
        mrows.push(MassRow {
            k,
            bubbles: bm.clone(),
            shifts: sm.clone(),
            weak_limit: wm,
            sum,
            input: mass,
            ratio: if mass == 0.0 { 0.0 } else { sum / mass },
            gap: mass - sum,
        });
    }
    Ok((erows, mrows))
}
