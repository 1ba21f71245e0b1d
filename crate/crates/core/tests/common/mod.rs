//! Independent reference implementations used by the integration and
//! acceptance tests. None of these call into the estimation code paths they
//! check.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use sepeff_core::{fit_models, Dataset, MediatorSchema, SimulatedData, SubjectRecord};

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Outcome design row: a, m_1..m_k, a*m_j for non-structural j, then c.
pub fn cox_row(a: u8, m: &[u8], ell: usize, c: &[f64]) -> Vec<f64> {
    let af = a as f64;
    let mut x = vec![af];
    for &v in m {
        x.push(v as f64);
    }
    for &v in &m[ell..] {
        x.push(af * v as f64);
    }
    x.extend_from_slice(c);
    x
}

/// Regressors of mediator factor j (no intercept).
pub fn mediator_regressors(j: usize, ell: usize, a: u8, c: &[f64], m: &[u8]) -> Vec<f64> {
    let af = a as f64;
    let mut x = Vec::new();
    if j < ell {
        x.extend_from_slice(c);
        for &v in &m[..j] {
            x.push(v as f64);
        }
    } else {
        x.push(af);
        x.extend_from_slice(c);
        for (i, &v) in m[..j].iter().enumerate() {
            x.push(if i < ell { af * v as f64 } else { v as f64 });
        }
    }
    x
}

pub fn mediator_prob(betas: &[Vec<f64>], ell: usize, a: u8, c: &[f64], m: &[u8]) -> f64 {
    let mut p = 1.0;
    for j in 0..m.len() {
        let p1 = if a == 0 && j < ell {
            0.0
        } else {
            let x = mediator_regressors(j, ell, a, c, m);
            let b = &betas[j];
            expit(b[0] + x.iter().zip(&b[1..]).map(|(x, b)| x * b).sum::<f64>())
        };
        p *= if m[j] == 1 { p1 } else { 1.0 - p1 };
    }
    p
}

pub fn step_lookup(times: &[f64], values: &[f64], t: f64) -> f64 {
    let mut out = 0.0;
    for (s, v) in times.iter().zip(values) {
        if *s <= t {
            out = *v;
        }
    }
    out
}

pub fn all_vectors(k: usize) -> Vec<Vec<u8>> {
    (0..1usize << k)
        .map(|idx| (0..k).map(|j| ((idx >> j) & 1) as u8).collect())
        .collect()
}

/// Double sum over subjects and mediator vectors of outcome risk times
/// mediator probability.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_psi(
    theta: &[f64],
    base_times: &[f64],
    base_values: &[f64],
    betas: &[Vec<f64>],
    d: &Dataset,
    a: u8,
    a_star: u8,
    t: f64,
    w: &[f64],
) -> f64 {
    let (k, ell) = (d.k(), d.ell());
    let lambda = step_lookup(base_times, base_values, t);
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, &wi) in d.records().iter().zip(w) {
        let mut inner = 0.0;
        for m in all_vectors(k) {
            let x = cox_row(a_star, &m, ell, &r.c);
            let eta: f64 = x.iter().zip(theta).map(|(x, b)| x * b).sum();
            let risk = 1.0 - (-lambda * eta.exp()).exp();
            inner += risk * mediator_prob(betas, ell, a, &r.c, &m);
        }
        num += wi * inner;
        den += wi;
    }
    num / den
}

/// Weighted Breslow partial log-likelihood by direct risk-set sums.
pub fn partial_loglik(
    x: &[Vec<f64>],
    times: &[f64],
    events: &[bool],
    w: &[f64],
    beta: &[f64],
) -> f64 {
    let eta: Vec<f64> = x
        .iter()
        .map(|xi| xi.iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect();
    let mut ll = 0.0;
    for i in 0..times.len() {
        if !events[i] {
            continue;
        }
        let s: f64 = (0..times.len())
            .filter(|&j| times[j] >= times[i])
            .map(|j| w[j] * eta[j].exp())
            .sum();
        ll += w[i] * (eta[i] - s.ln());
    }
    ll
}

/// Maximizes a concave function of two variables by repeatedly zooming a
/// square grid around the best point.
pub fn grid_argmax_2d(f: impl Fn(&[f64]) -> f64, half_width: f64) -> [f64; 2] {
    let mut centre = [0.0, 0.0];
    let mut h = half_width;
    let steps = 20;
    while h > 1e-10 {
        let mut best = (f64::NEG_INFINITY, centre);
        for i in 0..=steps {
            for j in 0..=steps {
                let p = [
                    centre[0] - h + 2.0 * h * i as f64 / steps as f64,
                    centre[1] - h + 2.0 * h * j as f64 / steps as f64,
                ];
                let v = f(&p);
                if v > best.0 {
                    best = (v, p);
                }
            }
        }
        centre = best.1;
        h *= 0.25;
    }
    centre
}

/// Checks that `alloc` is a largest-remainder rounding of the quotas
/// `w_i * total / sum(w)`: it sums to `total`, every entry is the floor or
/// the floor plus one, and no rounded-down entry has a strictly larger
/// remainder than a rounded-up one (ties go to the lower index).
pub fn check_apportionment(weights: &[u64], total: usize, alloc: &[usize]) -> Result<(), String> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if alloc.iter().sum::<usize>() != total {
        return Err(format!("{alloc:?} does not sum to {total}"));
    }
    let quota = |i: usize| weights[i] as u128 * total as u128;
    let mut up = Vec::new();
    let mut down = Vec::new();
    for i in 0..weights.len() {
        let fl = (quota(i) / sum) as usize;
        match alloc[i] {
            x if x == fl => down.push(i),
            x if x == fl + 1 && quota(i) % sum != 0 => up.push(i),
            _ => {
                return Err(format!(
                    "entry {i} = {} is not a rounding of {}/{sum}",
                    alloc[i],
                    quota(i)
                ))
            }
        }
    }
    for &u in &up {
        for &d in &down {
            let (ru, rd) = (quota(u) % sum, quota(d) % sum);
            if rd > ru || (rd == ru && d < u) {
                return Err(format!(
                    "entry {d} (remainder {rd}) should round up before {u} (remainder {ru})"
                ));
            }
        }
    }
    Ok(())
}

/// Integral of `g(s)` against the N(0, 4) density of the covariate sum,
/// trapezoid rule on a wide, fine grid.
pub fn normal4_expectation(g: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi, n) = (-12.0f64, 12.0f64, 4800usize);
    let h = (hi - lo) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let z = lo + h * i as f64;
        let wt = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += wt * (-0.5 * z * z).exp() * g(2.0 * z);
    }
    acc * h / (2.0 * std::f64::consts::PI).sqrt()
}

#[allow(clippy::too_many_arguments)]
/// Event probability by `t` when the outcome follows arm `(n, o)` and the
/// mediators follow arm `(mn, mo)`, for the default simulation design.
pub fn quadrature_risk(zeta: f64, xi: f64, tau: f64, t: f64, n: u8, o: u8, mn: u8, mo: u8) -> f64 {
    normal4_expectation(|s| {
        let p1 = mn as f64 * expit(-1.0 + s + xi * mo as f64);
        let p2 = expit(-2.0 + s + mn as f64 + tau * mo as f64);
        let mut total = 0.0;
        for (m1, m2) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
            let pm = (if m1 == 1 { p1 } else { 1.0 - p1 }) * (if m2 == 1 { p2 } else { 1.0 - p2 });
            let lp =
                0.25 * s - 1.5 * m1 as f64 - 1.5 * m2 as f64 + 0.5 * o as f64 + zeta * n as f64;
            total += pm * (1.0 - (-(t.sqrt() / 2.0) * lp.exp()).exp());
        }
        total
    })
}

/// Quadrature versions of (joint, anesthesia, surgery, gamma, eta).
pub fn quadrature_truths(zeta: f64, xi: f64, tau: f64, t: f64) -> [f64; 5] {
    let r = |n, o, mn, mo| quadrature_risk(zeta, xi, tau, t, n, o, mn, mo);
    let (r00, r01, r11) = (r(0, 0, 0, 0), r(0, 1, 0, 1), r(1, 1, 1, 1));
    let r11_m00 = r(1, 1, 0, 0);
    let r01_m00 = r(0, 1, 0, 0);
    [
        r11 / r00,
        r01 / r00,
        r11 / r01,
        r11_m00 / r01_m00,
        r01_m00 / r01,
    ]
}

pub fn observed_csv(sim: &SimulatedData) -> Vec<u8> {
    let mut buf = Vec::new();
    for r in sim.observed.records() {
        buf.extend_from_slice(
            format!(
                "{:?},{},{:?},{},{}\n",
                r.c,
                r.a,
                r.m,
                r.time.to_bits(),
                r.event
            )
            .as_bytes(),
        );
    }
    buf
}

/// Random eligibility table: each month open with probability `density`,
/// plus a block of subjects eligible only at month 0.
pub fn random_eligibility(
    rng: &mut impl rand::Rng,
    n: usize,
    density: f64,
    month0_only: usize,
) -> sepeff_core::EligibilityTable {
    use sepeff_core::pseudo_exposure::MONTHS;
    let mut flags = Vec::with_capacity(n + month0_only);
    for _ in 0..n {
        let mut f = [false; MONTHS];
        for slot in f.iter_mut() {
            *slot = rng.random_bool(density);
        }
        if f[1..].iter().all(|&x| !x) {
            f[rng.random_range(1..MONTHS)] = true;
        }
        flags.push(f);
    }
    for _ in 0..month0_only {
        let mut f = [false; MONTHS];
        f[0] = true;
        flags.push(f);
    }
    let ids = (0..flags.len()).map(|i| format!("u{i}")).collect();
    sepeff_core::EligibilityTable::new(ids, flags).unwrap()
}

/// Checks expected counts against floating-point apportionment, per-month
/// counts against the expected counts plus reported overfill, and every
/// assignment against eligibility.
pub fn check_assignment(
    hist: &[u64; 10],
    elig: &sepeff_core::EligibilityTable,
    out: &sepeff_core::MonthAssignment,
) -> Result<(), String> {
    let month0_only = |i: usize| elig.flags()[i][0] && elig.flags()[i][1..].iter().all(|&x| !x);
    let base = (0..elig.len()).filter(|&i| !month0_only(i)).count();
    check_apportionment(hist, base, &out.expected)?;
    let want = out.expected;
    let counts = out.counts();
    for m in 1..10 {
        let extra = out
            .overfill
            .iter()
            .find(|(month, _)| *month == m)
            .map_or(0, |&(_, x)| x);
        if counts[m] != want[m] + extra {
            return Err(format!(
                "month {m}: assigned {} expected {} overfill {extra}",
                counts[m], want[m]
            ));
        }
    }
    let overfill_total: usize = out.overfill.iter().map(|&(_, x)| x).sum();
    let set_aside = (0..elig.len()).filter(|&i| month0_only(i)).count();
    if counts[0] > want[0] {
        return Err(format!("month 0 over target: {} > {}", counts[0], want[0]));
    }
    if overfill_total == 0 && set_aside >= want[0] && counts[0] != want[0] {
        return Err(format!(
            "month 0: assigned {} expected {}",
            counts[0], want[0]
        ));
    }
    for (i, m) in out.months.iter().enumerate() {
        match m {
            Some(m) if !elig.flags()[i][*m as usize] => {
                return Err(format!("subject {i} not eligible at month {m}"))
            }
            None if !out.excluded.contains(&i) => {
                return Err(format!("subject {i} unassigned but not excluded"))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Small random dataset honouring structural zeros, redrawn until the
/// models fit.
pub fn small_dataset(rng: &mut impl Rng, n: usize, p: usize, k: usize, ell: usize) -> Dataset {
    loop {
        let records: Vec<SubjectRecord> = (0..n)
            .map(|_| {
                let c: Vec<f64> = (0..p)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let a = u8::from(rng.random_bool(0.5));
                let m = (0..k)
                    .map(|j| {
                        if a == 0 && j < ell {
                            0
                        } else {
                            u8::from(rng.random_bool(0.5))
                        }
                    })
                    .collect();
                let time = rng.random_range(0.1..5.0f64);
                SubjectRecord {
                    c,
                    a,
                    m,
                    time,
                    event: rng.random_bool(0.8),
                }
            })
            .collect();
        let d = Dataset::new(
            MediatorSchema::with_default_names(k, ell).unwrap(),
            p,
            records,
        )
        .unwrap();
        if fit_models(&d, &vec![1.0; n]).is_ok() {
            return d;
        }
    }
}
