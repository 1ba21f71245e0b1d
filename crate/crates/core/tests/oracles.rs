mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sepeff_core::simulation::DgpConfig;
use sepeff_core::{
    augment_with_l, breslow_baseline, estimate_psi, estimate_psi01_extended, fit_mediator_model,
    fit_models, fit_weighted_cox, l_dataset, oracle_truths, CoxProblem, Dataset, DesignSpec,
    FitOptions, MediatorSchema, SubjectRecord,
};

fn tight() -> FitOptions {
    FitOptions {
        tol: 1e-12,
        max_iter: 200,
    }
}

#[test]
fn psi_matches_brute_force_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    for trial in 0..40 {
        let k = 1 + trial % 3;
        let ell = trial % (k + 1);
        let n = 30 + (trial * 7) % 21;
        let d = common::small_dataset(&mut rng, n, 1, k, ell);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
        let Ok(models) = fit_models(&d, &w) else {
            continue;
        };
        let betas: Vec<Vec<f64>> = models
            .mediators
            .fits()
            .iter()
            .map(|f| f.beta.clone())
            .collect();
        let t = rng.random_range(0.5..4.5);
        for (a, a_star) in [(0, 0), (0, 1), (1, 1)] {
            let got = estimate_psi(
                &models.cox,
                &models.baseline,
                &models.mediators,
                &d,
                a,
                a_star,
                t,
                &w,
            )
            .unwrap();
            let want = brute_force_psi(
                &models.cox.theta,
                models.baseline.times(),
                models.baseline.values(),
                &betas,
                &d,
                a,
                a_star,
                t,
                &w,
            );
            assert!(
                (got.risk - want).abs() <= 1e-12,
                "k={k} ell={ell} arm=({a},{a_star}): {} vs {want}",
                got.risk
            );
        }
        checked += 1;
    }
    assert!(checked >= 30);
}

#[test]
fn cox_matches_grid_search_maximizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..8 {
        let n = 40;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.sample(StandardNormal), rng.random_range(-1.0..1.0)])
            .collect();
        let times: Vec<f64> = x
            .iter()
            .map(|xi| {
                let u: f64 = rng.random_range(1e-9..1.0);
                (-u.ln() / (0.7 * xi[0] - 0.5 * xi[1]).exp() * 10.0).round() / 10.0 + 0.1
            })
            .collect();
        let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.75)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let design: Vec<f64> = x.iter().flatten().copied().collect();
        let problem = CoxProblem::from_design(2, design, times.clone(), events.clone()).unwrap();
        let fit = problem.fit(&w, &tight(), None).unwrap();
        let best = grid_argmax_2d(|b| partial_loglik(&x, &times, &events, &w, b), 4.0);
        for j in 0..2 {
            assert!(
                (fit.theta[j] - best[j]).abs() <= 1e-6,
                "{:?} vs {best:?}",
                fit.theta
            );
        }
        let ll = partial_loglik(&x, &times, &events, &w, &fit.theta);
        assert!((fit.loglik - ll).abs() <= 1e-9 * ll.abs().max(1.0));
    }
}

#[test]
fn cox_on_dataset_matches_grid_search() {
    // k = 1, ell = 1, p = 0: the design is (a, m_1)
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let records: Vec<SubjectRecord> = (0..60)
        .map(|i| {
            let a = u8::from(i % 3 != 0);
            let m1 = if a == 1 {
                u8::from(rng.random_bool(0.5))
            } else {
                0
            };
            let rate = (0.4 * a as f64 - 0.8 * m1 as f64).exp();
            let u: f64 = rng.random_range(1e-9..1.0);
            SubjectRecord {
                c: vec![],
                a,
                m: vec![m1],
                time: -u.ln() / rate,
                event: rng.random_bool(0.85),
            }
        })
        .collect();
    let d = Dataset::new(
        MediatorSchema::with_default_names(1, 1).unwrap(),
        0,
        records,
    )
    .unwrap();
    let w = vec![1.0; d.len()];
    let fit = fit_weighted_cox(&d, &DesignSpec::for_dataset(&d), &w, &tight()).unwrap();
    let x: Vec<Vec<f64>> = d
        .records()
        .iter()
        .map(|r| vec![r.a as f64, r.m[0] as f64])
        .collect();
    let times: Vec<f64> = d.records().iter().map(|r| r.time).collect();
    let events: Vec<bool> = d.records().iter().map(|r| r.event).collect();
    let best = grid_argmax_2d(|b| partial_loglik(&x, &times, &events, &w, b), 4.0);
    for j in 0..2 {
        assert!((fit.theta[j] - best[j]).abs() <= 1e-6);
    }
}

#[test]
fn breslow_equals_hand_nelson_aalen() {
    let times = [3.0, 1.0, 2.0, 2.0, 4.0];
    let records: Vec<SubjectRecord> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| SubjectRecord {
            c: vec![0.0],
            a: (i % 2) as u8,
            m: vec![0],
            time: t,
            event: true,
        })
        .collect();
    let d = Dataset::new(
        MediatorSchema::with_default_names(1, 0).unwrap(),
        1,
        records,
    )
    .unwrap();
    let spec = DesignSpec::for_dataset(&d);
    let zero = sepeff_core::CoxFit {
        theta: vec![0.0; spec.ncols()],
        loglik: 0.0,
        converged: true,
        iterations: 0,
        gradient_norm: 0.0,
    };
    let base = breslow_baseline(&zero, &d, &[1.0; 5]).unwrap();
    assert_eq!(base.times(), &[1.0, 2.0, 3.0, 4.0]);
    let h1 = 1.0 / 5.0;
    let h2 = h1 + 2.0 / 4.0;
    let h3 = h2 + 1.0 / 2.0;
    let h4 = h3 + 1.0 / 1.0;
    assert_eq!(base.values(), &[h1, h2, h3, h4]);
}

#[test]
fn extended_estimator_matches_triple_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let n = 48;
    let d = common::small_dataset(&mut rng, n, 1, 2, 1);
    let l: Vec<Vec<u8>> = d
        .records()
        .iter()
        .map(|r| {
            vec![u8::from(rng.random_bool(if r.a == 1 {
                0.65
            } else {
                0.35
            }))]
        })
        .collect();
    let w = vec![1.0; n];
    let dl = augment_with_l(&d, &l).unwrap();
    let models = fit_models(&dl, &w).unwrap();
    let lmodel = fit_mediator_model(&l_dataset(&d, &l).unwrap(), &w).unwrap();
    let t = 2.5;
    let betas: Vec<Vec<f64>> = models
        .mediators
        .fits()
        .iter()
        .map(|f| f.beta.clone())
        .collect();
    let lbetas: Vec<Vec<f64>> = lmodel.fits().iter().map(|f| f.beta.clone()).collect();
    let lambda = step_lookup(models.baseline.times(), models.baseline.values(), t);
    for l_arm in [0u8, 1] {
        let got = estimate_psi01_extended(
            &models.cox,
            &models.baseline,
            &models.mediators,
            &lmodel,
            &d,
            t,
            l_arm,
            &w,
        )
        .unwrap();
        let mut acc = 0.0;
        for r in d.records() {
            for lv in all_vectors(1) {
                let pl = mediator_prob(&lbetas, 0, l_arm, &r.c, &lv);
                let cl: Vec<f64> =
                    r.c.iter()
                        .copied()
                        .chain(lv.iter().map(|&v| v as f64))
                        .collect();
                for m in all_vectors(2) {
                    let x = cox_row(1, &m, 1, &cl);
                    let eta: f64 = x.iter().zip(&models.cox.theta).map(|(a, b)| a * b).sum();
                    let risk = 1.0 - (-lambda * eta.exp()).exp();
                    acc += pl * risk * mediator_prob(&betas, 1, 0, &cl, &m);
                }
            }
        }
        let want = acc / n as f64;
        assert!(
            (got - want).abs() <= 1e-12,
            "l_arm={l_arm}: {got} vs {want}"
        );
    }
}

#[test]
fn extended_estimator_ignores_l_arm_when_l_is_independent_of_exposure() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n = 40;
    let d = common::small_dataset(&mut rng, n, 1, 2, 1);
    let l: Vec<Vec<u8>> = (0..n).map(|i| vec![(i % 2) as u8]).collect();
    let w = vec![1.0; n];
    let dl = augment_with_l(&d, &l).unwrap();
    let models = fit_models(&dl, &w).unwrap();
    // L model with no exposure or covariate dependence
    let lmodel = sepeff_core::MediatorJointModel::from_parts(
        MediatorSchema::new(1, 0, vec!["l_1".into()]).unwrap(),
        1,
        vec![vec![0.2, 0.0, 0.0]],
    )
    .unwrap();
    let t = 2.0;
    let e0 = estimate_psi01_extended(
        &models.cox,
        &models.baseline,
        &models.mediators,
        &lmodel,
        &d,
        t,
        0,
        &w,
    )
    .unwrap();
    let e1 = estimate_psi01_extended(
        &models.cox,
        &models.baseline,
        &models.mediators,
        &lmodel,
        &d,
        t,
        1,
        &w,
    )
    .unwrap();
    assert!((e0 - e1).abs() <= 1e-15);
}

#[test]
fn monte_carlo_truths_agree_with_quadrature() {
    for (zeta, xi) in [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5)] {
        let cfg = DgpConfig {
            zeta,
            xi,
            seed: 99,
            ..Default::default()
        };
        let mc = oracle_truths(&cfg, 5.0, 400_000).unwrap();
        let q = quadrature_truths(zeta, xi, xi, 5.0);
        let pairs = [
            (mc.joint, q[0], mc.mc_se.joint),
            (mc.anesthesia, q[1], mc.mc_se.anesthesia),
            (mc.surgery, q[2], mc.mc_se.surgery),
            (mc.gamma_true, q[3], mc.mc_se.gamma),
            (mc.eta_true, q[4], mc.mc_se.eta),
        ];
        for (i, (m, qv, se)) in pairs.into_iter().enumerate() {
            assert!(
                (m - qv).abs() <= 4.0 * se + 1e-9,
                "zeta={zeta} xi={xi} #{i}: mc {m} quad {qv} se {se}"
            );
        }
    }
}

#[test]
fn quadrature_truths_near_published_anchors() {
    let q = quadrature_truths(0.0, 0.0, 0.0, 5.0);
    assert!((q[1] - 1.28).abs() < 0.01);
    assert!((q[2] - 0.71).abs() < 0.01);
    assert!((q[0] - 0.92).abs() < 0.01);
}

#[test]
fn large_sample_cox_recovers_generating_coefficients() {
    // Y = (2E / exp(lp))^2 has cumulative hazard sqrt(y) exp(lp) / 2
    let sim = sepeff_core::generate_dataset(&DgpConfig {
        n: 100_000,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let d = &sim.observed;
    let fit = fit_weighted_cox(
        d,
        &DesignSpec::for_dataset(d),
        &vec![1.0; d.len()],
        &FitOptions::default(),
    )
    .unwrap();
    let spec = DesignSpec::for_dataset(d);
    let want = [
        // (column, truth, about four sampling SDs at this n)
        (spec.exposure_index(), 0.5, 0.1),
        (spec.mediator_index(0), -1.5, 0.15),
        (spec.mediator_index(1), -1.5, 0.15),
        (spec.interaction_index(1).unwrap(), 0.0, 0.2),
        (spec.covariate_index(0), 0.25, 0.03),
        (spec.covariate_index(3), 0.25, 0.03),
    ];
    for (ix, v, tol) in want {
        assert!(
            (fit.theta[ix] - v).abs() < tol,
            "column {ix}: {} vs {v}",
            fit.theta[ix]
        );
    }
}
