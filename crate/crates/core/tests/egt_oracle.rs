mod common;

use common::{dense_stationary, linf, oracle_matrix, random_params, rho_sum, rng};
use govtrust_core::egt::{
    build_transition_matrix, fixation_probability, simulate_chain, simulate_chain_partitioned,
    stationary_distribution, stationary_residual, EgtError, STATES,
};
use govtrust_core::{analyze, ActionProfile, EgtConfig, GameParams, TrustMode};
use rand::Rng;

fn cfg(mode: TrustMode, params: GameParams, population: u32, beta: f64) -> EgtConfig {
    EgtConfig {
        population,
        beta,
        mode,
        params,
    }
}

#[test]
fn rho_matches_direct_sum() {
    let mut r = rng(10);
    for _ in 0..2000 {
        let z = r.random_range(2..=200u32);
        let beta = r.random_range(0.0..2.0);
        let delta = r.random_range(-0.5..0.5);
        let want = rho_sum(delta, z, beta);
        let got = fixation_probability(delta, z, beta);
        assert!(
            (got - want).abs() <= 1e-12 * want.max(1e-300) + 1e-300,
            "{delta} {z} {beta}: {got} vs {want}"
        );
    }
}

#[test]
fn rho_examples() {
    assert_eq!(fixation_probability(0.0, 100, 1.0), 0.01);
    let up = fixation_probability(1.0, 10, 1.0);
    assert!((up - rho_sum(1.0, 10, 1.0)).abs() < 1e-15);
    // (1 - e^{-1}) / (1 - e^{-10})
    assert!((up - 0.632_149_3).abs() < 1e-7, "{up}");
    let down = fixation_probability(-1.0, 10, 1.0);
    assert!((down - rho_sum(-1.0, 10, 1.0)).abs() < 1e-18);
    // (1 - e) / (1 - e^10), i.e. e^{-9} (1 - e^{-1}) / (1 - e^{-10})
    assert!((down - 7.801_341e-5).abs() < 1e-10, "{down}");
}

#[test]
fn rho_neutral_and_monotone() {
    for z in [2, 3, 10, 100, 1000] {
        for beta in [0.0, 0.5, 1.0, 10.0] {
            assert!((fixation_probability(0.0, z, beta) - 1.0 / f64::from(z)).abs() <= 1e-12);
        }
        let mut last = 0.0;
        for k in -400..=400 {
            let rho = fixation_probability(f64::from(k) * 0.01, z, 1.0);
            assert!(
                rho > last || (rho == last && (rho == 0.0 || rho == 1.0)),
                "z={z} k={k}"
            );
            assert!((0.0..=1.0).contains(&rho));
            last = rho;
        }
    }
}

#[test]
fn detailed_balance_ratio() {
    let mut r = rng(11);
    for _ in 0..2000 {
        let z = r.random_range(2..=100u32);
        let beta = r.random_range(0.01..1.0);
        let delta = r.random_range(-2.0..2.0);
        let ratio = fixation_probability(delta, z, beta) / fixation_probability(-delta, z, beta);
        let want = (beta * delta * f64::from(z - 1)).exp();
        assert!(((ratio - want) / want).abs() <= 1e-9, "{delta} {z} {beta}");
    }
}

#[test]
fn matrix_matches_oracle_chain() {
    let mut r = rng(12);
    for i in 0..300 {
        let p = if i == 0 {
            GameParams::default()
        } else {
            random_params(&mut r)
        };
        let mode = TrustMode::ALL[i % 2];
        let z = r.random_range(2..=60u32);
        let beta = r.random_range(0.0..0.5);
        let m = build_transition_matrix(&cfg(mode, p, z, beta)).unwrap();
        let o = oracle_matrix(&p, mode, z, beta);
        for (a, row) in m.iter().enumerate() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (b, x) in row.iter().enumerate() {
                assert!((x - o[(a, b)]).abs() <= 1e-12, "entry {a},{b}");
            }
        }
    }
}

#[test]
fn neutral_user_entry() {
    let m = build_transition_matrix(&EgtConfig::default()).unwrap();
    let ndd = ActionProfile::parse_code("NDD").unwrap().index();
    let ctdd = ActionProfile::parse_code("CTDD").unwrap().index();
    assert!((m[ndd][ctdd] - 1.0 / 3.0 * 0.01).abs() <= 1e-18);
}

#[test]
fn neutral_chain_is_uniform() {
    let c = cfg(TrustMode::Conditional, GameParams::default(), 100, 0.0);
    let m = build_transition_matrix(&c).unwrap();
    for (i, row) in m.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            if (i ^ j).count_ones() == 1 {
                assert!((x - 1.0 / 3.0 * 0.01).abs() <= 1e-18);
            }
        }
    }
    let pi = analyze(&c).unwrap().distribution;
    assert!(pi.iter().all(|x| (x - 0.125).abs() <= 1e-10));
}

#[test]
fn doubly_stochastic_is_uniform() {
    let mut r = rng(13);
    let mut m = [[0.0; 5]; 5];
    // convex mix of permutation matrices
    for _ in 0..6 {
        let w = r.random_range(0.05..1.0);
        let shift = r.random_range(0..5);
        for (i, row) in m.iter_mut().enumerate() {
            row[(i + shift) % 5] += w;
        }
    }
    let total: f64 = m[0].iter().sum();
    m.iter_mut().flatten().for_each(|x| *x /= total);
    m.iter_mut().enumerate().for_each(|(i, row)| row[i] += 0.0);
    let pi = stationary_distribution(&m).unwrap();
    assert!(pi.iter().all(|x| (x - 0.2).abs() < 1e-12), "{pi:?}");
}

#[test]
fn stationary_matches_dense_solve() {
    let mut r = rng(14);
    for i in 0..300 {
        let p = if i < 2 {
            GameParams::default()
        } else {
            random_params(&mut r)
        };
        let mode = TrustMode::ALL[i % 2];
        let z = r.random_range(2..=120u32);
        let beta = r.random_range(0.0..2.0);
        let c = cfg(mode, p, z, beta);
        let res = analyze(&c).unwrap();
        assert!(
            (res.distribution.iter().sum::<f64>() - 1.0).abs() <= 1e-10,
            "{c:?} {:?}",
            res.distribution
        );
        assert!(res.distribution.iter().all(|x| *x >= 0.0));
        assert!(stationary_residual(&res.transition_matrix, &res.distribution) <= 1e-9);
        let dense = dense_stationary(&oracle_matrix(&p, mode, z, beta));
        assert!(
            linf(&res.distribution, &dense) <= 1e-8,
            "{c:?}: {:?} vs {dense:?}",
            res.distribution
        );
    }
}

#[test]
fn extreme_selection_never_yields_nan() {
    let mut r = rng(18);
    let mut solved = 0;
    for i in 0..300 {
        let c = cfg(
            TrustMode::ALL[i % 2],
            random_params(&mut r),
            r.random_range(50..=1000),
            r.random_range(1.0..20.0),
        );
        match analyze(&c) {
            Ok(res) => {
                solved += 1;
                assert!(res.distribution.iter().all(|x| x.is_finite() && *x >= 0.0));
                assert!((res.distribution.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
                assert!(stationary_residual(&res.transition_matrix, &res.distribution) <= 1e-9);
            }
            Err(e) => assert!(
                matches!(e, EgtError::Reducible(_) | EgtError::NotConverged { .. }),
                "{e}"
            ),
        }
    }
    assert!(solved > 150, "{solved}");
}

#[test]
fn permutation_equivariance() {
    let mut r = rng(15);
    for _ in 0..50 {
        let c = cfg(
            TrustMode::Unconditional,
            random_params(&mut r),
            50,
            r.random_range(0.0..1.0),
        );
        let m = build_transition_matrix(&c).unwrap();
        let pi = stationary_distribution(&m).unwrap();
        let mut perm: Vec<usize> = (0..STATES).collect();
        for i in (1..STATES).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let mut q = [[0.0; STATES]; STATES];
        for i in 0..STATES {
            for j in 0..STATES {
                q[i][j] = m[perm[i]][perm[j]];
            }
        }
        let sigma = stationary_distribution(&q).unwrap();
        for i in 0..STATES {
            assert!((sigma[i] - pi[perm[i]]).abs() <= 1e-10);
        }
    }
}

#[test]
fn weak_selection_approaches_uniform() {
    let mut r = rng(16);
    for i in 0..40 {
        let c = cfg(TrustMode::ALL[i % 2], random_params(&mut r), 100, 1e-8);
        let pi = analyze(&c).unwrap().distribution;
        assert!(pi.iter().all(|x| (x - 0.125).abs() <= 1e-6), "{pi:?}");
    }
}

#[test]
fn high_regulation_cost_disfavours_trust() {
    let p = GameParams {
        c_r: 5.0,
        b_fo: 0.0,
        ..GameParams::default()
    };
    let c = cfg(TrustMode::Unconditional, p, 100, 1.0);
    let res = analyze(&c).unwrap();
    let mass: f64 = res
        .entries()
        .filter(|(p, _)| !p.user_trusts)
        .map(|(_, x)| x)
        .sum();
    assert!(mass > 0.9, "{mass}");
    let dense = dense_stationary(&oracle_matrix(&p, TrustMode::Unconditional, 100, 1.0));
    assert!(dense[4..].iter().sum::<f64>() > 0.9);
}

#[test]
fn monte_carlo_neutral() {
    // at Z=100 each state is left with probability 0.01 per step, and the
    // autocorrelation of 1e6 steps alone is worth about 0.006 of standard
    // deviation; Z=10 keeps the walk close to binomial sampling
    let c = cfg(TrustMode::Conditional, GameParams::default(), 10, 0.0);
    let f = simulate_chain(&c, 1_000_000, 42).unwrap();
    assert!(f.iter().all(|x| (x - 0.125).abs() <= 0.01), "{f:?}");
}

#[test]
fn monte_carlo_matches_stationary() {
    let mut r = rng(17);
    let mut configs = vec![
        EgtConfig::default(),
        cfg(TrustMode::Unconditional, GameParams::default(), 100, 1.0),
        cfg(
            TrustMode::Conditional,
            GameParams {
                c_r: 5.0,
                ..GameParams::default()
            },
            100,
            1.0,
        ),
    ];
    for i in 0..9 {
        configs.push(cfg(
            TrustMode::ALL[i % 2],
            random_params(&mut r),
            r.random_range(2..=150),
            r.random_range(0.0..2.0),
        ));
    }
    for (i, c) in configs.iter().enumerate() {
        let pi = analyze(c).unwrap().distribution;
        let f = simulate_chain_partitioned(c, 1_000_000, 100 + i as u64, 4).unwrap();
        assert!(linf(&f, &pi) <= 0.02, "{c:?}: {f:?} vs {pi:?}");
    }
}

#[test]
fn monte_carlo_is_deterministic() {
    let c = EgtConfig::default();
    assert_eq!(
        simulate_chain(&c, 10_000, 5).unwrap(),
        simulate_chain(&c, 10_000, 5).unwrap()
    );
    assert_eq!(
        simulate_chain_partitioned(&c, 10_001, 5, 3).unwrap(),
        simulate_chain_partitioned(&c, 10_001, 5, 3).unwrap()
    );
    assert_ne!(
        simulate_chain(&c, 10_000, 5).unwrap(),
        simulate_chain(&c, 10_000, 6).unwrap()
    );
}

#[test]
fn invalid_configs_rejected() {
    let bad = [
        cfg(TrustMode::Conditional, GameParams::default(), 1, 1.0),
        cfg(TrustMode::Conditional, GameParams::default(), 10, -1.0),
        cfg(TrustMode::Conditional, GameParams::default(), 10, f64::NAN),
        cfg(
            TrustMode::Conditional,
            GameParams {
                epsilon: 2.0,
                ..GameParams::default()
            },
            10,
            1.0,
        ),
    ];
    for c in bad {
        assert!(build_transition_matrix(&c).is_err());
    }
    assert_eq!(
        simulate_chain(&EgtConfig::default(), 0, 1),
        Err(EgtError::NoSteps)
    );
    assert!(matches!(
        stationary_distribution(&[[0.5, 0.6], [0.5, 0.5]]),
        Err(EgtError::NotStochastic { row: 0, .. })
    ));
    assert_eq!(
        stationary_distribution(&[[0.5, 0.5], [0.0, 1.0]]),
        Ok([0.0, 1.0])
    );
    assert_eq!(
        stationary_distribution(&[[1.0, 0.0, 0.0], [0.3, 0.4, 0.3], [0.0, 0.0, 1.0]]),
        Err(EgtError::Reducible(2))
    );
}
