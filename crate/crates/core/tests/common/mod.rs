#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use govtrust_core::{ActionProfile, GameParams, PayoffTriple, TrustMode};

pub const CT_CODES: [&str; 8] = ["CTCC", "CTCD", "CTDC", "CTDD", "NCC", "NCD", "NDC", "NDD"];
pub const T_CODES: [&str; 8] = ["TCC", "TCD", "TDC", "TDD", "NCC", "NCD", "NDC", "NDD"];

pub fn codes(mode: TrustMode) -> [&'static str; 8] {
    match mode {
        TrustMode::Conditional => CT_CODES,
        TrustMode::Unconditional => T_CODES,
    }
}

/// Payoff rows transcribed one by one, keyed by code.
pub fn table_row(code: &str, p: &GameParams) -> (f64, f64, f64) {
    match code {
        "CTCC" | "TCC" => (p.b_u, p.b_p - p.c_p, p.b_r - p.c_r),
        "CTCD" => (0.0, -p.c_p, 0.0),
        "TCD" => (p.b_u, p.b_p - p.c_p, p.b_r),
        "CTDC" | "TDC" => (p.epsilon * p.b_u, p.b_p - p.u, p.b_r - p.c_r - p.v + p.b_fo),
        "CTDD" => (0.0, 0.0, 0.0),
        "TDD" => (p.epsilon * p.b_u, p.b_p, p.b_r),
        "NCC" => (0.0, -p.c_p, -p.c_r),
        "NCD" => (0.0, -p.c_p, 0.0),
        "NDC" => (0.0, 0.0, -p.c_r),
        "NDD" => (0.0, 0.0, 0.0),
        other => panic!("no row {other}"),
    }
}

pub fn triple(t: PayoffTriple) -> (f64, f64, f64) {
    (t.user, t.developer, t.regulator)
}

/// Brute-force pure Nash over codes, written without the library's profile
/// type: a profile survives if no role strictly gains (weak) or gains or
/// ties (strict) by switching.
pub fn brute_nash(p: &GameParams, mode: TrustMode, strict: bool) -> Vec<String> {
    let trust = match mode {
        TrustMode::Conditional => "CT",
        TrustMode::Unconditional => "T",
    };
    let mut out = Vec::new();
    for u in [trust, "N"] {
        for d in ["C", "D"] {
            for r in ["C", "D"] {
                let here = table_row(&format!("{u}{d}{r}"), p);
                let alt_u = if u == "N" { trust } else { "N" };
                let alt_d = if d == "C" { "D" } else { "C" };
                let alt_r = if r == "C" { "D" } else { "C" };
                let gains = [
                    table_row(&format!("{alt_u}{d}{r}"), p).0 - here.0,
                    table_row(&format!("{u}{alt_d}{r}"), p).1 - here.1,
                    table_row(&format!("{u}{d}{alt_r}"), p).2 - here.2,
                ];
                let stable = gains
                    .iter()
                    .all(|&g| if strict { g < 0.0 } else { g <= 0.0 });
                if stable {
                    out.push(format!("{u}{d}{r}"));
                }
            }
        }
    }
    out
}

pub fn labels(profiles: &[ActionProfile], mode: TrustMode) -> Vec<String> {
    profiles.iter().map(|p| p.label(mode)).collect()
}

/// Random parameters on a mix of continuous and coarse grids, so ties show
/// up regularly.
pub fn random_params(rng: &mut ChaCha8Rng) -> GameParams {
    let mut draw = |hi: f64| -> f64 {
        if rng.random_bool(0.4) {
            f64::from(rng.random_range(0..=8u32)) * 0.5 * hi / 4.0
        } else {
            rng.random_range(0.0..hi)
        }
    };
    let b_u = draw(8.0);
    let b_p = draw(8.0);
    let b_r = draw(8.0);
    let c_p = draw(4.0);
    let c_r = draw(6.0);
    let u = draw(4.0);
    let v = draw(2.0);
    let b_fo = draw(8.0);
    let epsilon = if rng.random_bool(0.3) {
        [-0.1, 0.2, 0.0, 1.0][rng.random_range(0..4)]
    } else {
        rng.random_range(-2.0..=1.0)
    };
    GameParams {
        b_u,
        b_p,
        b_r,
        c_p,
        c_r,
        u,
        v,
        b_fo,
        epsilon,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fixation probability as `1 / sum_{k=0}^{Z-1} e^{-beta*delta*k}`.
pub fn rho_sum(delta: f64, z: u32, beta: f64) -> f64 {
    let total: f64 = (0..z).map(|k| (-beta * delta * f64::from(k)).exp()).sum();
    1.0 / total
}

/// Embedded chain rebuilt from the transcribed table rows and the sum form of
/// the fixation probability.
pub fn oracle_matrix(p: &GameParams, mode: TrustMode, z: u32, beta: f64) -> DMatrix<f64> {
    let cs = codes(mode);
    let trust = if mode == TrustMode::Conditional {
        "CT"
    } else {
        "T"
    };
    let mut m = DMatrix::zeros(8, 8);
    for (i, code) in cs.iter().enumerate() {
        let (user, rest) = code.split_at(code.len() - 2);
        let (d, r) = (&rest[..1], &rest[1..]);
        let here = table_row(code, p);
        let other = |s: &str| if s == "C" { "D" } else { "C" };
        let targets = [
            (
                format!("{}{d}{r}", if user == "N" { trust } else { "N" }),
                0,
            ),
            (format!("{user}{}{r}", other(d)), 1),
            (format!("{user}{d}{}", other(r)), 2),
        ];
        for (t, role) in targets {
            let j = cs.iter().position(|c| *c == t).unwrap();
            let there = table_row(&t, p);
            let delta = [there.0 - here.0, there.1 - here.1, there.2 - here.2][role];
            m[(i, j)] = rho_sum(delta, z, beta) / 3.0;
        }
        let off: f64 = (0..8).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = 1.0 - off;
    }
    m
}

/// Stationary vector via a dense solve of `(P^T - I) pi = 0` with one row
/// replaced by the normalisation constraint.
pub fn dense_stationary(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.transpose() - DMatrix::identity(n, n);
    let mut b = DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).expect("non-singular");
    x.iter().copied().collect()
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
