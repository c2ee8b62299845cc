//! Browser bindings for exploring the lossy beam-splitter channel.
//!
//! Build with `wasm-pack build crates/web --target web --out-dir www/pkg`
//! and serve `crates/web/www/`.

use ntpqpt::mle::fidelity_ready;
use ntpqpt::simulator::{simulate_channel_counts, stream_rng};
use ntpqpt::{
    pauli_basis, ppbs_chi, probability_operator, process_fidelity_ntp, reconstruct, ChiMatrix, FitOptions, Method,
    Noise, PpbsParams, Protocol,
};
use wasm_bindgen::prelude::*;

/// χ in the Pauli basis for T_H = 1, T_V = Γ, flattened row-major as
/// re, im pairs (32 numbers).
#[wasm_bindgen]
pub fn chi_entries(gamma: f64) -> Result<Vec<f64>, JsValue> {
    demo::chi_entries(gamma).map_err(js)
}

/// Success probabilities for (T_H, T_V): eigenvalues of P, largest first.
#[wasm_bindgen]
pub fn p_eigenvalues(t_h: f64, t_v: f64) -> Result<Vec<f64>, JsValue> {
    demo::p_eigenvalues(t_h, t_v).map_err(js)
}

/// Noiseless fidelity curves on `points` values of Γ in (0, 1]: for each Γ
/// the triple (Γ, fidelity to the identity, post-selected fidelity).
#[wasm_bindgen]
pub fn fidelity_curves(points: usize) -> Result<Vec<f64>, JsValue> {
    demo::fidelity_curves(points).map_err(js)
}

/// Simulate Poisson counts and reconstruct. Returns (fidelity, λ₁, λ₂,
/// objective, min χ eigenvalue).
#[wasm_bindgen]
pub fn simulate_and_fit(gamma: f64, exposure: f64, seed: u32, method: &str) -> Result<Vec<f64>, JsValue> {
    demo::simulate_and_fit(gamma, exposure, seed as u64, method).map_err(js)
}

fn js(e: ntpqpt::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

pub mod demo {
    use super::*;

    pub fn chi_entries(gamma: f64) -> ntpqpt::Result<Vec<f64>> {
        let chi = ppbs_chi(&PpbsParams::from_gamma(gamma)?, &pauli_basis())?;
        Ok(chi.mat().as_slice().iter().flat_map(|z| [z.re, z.im]).collect())
    }

    pub fn p_eigenvalues(t_h: f64, t_v: f64) -> ntpqpt::Result<Vec<f64>> {
        let chi = ppbs_chi(&PpbsParams::new(t_h, t_v)?, &pauli_basis())?;
        Ok(probability_operator(&chi)?.eigenvalues().iter().rev().copied().collect())
    }

    pub fn fidelity_curves(points: usize) -> ntpqpt::Result<Vec<f64>> {
        let basis = pauli_basis();
        let protocol = Protocol::six_state();
        let id = ChiMatrix::identity(&basis)?;
        let mut out = Vec::with_capacity(3 * points);
        for k in 1..=points {
            let gamma = k as f64 / points as f64;
            let truth = ppbs_chi(&PpbsParams::from_gamma(gamma)?, &basis)?;
            let counts = simulate_channel_counts(&truth, &protocol, 1e12, Noise::None, &mut stream_rng(0, 0))?;
            let post = reconstruct(Method::PostSelected, &counts, &protocol, &basis, &FitOptions::default())?;
            out.extend([
                gamma,
                process_fidelity_ntp(&truth, &id)?,
                process_fidelity_ntp(&post.chi, &truth)?,
            ]);
        }
        Ok(out)
    }

    pub fn simulate_and_fit(gamma: f64, exposure: f64, seed: u64, method: &str) -> ntpqpt::Result<Vec<f64>> {
        let basis = pauli_basis();
        let protocol = Protocol::six_state();
        let truth = ppbs_chi(&PpbsParams::from_gamma(gamma)?, &basis)?;
        let counts = simulate_channel_counts(&truth, &protocol, exposure, Noise::Poisson, &mut stream_rng(seed, 0))?;
        let opts = FitOptions {
            seed,
            ..FitOptions::default()
        };
        let fit = reconstruct(method.parse()?, &counts, &protocol, &basis, &opts)?;
        let p = probability_operator(&fit.chi)?;
        let ev = p.eigenvalues();
        Ok(vec![
            process_fidelity_ntp(&fidelity_ready(&fit.chi)?, &truth)?,
            ev[ev.len() - 1],
            ev[0],
            fit.objective,
            fit.min_chi_eigenvalue,
        ])
    }
}
