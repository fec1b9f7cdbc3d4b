//! WebAssembly bindings behind `www/index.html`.

use loskit::features::smoothed_mean;
use loskit::model::{CodeKind, Icd9Code};
use loskit::stats::kruskal_wallis;
use wasm_bindgen::prelude::*;

/// One-line description of a parsed ICD-9 code.
pub fn describe_code(text: &str, procedure: bool) -> Result<String, String> {
    let kind = if procedure { CodeKind::Procedure } else { CodeKind::Diagnosis };
    let code = Icd9Code::parse(text, kind).map_err(|e| e.to_string())?;
    let sub = if code.sub().is_empty() { "none" } else { code.sub() };
    Ok(format!(
        "{kind} {} (root {}, extension {sub}, categorical id {})",
        code.canonical_text(),
        code.root(),
        code.stable_id()
    ))
}

/// Groups are separated by `;` or newlines, values by commas or spaces.
pub fn parse_groups(text: &str) -> Result<Vec<Vec<f64>>, String> {
    text.split([';', '\n'])
        .filter(|g| !g.trim().is_empty())
        .map(|g| {
            g.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|v| !v.is_empty())
                .map(|v| v.parse::<f64>().map_err(|_| format!("not a number: {v:?}")))
                .collect()
        })
        .collect()
}

pub fn describe_kruskal(text: &str) -> Result<String, String> {
    let groups = parse_groups(text)?;
    let r = kruskal_wallis(&groups).map_err(|e| e.to_string())?;
    Ok(format!("H = {:.4} (uncorrected {:.4}), df = {}, p = {:.6}", r.h_corrected, r.h, r.df, r.p))
}

#[wasm_bindgen]
pub fn parse_icd9(text: &str, procedure: bool) -> Result<String, JsError> {
    describe_code(text, procedure).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn smoothed_los(n: u32, observed_mean: f64, k: f64, global_mean: f64) -> f64 {
    smoothed_mean(n as usize, observed_mean, k, global_mean)
}

#[wasm_bindgen]
pub fn kruskal(text: &str) -> Result<String, JsError> {
    describe_kruskal(text).map_err(|e| JsError::new(&e))
}
