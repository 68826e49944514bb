//! WebAssembly front end. Each export runs a small experiment and returns an SVG chart.
//!
//! The `*_svg` functions are plain Rust so they can be tested natively; the
//! `#[wasm_bindgen]` wrappers only translate errors.

use overfit_lab::cli_io::plot::{chart_svg, report_chart};
use overfit_lab::experiments::{run, Experiment, ExperimentConfig, Field, SpectrumSpec};
use overfit_lab::features::FeatureLaw;
use wasm_bindgen::prelude::*;

/// Largest `N` the page offers.
pub const MAX_N: usize = 256;

fn grid(n_max: usize) -> Result<Vec<usize>, String> {
    if !(8..=MAX_N).contains(&n_max) {
        return Err(format!("largest N must be between 8 and {MAX_N}, got {n_max}"));
    }
    let mut out = Vec::new();
    let mut n = 8;
    while n <= n_max {
        out.push(n);
        n *= 2;
    }
    Ok(out)
}

fn config(e: Experiment, spectrum: &str, n_max: usize, trials: usize, seed: u64) -> Result<ExperimentConfig, String> {
    let mut c = ExperimentConfig::defaults(e);
    c.spectra = vec![spectrum.parse::<SpectrumSpec>().map_err(|e| e.to_string())?];
    c.n_grid = grid(n_max)?;
    c.trials = trials;
    c.master_seed = seed;
    Ok(c)
}

fn render(c: &ExperimentConfig, field: Field, log_y: bool) -> Result<String, String> {
    c.validate().map_err(|e| e.to_string())?;
    let report = run(c).map_err(|e| e.to_string())?;
    let chart = report_chart(&report, "N", field, true, log_y).map_err(|e| e.to_string())?;
    Ok(chart_svg(&chart))
}

/// Median condition number of `K` over its predicted scale, against `N`.
pub fn condition_svg(spectrum: &str, n_max: usize, trials: usize, seed: u64) -> Result<String, String> {
    let c = config(Experiment::Condnum, spectrum, n_max, trials, seed)?;
    render(&c, Field::RatioToTheory, true)
}

/// Normalized smallest singular value for gaussian, uniform and cosine features.
pub fn feature_law_svg(spectrum: &str, n_max: usize, trials: usize, seed: u64) -> Result<String, String> {
    let mut c = config(Experiment::SminStudy, spectrum, n_max, trials, seed)?;
    c.laws = vec![FeatureLaw::Gaussian, FeatureLaw::UniformSubgaussian, FeatureLaw::COSINE];
    render(&c, Field::SminRatio, true)
}

/// Test error of the ridgeless interpolant against `N` at noise level `sigma`.
pub fn learning_curve_svg(spectrum: &str, sigma: f64, n_max: usize, trials: usize, seed: u64) -> Result<String, String> {
    let mut c = config(Experiment::LearningCurve, spectrum, n_max, trials, seed)?;
    c.sigma = sigma;
    c.n_test = 500;
    render(&c, Field::Mse, true)
}

#[wasm_bindgen]
pub fn condition_plot(spectrum: &str, n_max: usize, trials: usize, seed: u64) -> Result<String, JsValue> {
    condition_svg(spectrum, n_max, trials, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn feature_law_plot(spectrum: &str, n_max: usize, trials: usize, seed: u64) -> Result<String, JsValue> {
    feature_law_svg(spectrum, n_max, trials, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn learning_curve_plot(
    spectrum: &str,
    sigma: f64,
    n_max: usize,
    trials: usize,
    seed: u64,
) -> Result<String, JsValue> {
    learning_curve_svg(spectrum, sigma, n_max, trials, seed).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_render() {
        let svg = condition_svg("poly:1", 32, 2, 1).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("poly:1/gaussian"));
        let svg = feature_law_svg("poly:1", 16, 2, 1).unwrap();
        assert!(svg.contains("cosine") && svg.contains("uniform"));
        let svg = learning_curve_svg("exp:1", 1.0, 16, 2, 1).unwrap();
        assert!(svg.contains("<polyline"));
    }

    #[test]
    fn same_seed_same_picture() {
        assert_eq!(condition_svg("exp:0.5", 16, 3, 9), condition_svg("exp:0.5", 16, 3, 9));
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(condition_svg("poly:1", 1024, 2, 1).unwrap_err().contains("between 8"));
        assert!(condition_svg("cubic:1", 32, 2, 1).is_err());
        assert!(learning_curve_svg("poly:1", -1.0, 32, 2, 1).is_err());
        assert!(condition_svg("poly:1", 32, 0, 1).is_err());
    }
}
