//! `lora-verify`: numeric checks of the adapter mathematics and the
//! adapter sizes of the reference model shapes.

use forge_core::lora::{
    adapter_fit_toy, grad_check, lora_forward, lora_init, lora_param_count, matrix_sha256, planted_problem,
    random_matrix, LoraAdapter, LoraError, Projection, REFERENCE_SHAPES,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::LoraConfig;
use crate::error::{CliError, Outcome};
use crate::lock::RunLock;
use crate::manifest::RunRecorder;
use crate::Context;

pub const LORA_REPORT_FILE: &str = "lora_verify.json";
/// Relative tolerance of the forward-pass identities.
pub const FORWARD_TOLERANCE: f64 = 1e-12;
pub const MIN_TOY_REDUCTION: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl PropertyCheck {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        PropertyCheck { name: name.to_string(), passed, detail }
    }

    fn failed(name: &str, err: LoraError) -> Self {
        PropertyCheck::new(name, false, err.to_string())
    }
}

/// `8388608` → `"8,388,608"`.
pub fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn column(rows: usize, seed: u64) -> DVector<f64> {
    DVector::from_column_slice(random_matrix(rows, 1, seed).as_slice())
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Shape of instance `i`: sizes 2..=12 with a rank no larger than either.
fn instance_shape(i: usize) -> (usize, usize, usize) {
    let d = 2 + i % 11;
    let k = 2 + (i * 7) % 11;
    (d, k, 1 + i % d.min(k))
}

fn zero_init(cfg: &LoraConfig, seed: u64) -> PropertyCheck {
    let mut worst = 0.0f64;
    for i in 0..cfg.check_instances {
        let (d, k, r) = instance_shape(i);
        let s = seed.wrapping_add(1000 * i as u64);
        let w0 = random_matrix(d, k, s);
        let x = column(k, s + 1);
        let adapter = match lora_init(d, k, r, s + 2, cfg.sigma) {
            Ok(a) => a,
            Err(e) => return PropertyCheck::failed("zero_init", e),
        };
        match lora_forward(&w0, &adapter, &x) {
            Ok(y) => worst = worst.max(rel(&y, &(&w0 * &x))),
            Err(e) => return PropertyCheck::failed("zero_init", e),
        }
    }
    PropertyCheck::new(
        "zero_init",
        worst <= FORWARD_TOLERANCE,
        format!("{} instances, max relative gap to W0·x {worst:.2e}", cfg.check_instances),
    )
}

fn dense_equivalence(cfg: &LoraConfig, seed: u64) -> PropertyCheck {
    let mut worst = 0.0f64;
    for i in 0..cfg.check_instances {
        let (d, k, r) = instance_shape(i);
        let s = seed.wrapping_add(1000 * i as u64 + 500);
        let w0 = random_matrix(d, k, s);
        let x = column(k, s + 1);
        let adapter = match LoraAdapter::new(random_matrix(r, k, s + 2), random_matrix(d, r, s + 3)) {
            Ok(a) => a,
            Err(e) => return PropertyCheck::failed("dense_equivalence", e),
        };
        let dense: DMatrix<f64> = &w0 + &adapter.b * &adapter.a;
        match lora_forward(&w0, &adapter, &x) {
            Ok(y) => worst = worst.max(rel(&y, &(dense * &x))),
            Err(e) => return PropertyCheck::failed("dense_equivalence", e),
        }
    }
    PropertyCheck::new(
        "dense_equivalence",
        worst <= FORWARD_TOLERANCE,
        format!("{} instances, max relative gap to (W0 + B·A)x {worst:.2e}", cfg.check_instances),
    )
}

fn gradient(cfg: &LoraConfig, seed: u64) -> PropertyCheck {
    let (d, k, r) = (8, 8, 2);
    let w0 = random_matrix(d, k, seed);
    let adapter = match LoraAdapter::new(random_matrix(r, k, seed + 1), random_matrix(d, r, seed + 2)) {
        Ok(a) => a,
        Err(e) => return PropertyCheck::failed("grad_check", e),
    };
    let (x, y) = (column(k, seed + 3), column(d, seed + 4));
    match grad_check(&w0, &adapter, &x, &y, cfg.grad_eps) {
        Ok(err) => PropertyCheck::new(
            "grad_check",
            err <= cfg.grad_tolerance,
            format!("d=k={d} r={r} eps={:e}: max relative error {err:.2e} (limit {:e})", cfg.grad_eps, cfg.grad_tolerance),
        ),
        Err(e) => PropertyCheck::failed("grad_check", e),
    }
}

fn param_counts(cfg: &LoraConfig) -> PropertyCheck {
    let mut passed = true;
    let mut parts = Vec::new();
    for shape in REFERENCE_SHAPES {
        let n = lora_param_count(shape.d_model, cfg.rank, shape.n_layers, Projection::ALL.len());
        let millions = (n as f64 / 1e4).round() / 100.0;
        let ok = (millions - shape.reported_millions).abs() < 1e-9;
        passed &= ok;
        parts.push(format!(
            "{} ({} layers, d={}): {} = {millions:.2}m vs {:.2}m",
            shape.name,
            shape.n_layers,
            shape.d_model,
            group_thousands(n),
            shape.reported_millions
        ));
    }
    PropertyCheck::new("param_counts", passed, format!("r={}: {}", cfg.rank, parts.join("; ")))
}

fn toy_fit(cfg: &LoraConfig, seed: u64) -> PropertyCheck {
    let (w0, target) = planted_problem(cfg.toy_dim, cfg.toy_dim, cfg.toy_rank, seed, cfg.toy_scale);
    let before = matrix_sha256(&w0);
    match adapter_fit_toy(&w0, &target, cfg.toy_rank, cfg.toy_steps, cfg.toy_lr, seed, cfg.toy_sigma) {
        Ok(fit) => {
            let unchanged = matrix_sha256(&w0) == before;
            let reduction = fit.reduction();
            PropertyCheck::new(
                "toy_fit",
                reduction >= MIN_TOY_REDUCTION && unchanged,
                format!(
                    "{}x{} rank {} over {} steps: loss {:.4e} -> {:.4e} ({:.2}% reduction), W0 hash {}",
                    cfg.toy_dim,
                    cfg.toy_dim,
                    cfg.toy_rank,
                    cfg.toy_steps,
                    fit.losses[0],
                    fit.losses.last().copied().unwrap_or(f64::NAN),
                    100.0 * reduction,
                    if unchanged { "unchanged" } else { "CHANGED" }
                ),
            )
        }
        Err(e) => PropertyCheck::failed("toy_fit", e),
    }
}

/// Every property check, in report order.
pub fn lora_checks(cfg: &LoraConfig, seed: u64) -> Vec<PropertyCheck> {
    vec![zero_init(cfg, seed), dense_equivalence(cfg, seed), gradient(cfg, seed), param_counts(cfg), toy_fit(cfg, seed)]
}

pub fn cmd_lora_verify(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let out = &cfg.paths.out_dir;
    let _lock = RunLock::acquire(out)?;
    let mut rec = RunRecorder::new("lora-verify", ctx.backend.as_str(), &ctx.config_sha256, out);
    let checks = rec.time("checks", || lora_checks(&cfg.lora, cfg.rng_seed));
    for c in &checks {
        println!("{} {:<18} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    rec.write_json(LORA_REPORT_FILE, &checks)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    rec.finish(if failed.is_empty() { Outcome::Clean } else { Outcome::Partial })?;
    if failed.is_empty() {
        Ok(Outcome::Clean)
    } else {
        Err(CliError::Verification(format!("failing properties: {}", failed.join(", "))))
    }
}
