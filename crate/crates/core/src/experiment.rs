//! Runs a [`RunConfig`], writes its artifacts and returns a machine-readable summary.

use crate::config::{ExperimentKind, McBlock, ModelBlock, PathBlock, RunConfig, TableChoice};
use crate::error::{Error, Result};
use crate::functional::{derivatives, DerivativeMethod, StoppedPath};
use crate::hedging::{hedge_batch, write_batch_csv, HedgeSettings, ModelVol, Tolerances, Verdict};
use crate::levy::{convergence_order_scan, implied_vol, lewis_price, LocalLevyModel};
use crate::mc::{gbm_path, mc_call_prices_controlled, simulate, MCConfig};
use crate::path::{qv_limit, DyadicPartitionSequence, SampledPath};
use crate::pricing::BSModelSpec;
use serde::Serialize;
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub experiment: ExperimentKind,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    pub data: Value,
}

/// How a failure maps onto the CLI exit-code contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    Schema,
    Numeric,
    Io,
}

impl FailureClass {
    pub fn exit_code(&self) -> i32 {
        match self {
            FailureClass::Schema => 2,
            FailureClass::Numeric => 3,
            FailureClass::Io => 4,
        }
    }
}

pub fn classify(e: &Error) -> FailureClass {
    match e {
        Error::Io(_) | Error::Csv(_) => FailureClass::Io,
        Error::Quadrature(_)
        | Error::StripViolation { .. }
        | Error::PriceOutOfBounds { .. }
        | Error::Inconclusive => FailureClass::Numeric,
        _ => FailureClass::Schema,
    }
}

/// One row of a reference price table: maturity, strike, expansion price,
/// MC 95% interval, implied vols (percent) of the price and of the interval.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReferenceRow {
    pub maturity: f64,
    pub strike: f64,
    pub price: f64,
    pub mc_ci: (f64, f64),
    pub iv: f64,
    pub iv_ci: (f64, f64),
}

const fn rr(maturity: f64, strike: f64, price: f64, lo: f64, hi: f64, iv: f64, ivl: f64, ivh: f64) -> ReferenceRow {
    ReferenceRow { maturity, strike, price, mc_ci: (lo, hi), iv, iv_ci: (ivl, ivh) }
}

const MERTON: [ReferenceRow; 15] = [
    rr(0.25, 0.5, 0.50669, 0.50648, 0.50666, 57.81, 54.03, 57.31),
    rr(0.25, 0.75, 0.26324, 0.26304, 0.26321, 37.91, 37.48, 37.84),
    rr(0.25, 1.0, 0.05515, 0.05501, 0.05514, 24.58, 24.50, 24.57),
    rr(0.25, 1.25, 0.00645, 0.00637, 0.00645, 30.48, 30.39, 30.49),
    rr(0.25, 1.5, 0.00305, 0.00300, 0.00306, 42.05, 41.93, 42.07),
    rr(1.0, 0.5, 0.52720, 0.52700, 0.52736, 38.82, 38.35, 39.20),
    rr(1.0, 1.0, 0.13114, 0.13097, 0.13125, 27.06, 27.01, 27.08),
    rr(1.0, 1.5, 0.01840, 0.01836, 0.01852, 29.04, 29.03, 29.10),
    rr(1.0, 2.0, 0.00566, 0.00566, 0.00575, 34.45, 34.45, 34.55),
    rr(1.0, 2.5, 0.00209, 0.00208, 0.00214, 37.65, 37.62, 37.77),
    rr(10.0, 0.5, 0.72942, 0.72920, 0.73045, 32.88, 32.81, 33.21),
    rr(10.0, 1.0, 0.52316, 0.52293, 0.52411, 29.67, 29.64, 29.80),
    rr(10.0, 5.0, 0.05625, 0.05604, 0.05664, 26.12, 26.09, 26.17),
    rr(10.0, 7.5, 0.02267, 0.02246, 0.02290, 26.34, 26.30, 26.39),
    rr(10.0, 10.0, 0.01241, 0.01091, 0.01126, 27.05, 26.54, 26.66),
];

const VG: [ReferenceRow; 15] = [
    rr(0.25, 0.8, 0.23708, 0.23704, 0.23722, 55.61, 55.57, 55.72),
    rr(0.25, 0.9, 0.15489, 0.15482, 0.15497, 47.09, 47.05, 47.14),
    rr(0.25, 1.0, 0.08413, 0.08403, 0.08415, 39.29, 39.24, 39.30),
    rr(0.25, 1.1, 0.03436, 0.03426, 0.03433, 33.27, 33.22, 33.26),
    rr(0.25, 1.2, 0.00968, 0.00961, 0.00965, 29.28, 29.21, 29.25),
    rr(1.0, 0.5, 0.54643, 0.54630, 0.54679, 61.02, 60.91, 61.30),
    rr(1.0, 0.75, 0.35456, 0.35438, 0.35479, 52.35, 52.28, 52.44),
    rr(1.0, 1.0, 0.20071, 0.20049, 0.20082, 45.42, 45.36, 45.45),
    rr(1.0, 1.5, 0.03394, 0.03374, 0.03387, 35.16, 35.09, 35.14),
    rr(1.0, 2.0, 0.00188, 0.00185, 0.00188, 29.08, 29.01, 29.07),
    rr(10.0, 0.5, 0.80150, 0.80279, 0.80502, 52.60, 52.95, 53.53),
    rr(10.0, 1.0, 0.66691, 0.66775, 0.66990, 49.09, 49.21, 49.52),
    rr(10.0, 5.0, 0.22948, 0.22836, 0.22986, 42.02, 41.93, 42.05),
    rr(10.0, 7.5, 0.13680, 0.13497, 0.13618, 40.34, 40.17, 40.29),
    rr(10.0, 10.0, 0.08664, 0.08418, 0.08518, 39.21, 38.93, 39.05),
];

pub fn reference_rows(which: TableChoice) -> &'static [ReferenceRow] {
    match which {
        TableChoice::Merton => &MERTON,
        TableChoice::Vg => &VG,
    }
}

pub fn reference_model(which: TableChoice) -> LocalLevyModel {
    match which {
        TableChoice::Merton => LocalLevyModel::reference_merton(),
        TableChoice::Vg => LocalLevyModel::reference_vg(),
    }
}

/// Default absolute price tolerance against the reference tables.
pub fn table_tolerance(maturity: f64) -> f64 {
    if maturity >= 10.0 {
        1e-3
    } else {
        2e-4
    }
}

/// Run the experiment, write the declared artifacts, return the summary.
/// A failed declared check is reported in the summary, not as an error.
pub fn run(cfg: &RunConfig) -> Result<Summary> {
    cfg.validate()?;
    let (checks, data) = match cfg.experiment {
        ExperimentKind::Qv => run_qv(cfg)?,
        ExperimentKind::Greeks => run_greeks(cfg)?,
        ExperimentKind::Hedge => run_hedge(cfg)?,
        ExperimentKind::PriceExpansion => run_price_expansion(cfg)?,
        ExperimentKind::PriceMc => run_price_mc(cfg)?,
        ExperimentKind::ReproduceTable => run_table(cfg)?,
        ExperimentKind::ErrorCurves => run_error_curves(cfg)?,
    };
    let summary = Summary { experiment: cfg.experiment, passed: checks.iter().all(|c| c.pass), checks, data };
    if let Some(p) = &cfg.outputs.json {
        let mut w = BufWriter::new(File::create(p)?);
        serde_json::to_writer_pretty(&mut w, &summary)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    Ok(summary)
}

fn csv_writer(path: Option<&Path>) -> Result<Option<csv::Writer<BufWriter<File>>>> {
    Ok(match path {
        Some(p) => Some(csv::Writer::from_writer(BufWriter::new(File::create(p)?))),
        None => None,
    })
}

fn spot(cfg: &RunConfig) -> f64 {
    cfg.pricing.as_ref().map_or(1.0, |p| p.spot)
}

fn load_paths(cfg: &RunConfig) -> Result<Vec<SampledPath>> {
    match cfg.paths.as_ref().ok_or_else(|| Error::Config("missing paths block".into()))? {
        PathBlock::Csv { file, level, price } => Ok(vec![SampledPath::from_csv(File::open(file)?, *level, *price)?]),
        PathBlock::Gbm { sigma, count, level, horizon } => {
            let model = BSModelSpec::constant(*sigma, *horizon)?;
            let seed = cfg.seed.ok_or_else(|| Error::Config("seed required".into()))?;
            (0..*count).map(|i| gbm_path(&model, spot(cfg), *level, seed, i)).collect()
        }
    }
}

fn mc_config(block: &McBlock, horizon: f64, seed: u64) -> MCConfig {
    MCConfig {
        n_paths: block.n_paths,
        steps_per_year: block.steps_per_year,
        seed,
        antithetic: block.antithetic,
        horizon,
        max_work: block.max_work,
    }
}

fn model_of(cfg: &RunConfig) -> Result<&ModelBlock> {
    cfg.model.as_ref().ok_or_else(|| Error::Config("missing model block".into()))
}

type Outcome = (Vec<CheckResult>, Value);

fn run_qv(cfg: &RunConfig) -> Result<Outcome> {
    let paths = load_paths(cfg)?;
    let part_cfg = cfg.partition.expect("validated");
    let mut out = csv_writer(cfg.outputs.csv.as_deref())?;
    if let Some(w) = out.as_mut() {
        w.write_record(["path_id", "level", "qv"])?;
    }
    let mut per_path = Vec::new();
    for (id, p) in paths.iter().enumerate() {
        let part = DyadicPartitionSequence::new(p.horizon(), part_cfg.level)?;
        let qv = qv_limit(p, &part, part_cfg.qv_tol)?;
        if let Some(w) = out.as_mut() {
            for (lvl, a) in qv.terminal_by_level().iter().enumerate() {
                w.serialize((id, lvl + 1, a))?;
            }
        }
        per_path.push(json!({"path_id": id, "limit": qv.limit_estimate, "converged": qv.converged}));
    }
    if let Some(mut w) = out {
        w.flush()?;
    }
    Ok((vec![], json!({ "paths": per_path })))
}

fn run_greeks(cfg: &RunConfig) -> Result<Outcome> {
    let paths = load_paths(cfg)?;
    let model = model_of(cfg)?.black_scholes()?;
    let times = if cfg.times.is_empty() { vec![0.0] } else { cfg.times.clone() };
    let mut out = csv_writer(cfg.outputs.csv.as_deref())?;
    if let Some(w) = out.as_mut() {
        w.write_record(["path_id", "t", "value", "delta", "gamma", "horizontal", "method"])?;
    }
    let mut rows = Vec::new();
    for (id, p) in paths.iter().enumerate() {
        let f = cfg.payoff.as_ref().expect("validated").build(model, p.values()[0])?;
        let dt = p.times()[1] - p.times()[0];
        for &t in &times {
            let b = derivatives(f.as_ref(), &StoppedPath::new(p, t)?, dt)?;
            let method = match b.method {
                DerivativeMethod::ClosedForm => "closed-form",
                DerivativeMethod::FiniteDifference => "finite-difference",
            };
            if let Some(w) = out.as_mut() {
                w.serialize((id, t, b.value, b.grad_v, b.hess_v, b.horiz, method))?;
            }
            rows.push(json!({"path_id": id, "t": t, "value": b.value, "delta": b.grad_v,
                "gamma": b.hess_v, "horizontal": b.horiz, "method": method}));
        }
    }
    if let Some(mut w) = out {
        w.flush()?;
    }
    Ok((vec![], json!({ "greeks": rows })))
}

fn run_hedge(cfg: &RunConfig) -> Result<Outcome> {
    let paths = load_paths(cfg)?;
    let model = model_of(cfg)?.black_scholes()?;
    let part = cfg.partition.expect("validated");
    let sigma = cfg.sigma_model.clone().unwrap_or_else(|| ModelVol::Piecewise { model: model.clone() });
    let f = cfg.payoff.as_ref().expect("validated").build(model, spot(cfg))?;
    let settings = HedgeSettings { level: part.level, qv_tol: part.qv_tol, tolerances: Tolerances::default() };
    let reports = hedge_batch(f.as_ref(), &paths, &sigma, &settings)?;
    if let Some(p) = &cfg.outputs.csv {
        write_batch_csv(BufWriter::new(File::create(p)?), &reports)?;
    }
    let n = reports.len() as f64;
    let floor = cfg.checks.robust_floor.unwrap_or(1e-3);
    let robust = reports.iter().filter(|r| r.direct_error >= -floor).count() as f64 / n;
    let count = |v: Verdict| reports.iter().filter(|r| r.verdict == v).count();
    let mean = reports.iter().map(|r| r.direct_error).sum::<f64>() / n;
    let gaps: Vec<f64> = reports
        .iter()
        .filter_map(|r| r.formula_error.map(|fe| (fe - r.direct_error).abs()))
        .collect();
    let mut checks = vec![];
    if let Some(min) = cfg.checks.robust_frequency {
        checks.push(CheckResult { name: "robust_frequency".into(), value: robust, limit: min, pass: robust >= min });
    }
    let data = json!({
        "paths": reports.len(),
        "robust_frequency": robust,
        "robust_floor": floor,
        "verdicts": {
            "robust": count(Verdict::Robust),
            "not-robust": count(Verdict::NotRobust),
            "inconclusive": count(Verdict::Inconclusive),
        },
        "mean_direct_error": mean,
        "max_formula_gap": gaps.iter().cloned().fold(0.0, f64::max),
        "initial_value": reports[0].initial_value,
    });
    Ok((checks, data))
}

fn run_price_expansion(cfg: &RunConfig) -> Result<Outcome> {
    let model = model_of(cfg)?.levy()?;
    let p = cfg.pricing.as_ref().expect("validated");
    let mut out = csv_writer(cfg.outputs.csv.as_deref())?;
    if let Some(w) = out.as_mut() {
        w.write_record(["T", "K", "order", "price", "iv"])?;
    }
    let mut rows = Vec::new();
    for &t in &p.maturities {
        for &k in &p.strikes {
            let price = lewis_price(&model, p.order, k, 0.0, p.spot, t, p.gamma)?;
            let fwd = p.spot * (model.rate * t).exp();
            let iv = implied_vol(price, k, t, fwd, model.rate).unwrap_or(f64::NAN);
            if let Some(w) = out.as_mut() {
                w.serialize((t, k, p.order, price, iv))?;
            }
            rows.push(json!({"T": t, "K": k, "price": price, "iv": iv}));
        }
    }
    if let Some(mut w) = out {
        w.flush()?;
    }
    Ok((vec![], json!({ "order": p.order, "prices": rows })))
}

fn run_price_mc(cfg: &RunConfig) -> Result<Outcome> {
    let model = model_of(cfg)?.levy()?;
    let p = cfg.pricing.as_ref().expect("validated");
    let mc = cfg.mc.expect("validated");
    let seed = cfg.seed.expect("validated");
    let mut out = csv_writer(cfg.outputs.csv.as_deref())?;
    if let Some(w) = out.as_mut() {
        w.write_record(["T", "K", "price", "se", "ci_lo", "ci_hi"])?;
    }
    let mut rows = Vec::new();
    for &t in &p.maturities {
        let ens = simulate(&model, p.spot.ln(), &mc_config(&mc, t, seed))?;
        for (k, e) in p.strikes.iter().zip(mc_call_prices_controlled(&ens, &p.strikes)?) {
            if let Some(w) = out.as_mut() {
                w.serialize((t, k, e.price, e.se, e.ci95.0, e.ci95.1))?;
            }
            rows.push(json!({"T": t, "K": k, "price": e.price, "se": e.se, "ci95": [e.ci95.0, e.ci95.1]}));
        }
    }
    if let Some(mut w) = out {
        w.flush()?;
    }
    Ok((vec![], json!({ "prices": rows })))
}

fn run_table(cfg: &RunConfig) -> Result<Outcome> {
    let which = cfg.table.expect("validated");
    let model = reference_model(which);
    let mc = cfg.mc.expect("validated");
    let seed = cfg.seed.expect("validated");
    // an optional pricing block restricts the maturities
    let keep = |t: f64| cfg.pricing.as_ref().is_none_or(|p| p.maturities.is_empty() || p.maturities.contains(&t));
    let rows: Vec<&ReferenceRow> = reference_rows(which).iter().filter(|r| keep(r.maturity)).collect();
    let mut maturities: Vec<f64> = rows.iter().map(|r| r.maturity).collect();
    maturities.dedup();

    let mut out = csv_writer(cfg.outputs.csv.as_deref())?;
    if let Some(w) = out.as_mut() {
        w.write_record(["T", "K", "price_ppr", "price_mc_lo", "price_mc_hi", "iv_ppr", "iv_mc_lo", "iv_mc_hi"])?;
    }
    let mut worst_ratio: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut rows_out = Vec::new();
    for t in maturities {
        let these: Vec<&&ReferenceRow> = rows.iter().filter(|r| r.maturity == t).collect();
        let strikes: Vec<f64> = these.iter().map(|r| r.strike).collect();
        let ens = simulate(&model, 0.0, &mc_config(&mc, t, seed))?;
        let est = mc_call_prices_controlled(&ens, &strikes)?;
        let fwd = (model.rate * t).exp();
        let iv = |p: f64, k: f64| implied_vol(p, k, t, fwd, model.rate).map(|v| 100.0 * v).unwrap_or(f64::NAN);
        for (r, e) in these.iter().zip(&est) {
            let price = lewis_price(&model, 4, r.strike, 0.0, 1.0, t, crate::levy::DEFAULT_GAMMA)?;
            let row = (
                t,
                r.strike,
                price,
                e.ci95.0,
                e.ci95.1,
                iv(price, r.strike),
                iv(e.ci95.0, r.strike),
                iv(e.ci95.1, r.strike),
            );
            if let Some(w) = out.as_mut() {
                w.serialize(row)?;
            }
            let dev = (price - r.price).abs();
            let tol = cfg.checks.price_abs.unwrap_or_else(|| table_tolerance(t));
            worst_ratio = worst_ratio.max(dev / tol);
            worst_abs = worst_abs.max(dev);
            rows_out.push(json!({"T": t, "K": r.strike, "price": price, "reference": r.price,
                "deviation": dev, "tolerance": tol, "mc_ci95": [e.ci95.0, e.ci95.1]}));
        }
    }
    if let Some(mut w) = out {
        w.flush()?;
    }
    let checks = vec![CheckResult {
        name: "price_vs_reference".into(),
        value: worst_ratio,
        limit: 1.0,
        pass: worst_ratio <= 1.0,
    }];
    Ok((checks, json!({ "table": which, "max_abs_deviation": worst_abs, "rows": rows_out })))
}

fn run_error_curves(cfg: &RunConfig) -> Result<Outcome> {
    let model = model_of(cfg)?.levy()?;
    let p = cfg.pricing.as_ref().expect("validated");
    let mc = cfg.mc.expect("validated");
    let seed = cfg.seed.expect("validated");
    let base = mc_config(&mc, p.maturities[0], seed);
    let mut out = csv_writer(cfg.outputs.csv.as_deref())?;
    if let Some(w) = out.as_mut() {
        w.write_record(["T", "K", "order", "price", "mc_price", "mc_se", "error"])?;
    }
    let mut violations = Vec::new();
    let mut scans = Vec::new();
    for &k in &p.strikes {
        let scan = convergence_order_scan(&model, p.spot, k, &p.maturities, p.order, &base)?;
        for (ri, row) in scan.rows.iter().enumerate() {
            for n in 0..=p.order {
                if let Some(w) = out.as_mut() {
                    w.serialize((row.maturity, k, n, row.prices[n], row.mc.price, row.mc.se, row.errors[n]))?;
                }
                if n < p.order && scan.above_noise(ri, n) && scan.order_worsens(ri, n) {
                    violations.push(json!({"T": row.maturity, "K": k, "order": n}));
                }
            }
        }
        scans.push(json!({"K": k, "slopes": scan.slopes}));
    }
    if let Some(mut w) = out {
        w.flush()?;
    }
    let mut checks = vec![];
    if cfg.checks.monotone.unwrap_or(false) {
        checks.push(CheckResult {
            name: "monotone_in_order".into(),
            value: violations.len() as f64,
            limit: 0.0,
            pass: violations.is_empty(),
        });
    }
    Ok((checks, json!({ "scans": scans, "violations": violations })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{PartitionBlock, PricingBlock};
    use crate::pricing::PayoffSpec;

    #[test]
    fn flat_path_qv_is_zero_and_converged() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("flat.csv");
        let p = SampledPath::uniform(1.0, vec![1.0; 257], true).unwrap();
        p.write_csv(File::create(&file).unwrap()).unwrap();
        let mut cfg = RunConfig::new(ExperimentKind::Qv);
        cfg.paths = Some(PathBlock::Csv { file, level: 8, price: true });
        cfg.partition = Some(PartitionBlock { level: 8, qv_tol: 0.05 });
        let s = run(&cfg).unwrap();
        assert_eq!(s.data["paths"][0]["limit"], 0.0);
        assert_eq!(s.data["paths"][0]["converged"], true);
    }

    #[test]
    fn hedge_outputs_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(ExperimentKind::Hedge);
        cfg.seed = Some(5);
        cfg.model = Some(ModelBlock::BlackScholes { spec: BSModelSpec::constant(0.25, 1.0).unwrap() });
        cfg.payoff = Some(PayoffSpec::GeometricAsianCall { strike: 1.0 });
        cfg.paths = Some(PathBlock::Gbm { sigma: 0.15, count: 8, level: 10, horizon: 1.0 });
        cfg.partition = Some(PartitionBlock { level: 10, qv_tol: 0.1 });
        cfg.checks.robust_frequency = Some(0.99);
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        cfg.outputs.csv = Some(a.clone());
        let s = run(&cfg).unwrap();
        assert!(s.passed);
        cfg.outputs.csv = Some(b.clone());
        run(&cfg).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn expansion_prices_without_seed() {
        let mut cfg = RunConfig::new(ExperimentKind::PriceExpansion);
        cfg.model = Some(ModelBlock::ReferenceMerton);
        cfg.pricing = Some(PricingBlock { strikes: vec![1.0], maturities: vec![0.25], ..Default::default() });
        let s = run(&cfg).unwrap();
        let price = s.data["prices"][0]["price"].as_f64().unwrap();
        assert!((price - 0.05515).abs() < 2e-4);
    }

    #[test]
    fn failure_classes() {
        assert_eq!(classify(&Error::Config("x".into())).exit_code(), 2);
        assert_eq!(classify(&Error::Inconclusive).exit_code(), 3);
        let io = Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "x"));
        assert_eq!(classify(&io).exit_code(), 4);
    }
}
