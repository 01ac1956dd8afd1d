//! Mesh-refinement studies of one eigenvalue against a reference value.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::Order;
use crate::mesh::{build_mesh, DomainTag};
use crate::stokes::three_field::{solve_three_field_eigs, ThreeFieldParams};
use crate::stokes::two_field::{solve_two_field_eigs, TwoFieldParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    TwoField,
    ThreeField,
}

impl Formulation {
    pub fn name(&self) -> &'static str {
        match self {
            Formulation::TwoField => "two_field",
            Formulation::ThreeField => "three_field",
        }
    }
}

/// Viscosity and stabilization constants of both formulations; each
/// formulation reads its own subset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    pub mu: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

impl Default for Constants {
    fn default() -> Self {
        let two = TwoFieldParams::default();
        let three = ThreeFieldParams::default();
        Constants {
            mu: two.mu,
            c1: two.c1,
            c2: two.c2,
            c3: three.c3,
            c4: three.c4,
            c5: three.c5,
        }
    }
}

impl Constants {
    pub fn two_field(&self) -> TwoFieldParams {
        TwoFieldParams {
            mu: self.mu,
            c1: self.c1,
            c2: self.c2,
        }
    }

    pub fn three_field(&self) -> ThreeFieldParams {
        ThreeFieldParams {
            mu: self.mu,
            c3: self.c3,
            c4: self.c4,
            c5: self.c5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Where the reference value comes from.
    #[serde(default)]
    pub citation: Option<String>,
    pub domain: DomainTag,
    pub formulation: Formulation,
    pub order: Order,
    /// Cells per unit edge, or target vertex counts for the cracked square.
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub constants: Constants,
    /// 1-based position in the ascending spectrum, counting multiplicity.
    pub eigen_index: usize,
    pub reference: f64,
    /// Eigenvalues to compute; at least `eigen_index`.
    #[serde(default)]
    pub k: Option<usize>,
}

impl StudyConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let config: StudyConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::invalid("study needs at least one mesh size"));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("mesh sizes must be strictly increasing"));
        }
        if !(self.reference > 0.0 && self.reference.is_finite()) {
            return Err(Error::invalid(format!("reference must be positive, got {}", self.reference)));
        }
        if self.eigen_index == 0 {
            return Err(Error::invalid("eigen_index is 1-based"));
        }
        if self.k.is_some_and(|k| k < self.eigen_index) {
            return Err(Error::invalid("k must be at least eigen_index"));
        }
        match self.formulation {
            Formulation::TwoField => self.constants.two_field().validate(),
            Formulation::ThreeField => self.constants.three_field().validate(),
        }
    }

    /// `{domain}_{formulation}_P{order}`, the stem of the report files.
    pub fn file_stem(&self) -> String {
        format!("{}_{}_P{}", self.domain.name(), self.formulation.name(), self.order.degree())
    }

    fn eigen_count(&self) -> usize {
        self.k.unwrap_or(self.eigen_index).max(self.eigen_index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub size: usize,
    pub h_max: f64,
    pub lambda_h: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub rows: Vec<StudyRow>,
    /// Least-squares rate over the finest half of the rows.
    pub slope: Option<f64>,
    /// Relative errors strictly decrease and every `λ_h` is at least the reference.
    pub monotone: bool,
}

/// A study that stopped at a failing mesh, with the rows finished before it.
#[derive(Debug, thiserror::Error)]
#[error("study failed at size {size}: {source}")]
pub struct StudyFailure {
    pub size: usize,
    pub rows: Vec<StudyRow>,
    #[source]
    pub source: Error,
}

/// The solved eigenvalue at one mesh size.
pub fn study_point(config: &StudyConfig, size: usize) -> Result<StudyRow> {
    let mesh = build_mesh(config.domain, size)?;
    let k = config.eigen_count();
    let modes = match config.formulation {
        Formulation::TwoField => solve_two_field_eigs(&mesh, config.order, &config.constants.two_field(), k)?,
        Formulation::ThreeField => solve_three_field_eigs(&mesh, config.order, &config.constants.three_field(), k)?,
    };
    let lambda_h = modes.eigenvalues()[config.eigen_index - 1];
    Ok(StudyRow {
        size,
        h_max: mesh.h_max(),
        lambda_h,
        rel_error: (lambda_h - config.reference) / config.reference,
    })
}

pub fn run_convergence_study(config: &StudyConfig) -> std::result::Result<StudyReport, StudyFailure> {
    config.validate().map_err(|source| StudyFailure {
        size: 0,
        rows: Vec::new(),
        source,
    })?;
    let mut rows = Vec::with_capacity(config.sizes.len());
    for &size in &config.sizes {
        match study_point(config, size) {
            Ok(row) => rows.push(row),
            Err(source) => return Err(StudyFailure { size, rows, source }),
        }
    }
    Ok(summarize(config.clone(), rows))
}

/// Effective `1/h` of a mesh size: `n` on the structured meshes, `√M` on
/// the cracked square.
pub fn inverse_mesh_size(domain: DomainTag, size: usize) -> f64 {
    match domain {
        DomainTag::CrackedSquare => (size as f64).sqrt(),
        _ => size as f64,
    }
}

pub fn summarize(config: StudyConfig, rows: Vec<StudyRow>) -> StudyReport {
    let tail = &rows[rows.len() / 2..];
    let points: Vec<(f64, f64)> = tail
        .iter()
        .filter(|r| r.rel_error > 0.0)
        .map(|r| (inverse_mesh_size(config.domain, r.size), r.rel_error))
        .collect();
    let slope = if points.len() >= 2 { fit_slope(&points).ok() } else { None };
    let monotone = rows.iter().all(|r| r.lambda_h >= config.reference)
        && rows.windows(2).all(|w| w[1].rel_error < w[0].rel_error);
    StudyReport {
        config,
        rows,
        slope,
        monotone,
    }
}

/// Least-squares slope of `log(error)` against `log(1/size)`, where `size`
/// is an effective `1/h`; a positive value is a convergence rate.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("slope needs at least two points"));
    }
    if points.iter().any(|&(s, e)| !(e > 0.0) || !(s > 0.0)) {
        return Err(Error::invalid("slope needs positive sizes and errors"));
    }
    let xs: Vec<f64> = points.iter().map(|p| -p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope needs at least two distinct sizes"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

pub const CSV_HEADER: &str = "size,h_max,lambda_h,rel_error";

/// Numbers use the shortest decimal that parses back to the same `f64`.
pub fn emit_report(report: &StudyReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for r in &report.rows {
                let _ = writeln!(out, "{},{},{},{}", r.size, r.h_max, r.lambda_h, r.rel_error);
            }
        }
        ReportFormat::Markdown => {
            let c = &report.config;
            let size = if c.domain == DomainTag::CrackedSquare { "M" } else { "N" };
            let _ = writeln!(
                out,
                "# {} {} P{}, eigenvalue {}\n",
                c.domain.name(),
                c.formulation.name(),
                c.order.degree(),
                c.eigen_index
            );
            let _ = writeln!(out, "Reference: {}\n", c.reference);
            let _ = writeln!(out, "| {size} | λ_h | (λ_h − λ)/λ |");
            out.push_str("|---|---|---|\n");
            for r in &report.rows {
                let _ = writeln!(out, "| {} | {} | {} |", r.size, r.lambda_h, r.rel_error);
            }
            out.push('\n');
            match report.slope {
                Some(s) => {
                    let _ = writeln!(out, "Fitted slope: {s}");
                }
                None => out.push_str("Fitted slope: none\n"),
            }
            let _ = writeln!(out, "Monotone from above: {}", report.monotone);
        }
    }
    out
}

/// Writes `{stem}.csv` and `{stem}.md` into `dir`, returning both paths.
pub fn write_report(report: &StudyReport, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let stem = report.config.file_stem();
    let mut paths = Vec::new();
    for format in [ReportFormat::Csv, ReportFormat::Markdown] {
        let path = dir.as_ref().join(format!("{stem}.{}", format.extension()));
        std::fs::write(&path, emit_report(report, format))?;
        paths.push(path);
    }
    Ok(paths)
}
