use std::collections::BTreeMap;
use std::time::Instant;

use log::{info, warn};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reducing_atlas::bergman::{
    completeness_residual, orthogonality_residual, QuadratureGrid, SymbolOperators, TruncatedBasis,
};
use reducing_atlas::hecke::{structure_constants, AlgebraElement, ConvolutionAlgebra};
use reducing_atlas::monodromy::{pair_orbits, ComponentAtlas, MonodromyRep};
use reducing_atlas::symbol::{SymbolMap, SymbolSpec};
use serde::Serialize;

use crate::config::{QuadratureConfig, RunConfig, Stage};
use crate::{exit, CliError};

const RANDOM_PAIRS: usize = 3;

/// Geometry and algebra of a symbol.
pub struct Analysis {
    pub map: SymbolMap,
    pub rep: MonodromyRep,
    pub atlas: ComponentAtlas,
    pub algebra: ConvolutionAlgebra,
    pub idempotents: Vec<AlgebraElement>,
}

pub fn analyze(cfg: &RunConfig) -> reducing_atlas::Result<Analysis> {
    let tol = &cfg.tolerances;
    let map = cfg.symbol.build()?;
    let rep = MonodromyRep::compute(&map, tol)?;
    let atlas = pair_orbits(&rep);
    let algebra = structure_constants(&atlas)?;
    let idempotents = algebra.minimal_idempotents_seeded(cfg.seed)?;
    algebra.verify_idempotents(&idempotents, tol.idempotent)?;
    info!("q = {}, {} minimal idempotents", atlas.orbit_count(), idempotents.len());
    Ok(Analysis { map, rep, atlas, algebra, idempotents })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualRow {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualRow {
    fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self { name: name.into(), residual, tolerance, pass: residual <= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionSummary {
    pub index: usize,
    /// Rounded trace over the reported `N^k` block.
    pub rank: usize,
    /// Rounded trace over the trusted block.
    pub trusted_rank: usize,
    pub idempotent: f64,
    pub self_adjoint: f64,
    pub commutator: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verification {
    pub trusted_block: usize,
    pub internal_sizes: Vec<usize>,
    pub spill: f64,
    pub dropped_nodes: usize,
    pub projections: Vec<ProjectionSummary>,
    pub residuals: Vec<ResidualRow>,
    pub all_pass: bool,
}

pub fn verify(cfg: &RunConfig, a: &Analysis) -> reducing_atlas::Result<Verification> {
    let tol = &cfg.tolerances;
    let q = a.atlas.orbit_count();
    let basis = TruncatedBasis::new(cfg.truncation)?;
    let QuadratureConfig { m_r, m_theta, r_max } = cfg.quadrature;
    let grid = QuadratureGrid::new(m_r, m_theta, r_max)?;
    let ops = SymbolOperators::assemble(&a.map, &a.rep, &a.atlas, &basis, &grid, tol)?;
    let alg = &a.algebra;
    let mut rows = Vec::new();

    for o in 0..q {
        let e = AlgebraElement::basis(q, o);
        let m = ops.matrix(&e)?;
        rows.push(ResidualRow::new(format!("commutator[O{o}]"), ops.toeplitz_commutator(&m), tol.verification));
        rows.push(ResidualRow::new(format!("adjoint[O{o}]"), ops.adjoint_residual(alg, &e)?, tol.verification));
        let (norm, bound) = ops.norm_and_bound(&e)?;
        rows.push(ResidualRow::new(format!("bound[O{o}]"), (norm / bound - 1.0).max(0.0), tol.verification_hard));
    }
    for o in 0..q {
        for p in 0..q {
            let r = ops.homomorphism_residual(alg, &AlgebraElement::basis(q, o), &AlgebraElement::basis(q, p))?;
            rows.push(ResidualRow::new(format!("homomorphism[O{o},O{p}]"), r, tol.homomorphism));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut random = || AlgebraElement {
        coeffs: (0..q).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
    };
    for k in 0..RANDOM_PAIRS {
        let (x, y) = (random(), random());
        let r = ops.homomorphism_residual(alg, &x, &y)?;
        rows.push(ResidualRow::new(format!("homomorphism[random-{k}]"), r, tol.homomorphism));
    }

    let idempotents = match &cfg.inject_idempotents {
        Some(inj) => {
            warn!("verifying {} injected idempotents", inj.len());
            inj.iter()
                .map(|c| AlgebraElement { coeffs: c.iter().map(|[re, im]| Complex64::new(*re, *im)).collect() })
                .collect()
        }
        None => a.idempotents.clone(),
    };
    if let Some(bad) = idempotents.iter().find(|p| p.dim() != q) {
        return Err(reducing_atlas::Error::Input(format!(
            "idempotent has {} coefficients, the atlas has {q} orbits",
            bad.dim()
        )));
    }
    rows.push(ResidualRow::new("algebra.idempotents", alg.idempotent_defect(&idempotents)?, tol.idempotent));
    rows.push(ResidualRow::new("algebra.idempotent_count", idempotents.len().abs_diff(q) as f64, 0.0));

    let projections = ops.reducing_projections(&idempotents)?;
    for (k, p) in projections.iter().enumerate() {
        rows.push(ResidualRow::new(format!("projection[{k}].idempotent"), p.idempotent, tol.verification));
        rows.push(ResidualRow::new(format!("projection[{k}].self_adjoint"), p.self_adjoint, tol.verification));
        rows.push(ResidualRow::new(format!("projection[{k}].commutator"), p.commutator, tol.verification));
    }
    rows.push(ResidualRow::new("projections.completeness", completeness_residual(&projections), tol.verification));
    rows.push(ResidualRow::new("projections.orthogonality", orthogonality_residual(&projections), tol.verification));
    let trusted_block = ops.trusted().len();
    let rank_sum: usize = projections.iter().map(|p| p.trusted_rank).sum();
    rows.push(ResidualRow::new("projections.rank_sum", rank_sum.abs_diff(trusted_block) as f64, 0.0));

    let summaries = projections
        .iter()
        .enumerate()
        .map(|(index, p)| ProjectionSummary {
            index,
            rank: p.rank,
            trusted_rank: p.trusted_rank,
            idempotent: p.idempotent,
            self_adjoint: p.self_adjoint,
            commutator: p.commutator,
        })
        .collect();
    let all_pass = rows.iter().all(|r| r.pass);
    for r in rows.iter().filter(|r| !r.pass) {
        warn!("{} = {:e} exceeds {:e}", r.name, r.residual, r.tolerance);
    }
    Ok(Verification {
        trusted_block,
        internal_sizes: ops.factors().iter().map(|f| f.internal).collect(),
        spill: ops.spill(),
        dropped_nodes: ops.dropped_nodes(),
        projections: summaries,
        residuals: rows,
        all_pass,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Passed,
    Failed,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonodromySection {
    pub fiber_size: usize,
    pub degrees: Vec<usize>,
    pub base_point: Vec<Complex64>,
    pub base_fiber: Vec<Vec<Complex64>>,
    pub critical_values: Vec<Vec<Complex64>>,
    /// Lifted generators on the product fiber, in cycle notation.
    pub generators: Vec<String>,
    /// Boundary-loop permutation of each factor.
    pub boundary: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitRow {
    pub orbit: usize,
    pub representative: (usize, usize),
    pub size: usize,
    pub transpose: usize,
    pub diagonal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgebraSection {
    pub dimension: usize,
    pub commutative: bool,
    pub identity: Vec<usize>,
    pub involution: Vec<usize>,
    /// Nonzero `(O, P, Q, c)` with `e_O ⋆ e_P = Σ c e_Q`.
    pub structure: Vec<(usize, usize, usize, u64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub symbol: SymbolSpec,
    pub truncation: usize,
    pub quadrature: QuadratureConfig,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub q: Option<usize>,
    pub monodromy: Option<MonodromySection>,
    pub orbits: Option<Vec<OrbitRow>>,
    pub algebra: Option<AlgebraSection>,
    pub idempotents: Option<Vec<AlgebraElement>>,
    pub verification: Option<Verification>,
    pub exit_code: i32,
    /// Wall-clock seconds per stage; excluded from determinism comparisons.
    pub timings: BTreeMap<String, f64>,
}

pub struct Outcome {
    pub report: Report,
    pub analysis: Option<Analysis>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }
}

fn monodromy_section(a: &Analysis) -> MonodromySection {
    let fms = a.rep.factors();
    MonodromySection {
        fiber_size: a.rep.fiber_size(),
        degrees: a.rep.degrees(),
        base_point: a.rep.base_point(),
        base_fiber: a.rep.base_fiber(),
        critical_values: fms.iter().map(|f| f.critical_values.clone()).collect(),
        generators: a.rep.generators().iter().map(ToString::to_string).collect(),
        boundary: fms.iter().map(|f| f.boundary_perm.to_string()).collect(),
    }
}

fn orbit_rows(atlas: &ComponentAtlas) -> Vec<OrbitRow> {
    let diagonal = atlas.diagonal_orbits();
    atlas
        .canonical_reps()
        .iter()
        .enumerate()
        .map(|(orbit, &representative)| OrbitRow {
            orbit,
            representative,
            size: atlas.pairs(orbit).len(),
            transpose: atlas.transpose(orbit),
            diagonal: diagonal.contains(&orbit),
        })
        .collect()
}

/// Runs `stages` in order and assembles the report.
pub fn run(cfg: &RunConfig, stages: &[Stage]) -> Result<Outcome, CliError> {
    let plan = RunConfig::plan(stages)?;
    let mut records = Vec::new();
    let mut timings = BTreeMap::new();
    let mut analysis = None;
    let mut verification = None;
    let mut exit_code = exit::PASS;

    for &stage in &plan {
        let start = Instant::now();
        let result = match stage {
            Stage::Analyze => analyze(cfg).map(|a| analysis = Some(a)),
            Stage::Verify => match &analysis {
                Some(a) => verify(cfg, a).map(|v| verification = Some(v)),
                None => {
                    records.push(StageRecord { stage, status: Status::Skipped, error: None });
                    continue;
                }
            },
        };
        timings.insert(stage.name().to_string(), start.elapsed().as_secs_f64());
        let record = match result {
            Ok(()) => {
                let failed = stage == Stage::Verify && verification.as_ref().is_some_and(|v| !v.all_pass);
                if failed {
                    exit_code = exit::VERIFICATION_FAILED;
                }
                StageRecord { stage, status: if failed { Status::Failed } else { Status::Passed }, error: None }
            }
            Err(e) => {
                log::error!("{} stage failed: {e}", stage.name());
                exit_code = exit::STAGE_FAILED;
                StageRecord { stage, status: Status::Failed, error: Some(e.to_string()) }
            }
        };
        records.push(record);
    }

    let report = Report {
        symbol: cfg.symbol.clone(),
        truncation: cfg.truncation,
        quadrature: cfg.quadrature.clone(),
        seed: cfg.seed,
        stages: records,
        q: analysis.as_ref().map(|a| a.atlas.orbit_count()),
        monodromy: analysis.as_ref().map(monodromy_section),
        orbits: analysis.as_ref().map(|a| orbit_rows(&a.atlas)),
        algebra: analysis.as_ref().map(|a| AlgebraSection {
            dimension: a.algebra.dim(),
            commutative: a.algebra.is_commutative(),
            identity: a.algebra.identity_orbits().to_vec(),
            involution: a.algebra.involution_map().to_vec(),
            structure: a.algebra.sparse_structure(),
        }),
        idempotents: analysis.as_ref().map(|a| a.idempotents.clone()),
        verification,
        exit_code,
        timings,
    };
    Ok(Outcome { report, analysis })
}
