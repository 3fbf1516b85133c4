//! Koopman-operator reduced-order models of the switched drive.
//!
//! Closed-loop data is split by the inverter voltage vector that was actually
//! applied during each controller period. For each of the seven vectors the
//! drive is an *autonomous* nonlinear system, so a linear model
//! `z+ = K_v * z` is fitted in a lifted observable space by dynamic mode
//! decomposition: `K_v = Psi_hat * pinv(Psi)`, where the columns of `Psi`
//! hold lifted observations and `Psi_hat` the lifted successors recorded one
//! period later under vector `v`. A fixed projection `P = [I_4 | 0]` reads the
//! physical observation back out of the lifted state.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::drive::{DqState, ElectricalAngle};
use crate::error::{Error, Result};

/// Number of physical observables: `i_d`, `i_q`, `sin(eps_el)`, `cos(eps_el)`.
pub const OBSERVATION_DIM: usize = 4;

/// Largest lifted dimension any supported dictionary produces.
pub const MAX_LIFTED_DIM: usize = 15;

/// One plant observation at a controller sampling instant.
///
/// The rotor angle enters through its sine and cosine so the observation is
/// continuous in the angle and the lifted dynamics stay free of wrap-around
/// discontinuities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub i_d: f64,
    pub i_q: f64,
    pub sin_eps: f64,
    pub cos_eps: f64,
}

impl Observation {
    pub fn new(x: DqState, eps: ElectricalAngle) -> Self {
        let (sin_eps, cos_eps) = eps.sin_cos();
        Self {
            i_d: x.i_d,
            i_q: x.i_q,
            sin_eps,
            cos_eps,
        }
    }

    fn as_array(&self) -> [f64; OBSERVATION_DIM] {
        [self.i_d, self.i_q, self.sin_eps, self.cos_eps]
    }
}

/// Observable dictionary used to lift observations.
///
/// Every dictionary is identity-leading: the first four lifted coordinates are
/// the observation itself, so the projection `[I_4 | 0]` recovers it exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dictionary {
    /// The observation itself; lifted dimension 4.
    Identity,
    /// All monomials of the four observables up to `degree`, identity terms
    /// first, higher-degree terms after, optional constant observable last.
    Monomials { degree: u8, constant: bool },
}

impl Dictionary {
    /// Lifted dimension `k`.
    pub fn dim(&self) -> usize {
        match *self {
            Dictionary::Identity => OBSERVATION_DIM,
            Dictionary::Monomials { degree, constant } => {
                assert!(
                    (1..=2).contains(&degree),
                    "monomial dictionary supports degree 1 or 2, got {degree}"
                );
                let quadratic = if degree == 2 {
                    // Monomials x_i * x_j with i <= j over four variables.
                    OBSERVATION_DIM * (OBSERVATION_DIM + 1) / 2
                } else {
                    0
                };
                OBSERVATION_DIM + quadratic + usize::from(constant)
            }
        }
    }

    /// Lifts an observation into the dictionary's observable space.
    pub fn lift(&self, obs: &Observation) -> LiftedState {
        let y = obs.as_array();
        let mut z = LiftedState::zeros(self.dim());
        z.vals[..OBSERVATION_DIM].copy_from_slice(&y);
        match *self {
            Dictionary::Identity => {}
            Dictionary::Monomials { degree, constant } => {
                let mut n = OBSERVATION_DIM;
                if degree >= 2 {
                    for i in 0..OBSERVATION_DIM {
                        for j in i..OBSERVATION_DIM {
                            z.vals[n] = y[i] * y[j];
                            n += 1;
                        }
                    }
                }
                if constant {
                    z.vals[n] = 1.0;
                }
            }
        }
        z
    }

    fn describe(&self) -> String {
        match *self {
            Dictionary::Identity => "identity".to_string(),
            Dictionary::Monomials { degree, constant } => {
                format!("monomials degree={degree} constant={constant}")
            }
        }
    }

    fn parse(text: &str) -> Result<Self> {
        let mut it = text.split_whitespace();
        match it.next() {
            Some("identity") => Ok(Dictionary::Identity),
            Some("monomials") => {
                let mut degree = None;
                let mut constant = None;
                for tok in it {
                    if let Some(v) = tok.strip_prefix("degree=") {
                        degree = v.parse::<u8>().ok();
                    } else if let Some(v) = tok.strip_prefix("constant=") {
                        constant = v.parse::<bool>().ok();
                    }
                }
                match (degree, constant) {
                    (Some(degree), Some(constant)) => {
                        Ok(Dictionary::Monomials { degree, constant })
                    }
                    _ => Err(Error::BankFormat(format!("bad dictionary spec '{text}'"))),
                }
            }
            _ => Err(Error::BankFormat(format!("bad dictionary spec '{text}'"))),
        }
    }
}

/// A lifted observation; fixed-capacity so the controller hot path does not
/// allocate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedState {
    vals: [f64; MAX_LIFTED_DIM],
    len: usize,
}

impl LiftedState {
    pub fn zeros(len: usize) -> Self {
        assert!(len <= MAX_LIFTED_DIM);
        Self {
            vals: [0.0; MAX_LIFTED_DIM],
            len,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vals[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Snapshot pairs for one voltage vector, in lifted coordinates.
///
/// Column `j` of `psi` is a lifted observation and column `j` of `psi_hat`
/// its successor one controller period later, recorded while vector
/// `vector_index` was applied.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub vector_index: u8,
    pub psi: DMatrix<f64>,
    pub psi_hat: DMatrix<f64>,
}

impl SnapshotSet {
    pub fn pair_count(&self) -> usize {
        self.psi.ncols()
    }
}

/// Result of one least-squares model fit.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// The fitted `k x k` matrix acting on lifted column states.
    pub matrix: DMatrix<f64>,
    /// Relative Frobenius residual `||K*Psi - Psi_hat|| / ||Psi_hat||`.
    pub residual: f64,
    /// Number of singular values kept by the pseudo-inverse.
    pub retained_rank: usize,
    /// True when the snapshot matrix does not have full effective rank; the
    /// fit is still returned (minimum-norm solution) but should be reported.
    pub rank_deficient: bool,
    /// Singular values of the snapshot matrix, descending.
    pub singular_values: Vec<f64>,
}

/// Fits `K` minimizing `||K * Psi - Psi_hat||_F` via an SVD pseudo-inverse.
///
/// Singular values below `rel_tol` times the largest are truncated, which
/// selects the minimum-norm solution on rank-deficient data.
pub fn fit(set: &SnapshotSet, rel_tol: f64) -> FitOutcome {
    let k = set.psi.nrows();
    assert_eq!(set.psi_hat.nrows(), k, "snapshot dimension mismatch");
    assert_eq!(
        set.psi.ncols(),
        set.psi_hat.ncols(),
        "snapshot pair count mismatch"
    );
    assert!(set.pair_count() > 0, "cannot fit an empty snapshot set");

    let svd = set.psi.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = rel_tol * sigma_max;
    let retained_rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let singular_values = svd.singular_values.iter().copied().collect();
    let pinv = svd
        .pseudo_inverse(cutoff)
        .expect("SVD with both factors requested");
    let matrix = &set.psi_hat * pinv;

    let denom = set.psi_hat.norm();
    let misfit = (&matrix * &set.psi - &set.psi_hat).norm();
    let residual = if denom > 0.0 { misfit / denom } else { misfit };
    let rank_deficient = retained_rank < k.min(set.pair_count());

    FitOutcome {
        matrix,
        residual,
        retained_rank,
        rank_deficient,
        singular_values,
    }
}

/// Collects the snapshot pairs driven by one voltage vector.
///
/// `applied[i]` is the vector index that was active between `observations[i]`
/// and `observations[i + 1]`; thus `applied.len() + 1 == observations.len()`.
pub fn assemble(
    observations: &[Observation],
    applied: &[u8],
    vector_index: u8,
    dict: &Dictionary,
) -> SnapshotSet {
    assert_eq!(
        applied.len() + 1,
        observations.len(),
        "need one more observation than applied vectors"
    );
    let k = dict.dim();
    let idx: Vec<usize> = applied
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v == vector_index)
        .map(|(i, _)| i)
        .collect();
    let m = idx.len();
    let mut psi = DMatrix::zeros(k, m);
    let mut psi_hat = DMatrix::zeros(k, m);
    for (col, &i) in idx.iter().enumerate() {
        psi.column_mut(col)
            .copy_from_slice(dict.lift(&observations[i]).as_slice());
        psi_hat
            .column_mut(col)
            .copy_from_slice(dict.lift(&observations[i + 1]).as_slice());
    }
    SnapshotSet {
        vector_index,
        psi,
        psi_hat,
    }
}

/// Per-vector training diagnostics embedded in a model bank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorFitStats {
    pub pairs: usize,
    pub residual: f64,
    pub retained_rank: usize,
    pub rank_deficient: bool,
}

/// The trained model family: one lifted linear model per voltage vector plus
/// the shared projection back to the observation.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModelBank {
    pub dictionary: Dictionary,
    pub tolerance: f64,
    /// `matrices[v]` propagates the lifted state one period under vector `v`.
    pub matrices: Vec<DMatrix<f64>>,
    /// `[I_4 | 0]`, mapping a lifted state to the observation.
    pub projection: DMatrix<f64>,
    pub stats: Vec<VectorFitStats>,
}

/// Number of distinct inverter voltage vectors, hence models per bank.
pub const VECTOR_COUNT: usize = 7;

impl KoopmanModelBank {
    pub fn lifted_dim(&self) -> usize {
        self.dictionary.dim()
    }

    /// Lifts a raw observation with the bank's own dictionary.
    pub fn lift(&self, obs: &Observation) -> LiftedState {
        self.dictionary.lift(obs)
    }

    /// Propagates a lifted state one controller period under `vector_index`.
    pub fn predict(&self, z: &LiftedState, vector_index: u8) -> LiftedState {
        let k = self.lifted_dim();
        debug_assert_eq!(z.len(), k);
        let m = &self.matrices[vector_index as usize];
        let mut out = LiftedState::zeros(k);
        // Column-major accumulation; nalgebra stores column-major.
        let cols = m.as_slice();
        let zs = z.as_slice();
        for (c, &zc) in zs.iter().enumerate() {
            let col = &cols[c * k..(c + 1) * k];
            for (acc, &m) in out.vals.iter_mut().zip(col) {
                *acc += m * zc;
            }
        }
        out
    }

    /// Reads the physical observation out of a lifted state via `P = [I_4|0]`.
    pub fn project(&self, z: &LiftedState) -> Observation {
        let s = z.as_slice();
        Observation {
            i_d: s[0],
            i_q: s[1],
            sin_eps: s[2],
            cos_eps: s[3],
        }
    }

    /// Serializes the bank as self-describing text with full `f64` precision.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let k = self.lifted_dim();
        out.push_str("koopman-model-bank v1\n");
        let _ = writeln!(out, "dictionary {}", self.dictionary.describe());
        let _ = writeln!(out, "dim {k}");
        let _ = writeln!(out, "tolerance {:.16e}", self.tolerance);
        let _ = writeln!(out, "vectors {VECTOR_COUNT}");
        let pairs: Vec<String> = self.stats.iter().map(|s| s.pairs.to_string()).collect();
        let _ = writeln!(out, "pairs {}", pairs.join(" "));
        let res: Vec<String> = self
            .stats
            .iter()
            .map(|s| format!("{:.16e}", s.residual))
            .collect();
        let _ = writeln!(out, "residuals {}", res.join(" "));
        let ranks: Vec<String> = self
            .stats
            .iter()
            .map(|s| s.retained_rank.to_string())
            .collect();
        let _ = writeln!(out, "ranks {}", ranks.join(" "));
        for (v, m) in self.matrices.iter().enumerate() {
            let _ = writeln!(out, "matrix {v} {k} {k}");
            write_matrix(&mut out, m);
        }
        let _ = writeln!(out, "projection {} {}", OBSERVATION_DIM, k);
        write_matrix(&mut out, &self.projection);
        out.push_str("end\n");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingModel(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let bad = |msg: &str| Error::BankFormat(msg.to_string());

        if next_line(&mut lines, "header")? != "koopman-model-bank v1" {
            return Err(bad("missing 'koopman-model-bank v1' header"));
        }
        let dict_line = next_line(&mut lines, "dictionary")?;
        let dictionary = Dictionary::parse(
            dict_line
                .strip_prefix("dictionary ")
                .ok_or_else(|| bad("missing dictionary line"))?,
        )?;
        let k: usize = field(next_line(&mut lines, "dim")?, "dim")?;
        if k != dictionary.dim() {
            return Err(bad("dim does not match dictionary"));
        }
        let tolerance: f64 = field(next_line(&mut lines, "tolerance")?, "tolerance")?;
        let nv: usize = field(next_line(&mut lines, "vectors")?, "vectors")?;
        if nv != VECTOR_COUNT {
            return Err(bad("expected 7 vectors"));
        }
        let pairs: Vec<usize> = fields(next_line(&mut lines, "pairs")?, "pairs")?;
        let residuals: Vec<f64> = fields(next_line(&mut lines, "residuals")?, "residuals")?;
        let ranks: Vec<usize> = fields(next_line(&mut lines, "ranks")?, "ranks")?;
        if pairs.len() != VECTOR_COUNT
            || residuals.len() != VECTOR_COUNT
            || ranks.len() != VECTOR_COUNT
        {
            return Err(bad("pairs/residuals/ranks must list 7 entries"));
        }

        let mut matrices = Vec::with_capacity(VECTOR_COUNT);
        for v in 0..VECTOR_COUNT {
            let head = next_line(&mut lines, "matrix header")?;
            let expect = format!("matrix {v} {k} {k}");
            if head != expect {
                return Err(Error::BankFormat(format!(
                    "expected '{expect}', found '{head}'"
                )));
            }
            matrices.push(read_matrix(&mut lines, k, k)?);
        }
        let head = next_line(&mut lines, "projection header")?;
        if head != format!("projection {OBSERVATION_DIM} {k}") {
            return Err(bad("bad projection header"));
        }
        let projection = read_matrix(&mut lines, OBSERVATION_DIM, k)?;
        if next_line(&mut lines, "end")? != "end" {
            return Err(bad("missing 'end' terminator"));
        }

        let stats = (0..VECTOR_COUNT)
            .map(|v| VectorFitStats {
                pairs: pairs[v],
                residual: residuals[v],
                retained_rank: ranks[v],
                rank_deficient: ranks[v] < k.min(pairs[v]),
            })
            .collect();
        Ok(Self {
            dictionary,
            tolerance,
            matrices,
            projection,
            stats,
        })
    }
}

fn write_matrix(out: &mut String, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.16e}", m[(r, c)]);
        }
        out.push('\n');
    }
}

fn read_matrix<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    rows: usize,
    cols: usize,
) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::BankFormat("truncated matrix".to_string()))?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::BankFormat(format!("bad matrix entry '{t}'")))
            })
            .collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(Error::BankFormat(format!(
                "matrix row has {} entries, expected {cols}",
                row.len()
            )));
        }
        for (c, x) in row.into_iter().enumerate() {
            m[(r, c)] = x;
        }
    }
    Ok(m)
}

fn next_line<'a>(lines: &mut std::str::Lines<'a>, what: &str) -> Result<&'a str> {
    lines
        .next()
        .ok_or_else(|| Error::BankFormat(format!("truncated file, expected {what}")))
}

fn field<T: std::str::FromStr>(line: &str, name: &str) -> Result<T> {
    line.split_whitespace()
        .nth(1)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::BankFormat(format!("bad {name} line '{line}'")))
}

fn fields<T: std::str::FromStr>(line: &str, name: &str) -> Result<Vec<T>> {
    line.split_whitespace()
        .skip(1)
        .map(|t| {
            t.parse()
                .map_err(|_| Error::BankFormat(format!("bad {name} entry '{t}'")))
        })
        .collect()
}

/// The fixed observation read-out `[I_4 | 0]`.
pub fn identity_projection(k: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(OBSERVATION_DIM, k);
    for i in 0..OBSERVATION_DIM {
        p[(i, i)] = 1.0;
    }
    p
}

/// Trains the full seven-model bank from one closed-loop record.
///
/// Fails with [`Error::InsufficientData`] when any vector has fewer than
/// `min_pairs` snapshot pairs; a model fitted from a handful of pairs would
/// silently extrapolate.
pub fn train_bank(
    observations: &[Observation],
    applied: &[u8],
    dictionary: Dictionary,
    rel_tol: f64,
    min_pairs: usize,
) -> Result<KoopmanModelBank> {
    let k = dictionary.dim();
    let mut matrices = Vec::with_capacity(VECTOR_COUNT);
    let mut stats = Vec::with_capacity(VECTOR_COUNT);
    for v in 0..VECTOR_COUNT {
        let set = assemble(observations, applied, v as u8, &dictionary);
        if set.pair_count() < min_pairs {
            return Err(Error::InsufficientData {
                vector_index: v as u8,
                got: set.pair_count(),
                need: min_pairs,
            });
        }
        let outcome = fit(&set, rel_tol);
        stats.push(VectorFitStats {
            pairs: set.pair_count(),
            residual: outcome.residual,
            retained_rank: outcome.retained_rank,
            rank_deficient: outcome.rank_deficient,
        });
        matrices.push(outcome.matrix);
    }
    Ok(KoopmanModelBank {
        dictionary,
        tolerance: rel_tol,
        matrices,
        projection: identity_projection(k),
        stats,
    })
}

/// One-step prediction accuracy of a bank on held-out data.
#[derive(Debug, Clone, Copy)]
pub struct HoldoutStats {
    pub vector_index: u8,
    pub pairs: usize,
    /// RMS one-step prediction error on `i_d`, amperes.
    pub rms_i_d: f64,
    /// RMS one-step prediction error on `i_q`, amperes.
    pub rms_i_q: f64,
}

/// Evaluates one-step current prediction errors of `bank` on a record.
pub fn evaluate(
    bank: &KoopmanModelBank,
    observations: &[Observation],
    applied: &[u8],
) -> Vec<HoldoutStats> {
    assert_eq!(applied.len() + 1, observations.len());
    let mut sq = [[0.0_f64; 2]; VECTOR_COUNT];
    let mut counts = [0_usize; VECTOR_COUNT];
    for (i, &v) in applied.iter().enumerate() {
        let z = bank.lift(&observations[i]);
        let pred = bank.project(&bank.predict(&z, v));
        let truth = &observations[i + 1];
        sq[v as usize][0] += (pred.i_d - truth.i_d).powi(2);
        sq[v as usize][1] += (pred.i_q - truth.i_q).powi(2);
        counts[v as usize] += 1;
    }
    (0..VECTOR_COUNT)
        .map(|v| HoldoutStats {
            vector_index: v as u8,
            pairs: counts[v],
            rms_i_d: if counts[v] > 0 {
                (sq[v][0] / counts[v] as f64).sqrt()
            } else {
                0.0
            },
            rms_i_q: if counts[v] > 0 {
                (sq[v][1] / counts[v] as f64).sqrt()
            } else {
                0.0
            },
        })
        .collect()
}

/// Trains on the chronologically first `train_fraction` of a record and
/// evaluates one-step prediction on the remainder.
pub fn train_with_holdout(
    observations: &[Observation],
    applied: &[u8],
    dictionary: Dictionary,
    rel_tol: f64,
    min_pairs: usize,
    train_fraction: f64,
) -> Result<(KoopmanModelBank, Vec<HoldoutStats>)> {
    assert!(
        (0.0..1.0).contains(&train_fraction) && train_fraction > 0.0,
        "train fraction must lie in (0, 1)"
    );
    let split = ((applied.len() as f64) * train_fraction).floor() as usize;
    if split == 0 || split == applied.len() {
        return Err(Error::InsufficientData {
            vector_index: 0,
            got: applied.len(),
            need: 2,
        });
    }
    let bank = train_bank(
        &observations[..=split],
        &applied[..split],
        dictionary,
        rel_tol,
        min_pairs,
    )?;
    let holdout = evaluate(&bank, &observations[split..], &applied[split..]);
    Ok((bank, holdout))
}
