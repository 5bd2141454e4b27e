//! TOML experiment configuration.

use crate::error::{Error, Result};
use crate::forward::Mode;
use crate::grid::{build_grid, partition_domain, DomainPartition, Interval, TimeGrid, WindowShape};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selector {
    ForwardCheck,
    DnIdentities,
    RungeSweep,
    StabilitySweep,
    #[serde(rename = "instability-1d")]
    Instability1d,
    CsTrace,
    NetBudget,
}

impl Selector {
    pub const ALL: [Selector; 7] = [
        Selector::ForwardCheck,
        Selector::DnIdentities,
        Selector::RungeSweep,
        Selector::StabilitySweep,
        Selector::Instability1d,
        Selector::CsTrace,
        Selector::NetBudget,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Selector::ForwardCheck => "forward-check",
            Selector::DnIdentities => "dn-identities",
            Selector::RungeSweep => "runge-sweep",
            Selector::StabilitySweep => "stability-sweep",
            Selector::Instability1d => "instability-1d",
            Selector::CsTrace => "cs-trace",
            Selector::NetBudget => "net-budget",
        }
    }
}

impl FromStr for Selector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Selector::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Selector::ALL.iter().map(|v| v.name()).collect();
            Error::Config(format!("field `selector`: unknown value `{s}`, expected one of {}", names.join(", ")))
        })
    }
}

impl std::fmt::Display for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Spectral,
    SingularIntegral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridBlock {
    pub half_width: f64,
    pub points: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock { half_width: 8.0, points: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionBlock {
    pub omega: [f64; 2],
    pub w1: [f64; 2],
    pub w2: [f64; 2],
}

impl Default for PartitionBlock {
    fn default() -> Self {
        PartitionBlock { omega: [-1.0, 1.0], w1: [2.0, 3.0], w2: [2.0, 3.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeBlock {
    pub horizon: f64,
    pub steps: usize,
}

impl Default for TimeBlock {
    fn default() -> Self {
        TimeBlock { horizon: 2.0, steps: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorBlock {
    pub kind: OperatorKind,
    pub s: f64,
}

impl Default for OperatorBlock {
    fn default() -> Self {
        OperatorBlock { kind: OperatorKind::Spectral, s: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub mode: Mode,
    /// When set, overrides `time.steps` with `horizon / dt` (must divide evenly).
    pub dt: Option<f64>,
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock { mode: Mode::Spectral, dt: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForwardBlock {
    /// Amplitude of the centered bump potential.
    pub amplitude: f64,
    /// Eigenmode used for the cosine oracle.
    pub mode_index: usize,
    /// Temporal profiles per exterior node for the driven solve.
    pub temporal_profiles: usize,
}

impl Default for ForwardBlock {
    fn default() -> Self {
        ForwardBlock { amplitude: 0.5, mode_index: 2, temporal_profiles: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DnBlock {
    /// Bump amplitudes; identities are checked on every ordered pair.
    pub amplitudes: Vec<f64>,
    pub input_pairs: usize,
    pub temporal_profiles: usize,
}

impl Default for DnBlock {
    fn default() -> Self {
        DnBlock { amplitudes: vec![0.0, 0.3, 0.6], input_pairs: 5, temporal_profiles: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RungeBlock {
    pub amplitude: f64,
    pub temporal_profiles: usize,
    /// Cutoffs `10^{-k/2}` for `k` in `alpha_half_decades`.
    pub alpha_half_decades: [u32; 2],
    pub adjoint_trials: usize,
    pub density_sizes: Vec<usize>,
}

impl Default for RungeBlock {
    fn default() -> Self {
        RungeBlock {
            amplitude: 0.3,
            temporal_profiles: 8,
            alpha_half_decades: [2, 12],
            adjoint_trials: 10,
            density_sizes: vec![1, 2, 4, 8, 16, 32, 64],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityBlock {
    pub base_amplitude: f64,
    pub shape_center: f64,
    pub shape_radius: f64,
    /// Family parameters `ratio^k` for `k = 0..members`.
    pub members: usize,
    pub ratio: f64,
    pub temporal_profiles: usize,
    pub dictionary_k: usize,
    pub dictionary_l: usize,
    /// Uniform noise half-width on the second DN matrix; zero disables noise.
    pub noise: f64,
}

impl Default for StabilityBlock {
    fn default() -> Self {
        StabilityBlock {
            base_amplitude: 0.3,
            shape_center: 0.2,
            shape_radius: 0.5,
            members: 6,
            ratio: 0.5,
            temporal_profiles: 3,
            dictionary_k: 3,
            dictionary_l: 3,
            noise: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub shape: WindowShape,
    pub support: [f64; 2],
}

/// The instability lab has its own grid, step count and operator; partition and horizon are shared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstabilityBlock {
    pub half_width: f64,
    pub points: usize,
    pub steps: usize,
    pub operator: OperatorKind,
    pub s: f64,
    pub k: usize,
    pub probe_amplitude: f64,
    pub windows: Vec<WindowSpec>,
    pub epsilons: Vec<f64>,
    pub alpha: f64,
    pub r0: f64,
    /// `β` as a multiple of `c ε_ref / w_ref^α` with `ε_ref = 0.05`, `w_ref = 0.2`.
    pub beta_scale: f64,
}

impl Default for InstabilityBlock {
    fn default() -> Self {
        InstabilityBlock {
            half_width: 4.0,
            points: 256,
            steps: 256,
            operator: OperatorKind::SingularIntegral,
            s: 0.5,
            k: 8,
            probe_amplitude: 0.5,
            windows: vec![
                WindowSpec { shape: WindowShape::SineSquared, support: [0.1, 1.9] },
                WindowSpec { shape: WindowShape::Bump, support: [0.2, 1.8] },
                WindowSpec { shape: WindowShape::SineSquared, support: [0.5, 1.5] },
            ],
            epsilons: vec![0.2, 0.1, 0.05],
            alpha: 1.0,
            r0: 0.8,
            beta_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsTraceBlock {
    pub levels: usize,
    pub y_max: f64,
    /// Boundary data `exp(-(x/width)²)`.
    pub width: f64,
    pub tolerance: f64,
}

impl Default for CsTraceBlock {
    fn default() -> Self {
        CsTraceBlock { levels: 64, y_max: 6.0, width: 1.0, tolerance: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetBudgetBlock {
    pub dims: Vec<usize>,
    pub deltas: Vec<f64>,
    pub r: f64,
    pub chi_norm: f64,
    pub c_prime_big: f64,
    pub c_prime_small: f64,
}

impl Default for NetBudgetBlock {
    fn default() -> Self {
        NetBudgetBlock {
            dims: vec![1, 2, 3],
            deltas: vec![1e-2, 1e-4, 1e-6, 1e-8],
            r: 1.0,
            chi_norm: 1.0,
            c_prime_big: 1.0,
            c_prime_small: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub selector: Selector,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Absent disables caching.
    pub cache_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub grid: GridBlock,
    pub partition: PartitionBlock,
    pub time: TimeBlock,
    pub operator: OperatorBlock,
    pub solver: SolverBlock,
    pub forward: ForwardBlock,
    pub dn: DnBlock,
    pub runge: RungeBlock,
    pub stability: StabilityBlock,
    pub instability: InstabilityBlock,
    pub cs_trace: CsTraceBlock,
    pub net_budget: NetBudgetBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            selector: Selector::ForwardCheck,
            seed: 1,
            out_dir: PathBuf::from("fracwave-out"),
            cache_dir: None,
            threads: None,
            grid: GridBlock::default(),
            partition: PartitionBlock::default(),
            time: TimeBlock::default(),
            operator: OperatorBlock::default(),
            solver: SolverBlock::default(),
            forward: ForwardBlock::default(),
            dn: DnBlock::default(),
            runge: RungeBlock::default(),
            stability: StabilityBlock::default(),
            instability: InstabilityBlock::default(),
            cs_trace: CsTraceBlock::default(),
            net_budget: NetBudgetBlock::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let at = e.span().map(|sp| {
                let line = text[..sp.start].matches('\n').count();
                format!(" at line {}: `{}`", line + 1, text.lines().nth(line).unwrap_or("").trim())
            });
            Error::Config(format!("{}{}", e.message(), at.unwrap_or_default()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::Config(format!("field `config`: file {} does not exist", path.display())));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Canonical serialization hashed into the manifest and written into table headers.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("field `{field}`: {why}")));
        if !(self.grid.half_width > 0.0) {
            return bad("grid.half_width", format!("must be positive, got {}", self.grid.half_width));
        }
        if self.grid.points < 8 || self.grid.points % 2 == 1 {
            return bad("grid.points", format!("must be even and at least 8, got {}", self.grid.points));
        }
        if !(self.operator.s > 0.0 && self.operator.s < 1.0) {
            return bad("operator.s", format!("must lie in (0, 1), got {}", self.operator.s));
        }
        if let Some(dt) = self.solver.dt {
            let steps = self.time.horizon / dt;
            if !(dt > 0.0) || (steps - steps.round()).abs() > 1e-9 * steps {
                return bad("solver.dt", format!("{dt} does not divide the horizon {}", self.time.horizon));
            }
        }
        if self.time.steps == 0 && self.solver.dt.is_none() {
            return bad("time.steps", "must be positive".into());
        }
        if self.dn.amplitudes.is_empty() {
            return bad("dn.amplitudes", "needs at least one amplitude".into());
        }
        let [lo, hi] = self.runge.alpha_half_decades;
        if lo >= hi {
            return bad("runge.alpha_half_decades", format!("needs an increasing range, got [{lo}, {hi}]"));
        }
        if self.stability.members < 4 {
            return bad("stability.members", format!("the fits need at least 4 members, got {}", self.stability.members));
        }
        if !(self.stability.ratio > 0.0 && self.stability.ratio < 1.0) {
            return bad("stability.ratio", format!("must lie in (0, 1), got {}", self.stability.ratio));
        }
        if self.instability.windows.is_empty() {
            return bad("instability.windows", "needs at least one window".into());
        }
        if self.instability.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return bad("instability.epsilons", "must be strictly decreasing".into());
        }
        if self.net_budget.dims.contains(&0) {
            return bad("net_budget.dims", "dimensions start at 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads", "must be positive".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        match self.solver.dt {
            Some(dt) => (self.time.horizon / dt).round() as usize,
            None => self.time.steps,
        }
    }

    pub fn partition(&self) -> Result<DomainPartition> {
        let g = build_grid(self.grid.half_width, self.grid.points, 1)?;
        let iv = |p: [f64; 2]| Interval::new(p[0], p[1]);
        partition_domain(&g, iv(self.partition.omega), iv(self.partition.w1), iv(self.partition.w2))
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.time.horizon, self.steps())
    }
}
