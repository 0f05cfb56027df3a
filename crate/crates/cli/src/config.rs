//! Line-based run configuration: `section.key = value` pairs with `#`
//! comments.  Unknown keys are errors (with line numbers), missing keys fall
//! back to documented defaults, and `emit` produces a canonical text that
//! reparses to an equal configuration.

use std::collections::BTreeMap;
use std::fmt;

use widechannel::{validate_params, ConstitutiveParams, TagLayout};

/// All findings from one parse/validate pass, one message per line.
#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, msg) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{msg}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// Body-force specification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForcingSpec {
    None,
    /// Constant body force per unit mass.
    Constant(f64, f64),
}

impl ForcingSpec {
    pub fn eval(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
        match self {
            ForcingSpec::None => [0.0, 0.0],
            ForcingSpec::Constant(fx, fy) => [*fx, *fy],
        }
    }
}

/// Inflow data specification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InletSpec {
    Zero,
    /// Parabolic profile with the given peak speed.
    Parabolic(f64),
}

/// Pressure-mean target `D(t) = offset + slope * t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DSpec {
    pub offset: f64,
    pub slope: f64,
}

impl DSpec {
    pub fn eval(&self, t: f64) -> f64 {
        self.offset + self.slope * t
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub length: f64,
    pub height: f64,
    pub layout: TagLayout,
    pub r: f64,
    pub q: f64,
    pub sigma2: f64,
    pub sigma_r: f64,
    pub sigma4: f64,
    pub sigma_q: f64,
    pub rho2: f64,
    pub rho_r: f64,
    pub rho4: f64,
    pub rho_q: f64,
    pub forcing: ForcingSpec,
    pub inlet: InletSpec,
    /// Outlet fluxes; empty means "derive from the inlet".
    pub fluxes: Vec<f64>,
    pub d: DSpec,
    pub ladder: Vec<f64>,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub kappa: f64,
    /// Explicit time step; `None` selects `min(ladder) / 4`.
    pub ht: Option<f64>,
    pub t_obs: f64,
    pub seed: u64,
    pub out_dir: String,
    pub vtk: bool,
}

impl RunConfig {
    pub fn eps_min(&self) -> f64 {
        self.ladder.last().copied().unwrap_or(f64::NAN)
    }

    pub fn eps_max(&self) -> f64 {
        self.ladder.first().copied().unwrap_or(f64::NAN)
    }

    /// Effective time step (explicit value or the `eps_min / 4` default).
    pub fn time_step(&self) -> f64 {
        self.ht.unwrap_or(self.eps_min() / 4.0)
    }

    /// Number of time slabs covering `t_obs + 8 max(ladder)`.
    pub fn n_steps(&self) -> usize {
        let horizon = self.t_obs + 8.0 * self.eps_max();
        (horizon / self.time_step() - 1e-9).ceil().max(2.0) as usize
    }

    pub fn params(&self) -> ConstitutiveParams {
        ConstitutiveParams {
            r: self.r,
            q: self.q,
            sigma2: self.sigma2,
            sigma_r: self.sigma_r,
            sigma4: self.sigma4,
            sigma_q: self.sigma_q,
            rho2: self.rho2,
            rho_r: self.rho_r,
            rho4: self.rho4,
            rho_q: self.rho_q,
            eps: self.eps_max(),
        }
    }

    /// Parses config text; collects every problem instead of stopping at
    /// the first.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawMap::parse(text)?;
        let mut errs = Vec::new();

        let nx = raw.take_usize("geometry.nx", None, &mut errs);
        let ny = raw.take_usize("geometry.ny", None, &mut errs);
        let length = raw.take_f64("geometry.length", Some(2.0), &mut errs);
        let height = raw.take_f64("geometry.height", Some(1.0), &mut errs);
        let layout = match raw
            .take_string("geometry.layout", Some("single_outlet"), &mut errs)
            .as_str()
        {
            "single_outlet" => TagLayout::SingleOutlet,
            "two_outlet" => TagLayout::TwoOutlet,
            "" => TagLayout::SingleOutlet,
            other => {
                errs.push(format!(
                    "geometry.layout = {other}: expected single_outlet or two_outlet"
                ));
                TagLayout::SingleOutlet
            }
        };

        let r = raw.take_f64("physics.r", None, &mut errs);
        let q = raw.take_f64("physics.q", Some(4.5), &mut errs);
        let sigma2 = raw.take_f64("physics.sigma2", Some(0.5), &mut errs);
        let sigma_r = raw.take_f64("physics.sigma_r", Some(0.5), &mut errs);
        let sigma4 = raw.take_f64("physics.sigma4", Some(0.5), &mut errs);
        let sigma_q = raw.take_f64("physics.sigma_q", Some(0.5), &mut errs);
        let rho2 = raw.take_f64("physics.rho2", Some(0.5), &mut errs);
        let rho_r = raw.take_f64("physics.rho_r", Some(0.5), &mut errs);
        let rho4 = raw.take_f64("physics.rho4", Some(0.5), &mut errs);
        let rho_q = raw.take_f64("physics.rho_q", Some(0.5), &mut errs);
        let forcing_raw = raw.take_string("physics.forcing", Some("none"), &mut errs);
        let forcing = parse_forcing(&forcing_raw, &mut errs);

        let inlet_raw = raw.take_string("data.inlet", Some("parabolic 1"), &mut errs);
        let inlet = parse_inlet(&inlet_raw, &mut errs);
        let fluxes_raw = raw.take_string("data.fluxes", Some("derived"), &mut errs);
        let fluxes = parse_fluxes(&fluxes_raw, &mut errs);
        let initial = raw.take_string("data.initial", Some("extension"), &mut errs);
        if initial != "extension" {
            errs.push(format!(
                "data.initial = {initial}: only 'extension' is supported"
            ));
        }
        let d_raw = raw.take_string("data.d", Some("constant 0"), &mut errs);
        let d = parse_d(&d_raw, &mut errs);

        let ladder = raw.take_f64_list("solver.ladder", Some(vec![0.4, 0.2, 0.1]), &mut errs);
        let grad_tol = raw.take_f64("solver.grad_tol", Some(1e-6), &mut errs);
        let max_iter = raw.take_usize("solver.max_iter", Some(20_000), &mut errs);
        let kappa = raw.take_f64("solver.kappa", Some(1e4), &mut errs);
        let ht_raw = raw.take_string("solver.ht", Some("auto"), &mut errs);
        let ht = if ht_raw == "auto" || ht_raw.is_empty() {
            None
        } else {
            match ht_raw.parse::<f64>() {
                Ok(v) => Some(v),
                Err(_) => {
                    errs.push(format!("solver.ht = {ht_raw}: expected a number or 'auto'"));
                    None
                }
            }
        };
        let t_obs = raw.take_f64("solver.t_obs", Some(1.0), &mut errs);
        let seed = raw.take_u64("solver.seed", Some(42), &mut errs);

        let out_dir = raw.take_string("output.directory", Some("out"), &mut errs);
        let vtk = raw.take_bool("output.vtk", Some(false), &mut errs);

        raw.report_unknown(&mut errs);
        if !errs.is_empty() {
            return Err(ConfigError(errs));
        }
        Ok(Self {
            nx,
            ny,
            length,
            height,
            layout,
            r,
            q,
            sigma2,
            sigma_r,
            sigma4,
            sigma_q,
            rho2,
            rho_r,
            rho4,
            rho_q,
            forcing,
            inlet,
            fluxes,
            d,
            ladder,
            grad_tol,
            max_iter,
            kappa,
            ht,
            t_obs,
            seed,
            out_dir,
            vtk,
        })
    }

    /// Cross-field validation; returns advisory notes on success.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let mut errs = Vec::new();
        let mut notes = Vec::new();

        if self.r < 2.0 {
            errs.push(format!(
                "physics.r = {}: unsupported; this solver requires r >= 2 \
                 (sub-quadratic growth laws are outside its scope)",
                self.r
            ));
        } else {
            match validate_params(&self.params()) {
                Ok(rep) => {
                    if !rep.window_ok {
                        notes.push(
                            "exponents outside the a-priori analysis window; runs proceed \
                             but the uniform estimates are not guaranteed"
                                .to_string(),
                        );
                    }
                    notes.extend(rep.notes);
                }
                Err(e) => errs.push(format!("physics: {e}")),
            }
        }

        if let Err(e) =
            widechannel::build_rect_channel(self.nx, self.ny, self.length, self.height, self.layout)
        {
            errs.push(format!("geometry: {e}"));
        }

        if self.ladder.is_empty() {
            errs.push("solver.ladder: must contain at least one scale".into());
        }
        for w in self.ladder.windows(2) {
            if !(w[1] < w[0]) {
                errs.push(format!(
                    "solver.ladder: scales must decrease strictly ({} then {})",
                    w[0], w[1]
                ));
                break;
            }
        }
        if self.ladder.iter().any(|e| !(*e > 0.0)) {
            errs.push("solver.ladder: scales must be positive".into());
        } else {
            let ht = self.time_step();
            if !(ht > 0.0) || !ht.is_finite() {
                errs.push(format!("solver.ht = {ht}: must be positive and finite"));
            } else if ht > self.eps_min() / 4.0 * (1.0 + 1e-12) {
                errs.push(format!(
                    "solver.ht = {ht}: must be at most min(ladder)/4 = {}",
                    self.eps_min() / 4.0
                ));
            }
        }
        if !(self.grad_tol > 0.0) {
            errs.push(format!("solver.grad_tol = {}: must be positive", self.grad_tol));
        }
        if self.max_iter == 0 {
            errs.push("solver.max_iter: must be at least 1".into());
        }
        if !(self.kappa >= 0.0) {
            errs.push(format!("solver.kappa = {}: must be nonnegative", self.kappa));
        }
        if !(self.t_obs > 0.0) {
            errs.push(format!("solver.t_obs = {}: must be positive", self.t_obs));
        }
        if let InletSpec::Parabolic(peak) = self.inlet {
            if !peak.is_finite() {
                errs.push(format!("data.inlet peak = {peak}: must be finite"));
            }
        }
        if !self.fluxes.is_empty() {
            let n_out = match self.layout {
                TagLayout::SingleOutlet => 1,
                TagLayout::TwoOutlet => 2,
            };
            if self.fluxes.len() != n_out {
                errs.push(format!(
                    "data.fluxes: {} values given but the layout has {} outlet(s)",
                    self.fluxes.len(),
                    n_out
                ));
            }
        }

        if errs.is_empty() {
            Ok(notes)
        } else {
            Err(ConfigError(errs))
        }
    }

    /// Canonical text form; `parse(emit(c)) == c`.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        s.push_str("geometry.nx = ");
        s.push_str(&self.nx.to_string());
        s.push('\n');
        s.push_str("geometry.ny = ");
        s.push_str(&self.ny.to_string());
        s.push('\n');
        s.push_str(&format!("geometry.length = {}\n", self.length));
        s.push_str(&format!("geometry.height = {}\n", self.height));
        s.push_str(&format!(
            "geometry.layout = {}\n",
            match self.layout {
                TagLayout::SingleOutlet => "single_outlet",
                TagLayout::TwoOutlet => "two_outlet",
            }
        ));
        s.push_str(&format!("physics.r = {}\n", self.r));
        s.push_str(&format!("physics.q = {}\n", self.q));
        s.push_str(&format!("physics.sigma2 = {}\n", self.sigma2));
        s.push_str(&format!("physics.sigma_r = {}\n", self.sigma_r));
        s.push_str(&format!("physics.sigma4 = {}\n", self.sigma4));
        s.push_str(&format!("physics.sigma_q = {}\n", self.sigma_q));
        s.push_str(&format!("physics.rho2 = {}\n", self.rho2));
        s.push_str(&format!("physics.rho_r = {}\n", self.rho_r));
        s.push_str(&format!("physics.rho4 = {}\n", self.rho4));
        s.push_str(&format!("physics.rho_q = {}\n", self.rho_q));
        s.push_str(&format!(
            "physics.forcing = {}\n",
            match self.forcing {
                ForcingSpec::None => "none".to_string(),
                ForcingSpec::Constant(fx, fy) => format!("constant {fx} {fy}"),
            }
        ));
        s.push_str(&format!(
            "data.inlet = {}\n",
            match self.inlet {
                InletSpec::Zero => "zero".to_string(),
                InletSpec::Parabolic(p) => format!("parabolic {p}"),
            }
        ));
        s.push_str(&format!(
            "data.fluxes = {}\n",
            if self.fluxes.is_empty() {
                "derived".to_string()
            } else {
                self.fluxes
                    .iter()
                    .map(|f| f.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            }
        ));
        s.push_str("data.initial = extension\n");
        s.push_str(&format!("data.d = linear {} {}\n", self.d.offset, self.d.slope));
        s.push_str(&format!(
            "solver.ladder = {}\n",
            self.ladder
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ));
        s.push_str(&format!("solver.grad_tol = {}\n", self.grad_tol));
        s.push_str(&format!("solver.max_iter = {}\n", self.max_iter));
        s.push_str(&format!("solver.kappa = {}\n", self.kappa));
        s.push_str(&format!(
            "solver.ht = {}\n",
            self.ht.map_or("auto".to_string(), |h| h.to_string())
        ));
        s.push_str(&format!("solver.t_obs = {}\n", self.t_obs));
        s.push_str(&format!("solver.seed = {}\n", self.seed));
        s.push_str(&format!("output.directory = {}\n", self.out_dir));
        s.push_str(&format!("output.vtk = {}\n", self.vtk));
        s
    }
}

fn parse_forcing(raw: &str, errs: &mut Vec<String>) -> ForcingSpec {
    let parts: Vec<&str> = raw.split_whitespace().collect();
    match parts.as_slice() {
        ["none"] | [] => ForcingSpec::None,
        ["constant", fx, fy] => match (fx.parse(), fy.parse()) {
            (Ok(a), Ok(b)) => ForcingSpec::Constant(a, b),
            _ => {
                errs.push(format!("physics.forcing = {raw}: expected two numbers"));
                ForcingSpec::None
            }
        },
        _ => {
            errs.push(format!(
                "physics.forcing = {raw}: expected 'none' or 'constant FX FY'"
            ));
            ForcingSpec::None
        }
    }
}

fn parse_inlet(raw: &str, errs: &mut Vec<String>) -> InletSpec {
    let parts: Vec<&str> = raw.split_whitespace().collect();
    match parts.as_slice() {
        ["zero"] => InletSpec::Zero,
        ["parabolic", peak] => match peak.parse() {
            Ok(p) => InletSpec::Parabolic(p),
            Err(_) => {
                errs.push(format!("data.inlet = {raw}: peak must be a number"));
                InletSpec::Zero
            }
        },
        _ => {
            errs.push(format!(
                "data.inlet = {raw}: expected 'zero' or 'parabolic PEAK'"
            ));
            InletSpec::Zero
        }
    }
}

fn parse_fluxes(raw: &str, errs: &mut Vec<String>) -> Vec<f64> {
    if raw == "derived" || raw.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for piece in raw.split(',') {
        match piece.trim().parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) => {
                errs.push(format!(
                    "data.fluxes = {raw}: expected 'derived' or comma-separated numbers"
                ));
                return Vec::new();
            }
        }
    }
    out
}

fn parse_d(raw: &str, errs: &mut Vec<String>) -> DSpec {
    let parts: Vec<&str> = raw.split_whitespace().collect();
    match parts.as_slice() {
        ["constant", v] => match v.parse() {
            Ok(offset) => DSpec { offset, slope: 0.0 },
            Err(_) => {
                errs.push(format!("data.d = {raw}: expected a number"));
                DSpec { offset: 0.0, slope: 0.0 }
            }
        },
        ["linear", a, b] => match (a.parse(), b.parse()) {
            (Ok(offset), Ok(slope)) => DSpec { offset, slope },
            _ => {
                errs.push(format!("data.d = {raw}: expected two numbers"));
                DSpec { offset: 0.0, slope: 0.0 }
            }
        },
        _ => {
            errs.push(format!(
                "data.d = {raw}: expected 'constant V' or 'linear A B'"
            ));
            DSpec { offset: 0.0, slope: 0.0 }
        }
    }
}

/// Raw `key -> (line, value)` map with typed, defaulting extractors.
pub(crate) struct RawMap {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawMap {
    pub(crate) fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut errs = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some(eq) = line.find('=') else {
                errs.push(format!("line {line_no}: expected 'section.key = value'"));
                continue;
            };
            let key = line[..eq].trim().to_string();
            let value = line[eq + 1..].trim().to_string();
            if key.is_empty() || !key.contains('.') {
                errs.push(format!(
                    "line {line_no}: key '{key}' must have the form section.name"
                ));
                continue;
            }
            if let Some((first_line, _)) = entries.get(&key) {
                errs.push(format!(
                    "line {line_no}: duplicate key '{key}' (first set at line {first_line})"
                ));
                continue;
            }
            entries.insert(key, (line_no, value));
        }
        if errs.is_empty() {
            Ok(Self { entries })
        } else {
            Err(ConfigError(errs))
        }
    }

    pub(crate) fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    pub(crate) fn take_string(&mut self, key: &str, default: Option<&str>, errs: &mut Vec<String>) -> String {
        match self.take(key) {
            Some(v) => v,
            None => match default {
                Some(d) => d.to_string(),
                None => {
                    errs.push(format!("missing required key '{key}'"));
                    String::new()
                }
            },
        }
    }

    pub(crate) fn take_parsed<T: std::str::FromStr>(
        &mut self,
        key: &str,
        default: Option<T>,
        kind: &str,
        errs: &mut Vec<String>,
    ) -> T
    where
        T: Default,
    {
        match self.take(key) {
            Some(v) => match v.parse::<T>() {
                Ok(x) => x,
                Err(_) => {
                    errs.push(format!("{key} = {v}: expected {kind}"));
                    T::default()
                }
            },
            None => match default {
                Some(d) => d,
                None => {
                    errs.push(format!("missing required key '{key}'"));
                    T::default()
                }
            },
        }
    }

    pub(crate) fn take_f64(&mut self, key: &str, default: Option<f64>, errs: &mut Vec<String>) -> f64 {
        self.take_parsed(key, default, "a number", errs)
    }

    pub(crate) fn take_usize(&mut self, key: &str, default: Option<usize>, errs: &mut Vec<String>) -> usize {
        self.take_parsed(key, default, "a nonnegative integer", errs)
    }

    pub(crate) fn take_u64(&mut self, key: &str, default: Option<u64>, errs: &mut Vec<String>) -> u64 {
        self.take_parsed(key, default, "a nonnegative integer", errs)
    }

    pub(crate) fn take_bool(&mut self, key: &str, default: Option<bool>, errs: &mut Vec<String>) -> bool {
        self.take_parsed(key, default, "true or false", errs)
    }

    pub(crate) fn take_f64_list(
        &mut self,
        key: &str,
        default: Option<Vec<f64>>,
        errs: &mut Vec<String>,
    ) -> Vec<f64> {
        match self.take(key) {
            Some(v) => {
                let mut out = Vec::new();
                for piece in v.split(',') {
                    match piece.trim().parse::<f64>() {
                        Ok(x) => out.push(x),
                        Err(_) => {
                            errs.push(format!(
                                "{key} = {v}: expected comma-separated numbers"
                            ));
                            return default.unwrap_or_default();
                        }
                    }
                }
                out
            }
            None => match default {
                Some(d) => d,
                None => {
                    errs.push(format!("missing required key '{key}'"));
                    Vec::new()
                }
            },
        }
    }

    pub(crate) fn report_unknown(&self, errs: &mut Vec<String>) {
        for (key, (line, _)) in &self.entries {
            errs.push(format!("line {line}: unknown key '{key}'"));
        }
    }
}
