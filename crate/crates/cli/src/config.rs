//! Line-oriented `key = value` run configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pucci_core::barriers::C_CONS;
use pucci_core::flow::{FlowConfig, SnapshotSchedule};
use pucci_core::geometry::Transform;
use pucci_core::verify::OperatorDesc;
use pucci_core::{
    canonical_initial_data, Domain, DomainDescriptor, Grid, InitialData, InitialKind, OperatorKind,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub msg: String,
}

impl ConfigError {
    fn at(line: Option<usize>, msg: impl Into<String>) -> Self {
        Self {
            line,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.msg),
            None => f.write_str(&self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Num,
    List,
    Int,
    Word(&'static [&'static str]),
    Points,
    Path,
}

impl Kind {
    fn describe(&self) -> String {
        match self {
            Kind::Num => "number".into(),
            Kind::List => "number list".into(),
            Kind::Int => "integer".into(),
            Kind::Word(w) => w.join("|"),
            Kind::Points => "points x,y; x,y; ...".into(),
            Kind::Path => "path".into(),
        }
    }
}

struct Key {
    name: &'static str,
    kind: Kind,
    default: &'static str,
    doc: &'static str,
}

const REQUIRED: &str = "required";
const AUTO: &str = "auto";
const UNSET: &str = "unset";

const SHAPES: &[&str] = &["interval", "rectangle", "disk", "polygon"];
const OPERATORS: &[&str] = &["pucci_minus", "pucci_plus", "laplacian"];
const INITIAL: &[&str] = &["distance", "distance_power", "eigen_of_laplacian"];
const SCHEDULES: &[&str] = &["uniform", "geometric"];
const SOURCES: &[&str] = &["eigen", "initial", "final", "file"];
const TRANSFORMS: &[&str] = &["auto", "log", "identity", "power"];
const BARRIERS: &[&str] = &["heat_kernel", "truncated_heat", "barenblatt"];

const KEYS: &[Key] = &[
    Key {
        name: "domain.shape",
        kind: Kind::Word(SHAPES),
        default: REQUIRED,
        doc: "domain shape",
    },
    Key {
        name: "domain.length",
        kind: Kind::Num,
        default: "1",
        doc: "interval [0, length]",
    },
    Key {
        name: "domain.lx",
        kind: Kind::Num,
        default: "1",
        doc: "rectangle [0, lx] x [0, ly]",
    },
    Key {
        name: "domain.ly",
        kind: Kind::Num,
        default: "1",
        doc: "rectangle height",
    },
    Key {
        name: "domain.radius",
        kind: Kind::Num,
        default: "1",
        doc: "disk centred at the origin",
    },
    Key {
        name: "domain.vertices",
        kind: Kind::Points,
        default: REQUIRED,
        doc: "convex polygon, counterclockwise",
    },
    Key {
        name: "operator.kind",
        kind: Kind::Word(OPERATORS),
        default: REQUIRED,
        doc: "operator variant",
    },
    Key {
        name: "operator.lambda_low",
        kind: Kind::Num,
        default: "1",
        doc: "lower ellipticity constant",
    },
    Key {
        name: "operator.lambda_high",
        kind: Kind::Num,
        default: "1",
        doc: "upper ellipticity constant",
    },
    Key {
        name: "m",
        kind: Kind::Num,
        default: "1",
        doc: "diffusion exponent (1 linear, > 1 porous)",
    },
    Key {
        name: "grid.h",
        kind: Kind::List,
        default: AUTO,
        doc: "spacing or ladder; auto = min extent / 32",
    },
    Key {
        name: "initial.kind",
        kind: Kind::Word(INITIAL),
        default: "distance",
        doc: "initial data family",
    },
    Key {
        name: "initial.power",
        kind: Kind::Num,
        default: AUTO,
        doc: "exponent of distance_power; auto = 1/m",
    },
    Key {
        name: "flow.t_end",
        kind: Kind::Num,
        default: "1",
        doc: "final time",
    },
    Key {
        name: "flow.eta",
        kind: Kind::Num,
        default: "0",
        doc: "boundary value of u (m > 1 only)",
    },
    Key {
        name: "flow.cfl_safety",
        kind: Kind::Num,
        default: "0.5",
        doc: "fraction of the CFL step",
    },
    Key {
        name: "snapshots.kind",
        kind: Kind::Word(SCHEDULES),
        default: "uniform",
        doc: "snapshot schedule",
    },
    Key {
        name: "snapshots.dt",
        kind: Kind::Num,
        default: AUTO,
        doc: "uniform spacing; auto = t_end / 16",
    },
    Key {
        name: "snapshots.first",
        kind: Kind::Num,
        default: AUTO,
        doc: "first geometric time; auto = t_end / 1024",
    },
    Key {
        name: "snapshots.ratio",
        kind: Kind::Num,
        default: "2",
        doc: "geometric ratio",
    },
    Key {
        name: "tol.mu",
        kind: Kind::Num,
        default: "1e-5",
        doc: "eigenvalue convergence",
    },
    Key {
        name: "tol.profile",
        kind: Kind::Num,
        default: "1e-4",
        doc: "profile convergence",
    },
    Key {
        name: "tol.concavity",
        kind: Kind::Num,
        default: "1e-8",
        doc: "relative midpoint tolerance",
    },
    Key {
        name: "tol.comparison",
        kind: Kind::Num,
        default: "1e-12",
        doc: "allowed ordering violation",
    },
    Key {
        name: "tol.ab",
        kind: Kind::Num,
        default: AUTO,
        doc: "bound on the AB constant; auto = m/(m-1) + 0.5",
    },
    Key {
        name: "tol.residual_factor",
        kind: Kind::Num,
        default: AUTO,
        doc: "barrier residual tolerance / h^2; auto = 1.42",
    },
    Key {
        name: "check.source",
        kind: Kind::Word(SOURCES),
        default: "eigen",
        doc: "field for the concavity check",
    },
    Key {
        name: "check.field",
        kind: Kind::Path,
        default: UNSET,
        doc: "CSV field when check.source = file",
    },
    Key {
        name: "check.transform",
        kind: Kind::Word(TRANSFORMS),
        default: "auto",
        doc: "auto = log (m = 1) or power (m > 1)",
    },
    Key {
        name: "check.exponent",
        kind: Kind::Num,
        default: AUTO,
        doc: "power transform exponent; auto = (m-1)/2",
    },
    Key {
        name: "check.band",
        kind: Kind::Num,
        default: "4",
        doc: "band width in units of h",
    },
    Key {
        name: "ab.window",
        kind: Kind::List,
        default: "0.5, 4",
        doc: "time window of the AB check",
    },
    Key {
        name: "comparison.pairs",
        kind: Kind::Int,
        default: "20",
        doc: "random ordered pairs",
    },
    Key {
        name: "barrier.kind",
        kind: Kind::Word(BARRIERS),
        default: "heat_kernel",
        doc: "subsolution family",
    },
    Key {
        name: "barrier.center",
        kind: Kind::List,
        default: AUTO,
        doc: "barrier centre; auto = domain centre",
    },
    Key {
        name: "barrier.times",
        kind: Kind::List,
        default: "0.5, 1",
        doc: "residual time window",
    },
    Key {
        name: "barrier.c",
        kind: Kind::Num,
        default: "0.25",
        doc: "Barenblatt constant",
    },
    Key {
        name: "barrier.c0",
        kind: Kind::Num,
        default: "1",
        doc: "truncated heat amplitude",
    },
    Key {
        name: "barrier.tau0",
        kind: Kind::Num,
        default: "0.5",
        doc: "truncated heat time shift",
    },
    Key {
        name: "barrier.delta0",
        kind: Kind::Num,
        default: "0.05",
        doc: "truncated heat cut level",
    },
    Key {
        name: "output.dir",
        kind: Kind::Path,
        default: UNSET,
        doc: "run directory; overridden by --out",
    },
    Key {
        name: "seed",
        kind: Kind::Int,
        default: "0",
        doc: "random seed",
    },
];

/// Table of every key, its type and default.
pub fn defaults_table() -> String {
    let mut s = String::from(
        "config keys (`key = value`, `#` comments, numbers accept pi arithmetic):\n\n",
    );
    for k in KEYS {
        s.push_str(&format!(
            "  {:<22} {:<44} default {:<9} {}\n",
            k.name,
            k.kind.describe(),
            k.default,
            k.doc
        ));
    }
    s
}

/// Evaluates `+ - * / ^`, parentheses, decimal literals, `pi` and `inf`.
pub fn eval_number(text: &str) -> Result<f64, String> {
    let mut p = Expr {
        s: text.as_bytes(),
        i: 0,
    };
    let v = p.sum()?;
    p.skip_ws();
    if p.i != p.s.len() {
        return Err(format!("unexpected `{}` in `{text}`", &text[p.i..]));
    }
    Ok(v)
}

struct Expr<'a> {
    s: &'a [u8],
    i: usize,
}

impl Expr<'_> {
    fn skip_ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.i).copied()
    }

    fn sum(&mut self) -> Result<f64, String> {
        let mut v = self.product()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.i += 1;
            let r = self.product()?;
            v = if c == b'+' { v + r } else { v - r };
        }
        Ok(v)
    }

    fn product(&mut self) -> Result<f64, String> {
        let mut v = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.i += 1;
            let r = self.unary()?;
            v = if c == b'*' { v * r } else { v / r };
        }
        Ok(v)
    }

    fn unary(&mut self) -> Result<f64, String> {
        match self.peek() {
            Some(b'-') => {
                self.i += 1;
                Ok(-self.unary()?)
            }
            Some(b'+') => {
                self.i += 1;
                self.unary()
            }
            _ => {
                let base = self.atom()?;
                if self.peek() == Some(b'^') {
                    self.i += 1;
                    Ok(base.powf(self.unary()?))
                } else {
                    Ok(base)
                }
            }
        }
    }

    fn atom(&mut self) -> Result<f64, String> {
        match self.peek() {
            Some(b'(') => {
                self.i += 1;
                let v = self.sum()?;
                if self.peek() != Some(b')') {
                    return Err("missing `)`".into());
                }
                self.i += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.i;
                while self.i < self.s.len() && self.s[self.i].is_ascii_alphabetic() {
                    self.i += 1;
                }
                match &self.s[start..self.i] {
                    b"pi" => Ok(std::f64::consts::PI),
                    b"inf" => Ok(f64::INFINITY),
                    w => Err(format!("unknown name `{}`", String::from_utf8_lossy(w))),
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.i;
                while self.i < self.s.len() {
                    let c = self.s[self.i];
                    let exp_sign =
                        (c == b'+' || c == b'-') && matches!(self.s[self.i - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.i += 1;
                    } else {
                        break;
                    }
                }
                let lit = std::str::from_utf8(&self.s[start..self.i]).unwrap();
                lit.parse::<f64>()
                    .map_err(|_| format!("bad number `{lit}`"))
            }
            Some(c) => Err(format!("unexpected `{}`", c as char)),
            None => Err("missing value".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    List(Vec<f64>),
    Int(u64),
    Word(String),
    Points(Vec<[f64; 2]>),
    Path(String),
}

fn parse_value(kind: Kind, text: &str) -> Result<Value, String> {
    Ok(match kind {
        Kind::Num => Value::Num(eval_number(text)?),
        Kind::List => Value::List(
            text.split(',')
                .map(eval_number)
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Kind::Int => Value::Int(
            text.parse::<u64>()
                .map_err(|_| format!("expected a nonnegative integer, got `{text}`"))?,
        ),
        Kind::Word(choices) => {
            if !choices.contains(&text) {
                return Err(format!(
                    "expected one of {}, got `{text}`",
                    choices.join(", ")
                ));
            }
            Value::Word(text.into())
        }
        Kind::Points => Value::Points(
            text.split(';')
                .map(|pt| {
                    let xy = pt
                        .split(',')
                        .map(eval_number)
                        .collect::<Result<Vec<_>, _>>()?;
                    match xy[..] {
                        [x, y] => Ok([x, y]),
                        _ => Err(format!("point `{}` needs two coordinates", pt.trim())),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Kind::Path => {
            if text.is_empty() {
                return Err("empty path".into());
            }
            Value::Path(text.into())
        }
    })
}

#[derive(Debug, Clone)]
struct Entry {
    value: Value,
    line: usize,
    text: String,
}

/// Parses the text into explicit entries; `auto` values are left out.
fn parse_entries(text: &str) -> Result<BTreeMap<&'static str, Entry>, ConfigError> {
    let mut out: BTreeMap<&'static str, Entry> = BTreeMap::new();
    let mut seen: BTreeMap<&'static str, usize> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            ConfigError::at(
                Some(line),
                format!("expected `key = value`, got `{content}`"),
            )
        })?;
        let (key, value) = (key.trim(), value.trim());
        let spec = KEYS.iter().find(|s| s.name == key).ok_or_else(|| {
            ConfigError::at(
                Some(line),
                format!("unknown key `{key}` (see `pucci --help defaults`)"),
            )
        })?;
        if let Some(first) = seen.insert(spec.name, line) {
            return Err(ConfigError::at(
                Some(line),
                format!("duplicate key `{key}` (first set on line {first})"),
            ));
        }
        if value == AUTO && !matches!(spec.kind, Kind::Word(_)) {
            continue;
        }
        let parsed = parse_value(spec.kind, value)
            .map_err(|e| ConfigError::at(Some(line), format!("{key}: {e}")))?;
        out.insert(
            spec.name,
            Entry {
                value: parsed,
                line,
                text: value.into(),
            },
        );
    }
    Ok(out)
}

/// Reads keys, falling back to defaults, and records the resolved text of every key read.
struct Reader {
    entries: BTreeMap<&'static str, Entry>,
    used: BTreeSet<&'static str>,
    resolved: BTreeMap<&'static str, String>,
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl Reader {
    fn spec(name: &str) -> &'static Key {
        KEYS.iter()
            .find(|k| k.name == name)
            .expect("registered key")
    }

    fn line(&self, name: &str) -> Option<usize> {
        self.entries.get(name).map(|e| e.line)
    }

    fn fail(&self, name: &str, msg: impl fmt::Display) -> ConfigError {
        ConfigError::at(self.line(name), format!("{name}: {msg}"))
    }

    /// Explicit value, literal default, or `None` for an `auto` default.
    fn raw(&mut self, name: &'static str) -> Result<Option<Value>, ConfigError> {
        let spec = Self::spec(name);
        self.used.insert(spec.name);
        if let Some(e) = self.entries.get(name) {
            self.resolved.insert(spec.name, e.text.clone());
            return Ok(Some(e.value.clone()));
        }
        match spec.default {
            REQUIRED => Err(ConfigError::at(
                None,
                format!("missing required key `{name}`"),
            )),
            AUTO | UNSET if !matches!(spec.kind, Kind::Word(_)) => Ok(None),
            d => {
                self.resolved.insert(spec.name, d.into());
                Ok(Some(parse_value(spec.kind, d).expect("valid default")))
            }
        }
    }

    fn num(&mut self, name: &'static str, auto: impl FnOnce() -> f64) -> Result<f64, ConfigError> {
        match self.raw(name)? {
            Some(Value::Num(v)) => Ok(v),
            Some(_) => unreachable!("{name} is numeric"),
            None => {
                let v = auto();
                self.resolved.insert(Self::spec(name).name, v.to_string());
                Ok(v)
            }
        }
    }

    fn positive(
        &mut self,
        name: &'static str,
        auto: impl FnOnce() -> f64,
    ) -> Result<f64, ConfigError> {
        let v = self.num(name, auto)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(self.fail(name, format!("must be positive and finite, got {v}")));
        }
        Ok(v)
    }

    fn list(
        &mut self,
        name: &'static str,
        auto: impl FnOnce() -> Vec<f64>,
    ) -> Result<Vec<f64>, ConfigError> {
        match self.raw(name)? {
            Some(Value::List(v)) => Ok(v),
            Some(_) => unreachable!("{name} is a list"),
            None => {
                let v = auto();
                self.resolved.insert(Self::spec(name).name, fmt_list(&v));
                Ok(v)
            }
        }
    }

    fn int(&mut self, name: &'static str) -> Result<u64, ConfigError> {
        match self.raw(name)? {
            Some(Value::Int(v)) => Ok(v),
            _ => unreachable!("{name} is an integer with a default"),
        }
    }

    fn word(&mut self, name: &'static str) -> Result<String, ConfigError> {
        match self.raw(name)? {
            Some(Value::Word(w)) => Ok(w),
            _ => unreachable!("{name} is a word with a default"),
        }
    }

    fn points(&mut self, name: &'static str) -> Result<Vec<[f64; 2]>, ConfigError> {
        match self.raw(name)? {
            Some(Value::Points(p)) => Ok(p),
            _ => unreachable!("{name} is required"),
        }
    }

    fn path(&mut self, name: &'static str) -> Result<Option<String>, ConfigError> {
        match self.raw(name)? {
            Some(Value::Path(p)) => Ok(Some(p)),
            None => Ok(None),
            Some(_) => unreachable!("{name} is a path"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialSpec {
    Distance,
    DistancePower(f64),
    EigenOfLaplacian,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Eigen,
    Initial,
    Final,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BarrierChoice {
    HeatKernel,
    TruncatedHeat { c0: f64, tau0: f64, delta0: f64 },
    Barenblatt { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub mu: f64,
    pub profile: f64,
    pub concavity: f64,
    pub comparison: f64,
    pub ab: f64,
    pub residual_factor: f64,
}

/// A fully resolved and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: DomainDescriptor,
    pub operator: OperatorDesc,
    pub m: f64,
    /// Grid spacings, one run per level.
    pub levels: Vec<f64>,
    pub initial: InitialSpec,
    pub t_end: f64,
    pub eta: f64,
    pub cfl_safety: f64,
    pub schedule: SnapshotSchedule<f64>,
    pub tol: Tolerances,
    pub source: Source,
    pub transform: Transform,
    pub band: f64,
    pub ab_window: (f64, f64),
    pub pairs: usize,
    pub barrier: BarrierChoice,
    pub center: [f64; 2],
    pub barrier_times: Vec<f64>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    resolved: BTreeMap<&'static str, String>,
}

impl RunConfig {
    /// Parses and validates; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut r = Reader {
            entries: parse_entries(text)?,
            used: BTreeSet::new(),
            resolved: BTreeMap::new(),
        };

        let shape = r.word("domain.shape")?;
        let domain = match shape.as_str() {
            "interval" => DomainDescriptor::Interval {
                length: r.positive("domain.length", || 1.0)?,
            },
            "rectangle" => DomainDescriptor::Rectangle {
                lx: r.positive("domain.lx", || 1.0)?,
                ly: r.positive("domain.ly", || 1.0)?,
            },
            "disk" => DomainDescriptor::Disk {
                radius: r.positive("domain.radius", || 1.0)?,
            },
            _ => DomainDescriptor::Polygon {
                vertices: r.points("domain.vertices")?,
            },
        };
        let dom = Domain::<f64>::from_descriptor(&domain).map_err(|e| r.fail("domain.shape", e))?;

        let variant = r.word("operator.kind")?;
        let lo = r.positive("operator.lambda_low", || 1.0)?;
        let hi = r.positive("operator.lambda_high", || 1.0)?;
        if hi < lo {
            return Err(r.fail(
                "operator.lambda_high",
                format!("operator.lambda_high = {hi} is below operator.lambda_low = {lo}"),
            ));
        }
        let operator = OperatorDesc::new(&variant, lo, hi);

        let m = r.num("m", || 1.0)?;
        if !(m >= 1.0 && m.is_finite()) {
            return Err(r.fail("m", format!("must be >= 1, got {m}")));
        }

        let extent = dom.min_extent();
        let levels = r.list("grid.h", || vec![extent / 32.0])?;
        for &h in &levels {
            if !(h > 0.0 && h.is_finite()) {
                return Err(r.fail("grid.h", format!("spacing must be positive, got {h}")));
            }
            if h > extent / 4.0 * (1.0 + 1e-12) {
                return Err(r.fail(
                    "grid.h",
                    format!("spacing {h} exceeds min extent / 4 = {}", extent / 4.0),
                ));
            }
        }

        let initial = match r.word("initial.kind")?.as_str() {
            "distance" => InitialSpec::Distance,
            "distance_power" => {
                InitialSpec::DistancePower(r.positive("initial.power", || 1.0 / m)?)
            }
            _ => {
                if matches!(domain, DomainDescriptor::Polygon { .. }) {
                    return Err(r.fail(
                        "initial.kind",
                        "eigen_of_laplacian has no closed form on polygons",
                    ));
                }
                InitialSpec::EigenOfLaplacian
            }
        };

        let t_end = r.positive("flow.t_end", || 1.0)?;
        let eta = r.num("flow.eta", || 0.0)?;
        if !(eta >= 0.0 && eta.is_finite()) || (m == 1.0 && eta != 0.0) {
            return Err(r.fail(
                "flow.eta",
                format!("must be >= 0, and 0 when m = 1; got {eta}"),
            ));
        }
        let cfl_safety = r.num("flow.cfl_safety", || 0.5)?;
        if !(cfl_safety > 0.0 && cfl_safety <= 1.0) {
            return Err(r.fail(
                "flow.cfl_safety",
                format!("must lie in (0, 1], got {cfl_safety}"),
            ));
        }
        let schedule = match r.word("snapshots.kind")?.as_str() {
            "uniform" => SnapshotSchedule::Uniform {
                dt_snap: r.positive("snapshots.dt", || t_end / 16.0)?,
            },
            _ => {
                let first = r.positive("snapshots.first", || t_end / 1024.0)?;
                let ratio = r.num("snapshots.ratio", || 2.0)?;
                if !(ratio > 1.0 && ratio.is_finite()) {
                    return Err(r.fail("snapshots.ratio", format!("must exceed 1, got {ratio}")));
                }
                SnapshotSchedule::Geometric { first, ratio }
            }
        };

        let tol = Tolerances {
            mu: r.positive("tol.mu", || 1e-5)?,
            profile: r.positive("tol.profile", || 1e-4)?,
            concavity: r.positive("tol.concavity", || 1e-8)?,
            comparison: r.num("tol.comparison", || 1e-12)?,
            ab: r.num("tol.ab", || {
                if m > 1.0 {
                    m / (m - 1.0) + 0.5
                } else {
                    f64::INFINITY
                }
            })?,
            residual_factor: r.positive("tol.residual_factor", || C_CONS)?,
        };
        if tol.comparison.is_nan() || tol.comparison < 0.0 {
            return Err(r.fail(
                "tol.comparison",
                format!("must be >= 0, got {}", tol.comparison),
            ));
        }
        if tol.ab.is_nan() || tol.ab <= 0.0 {
            return Err(r.fail("tol.ab", format!("must be positive, got {}", tol.ab)));
        }

        let source = match r.word("check.source")?.as_str() {
            "eigen" => Source::Eigen,
            "initial" => Source::Initial,
            "final" => Source::Final,
            _ => match r.path("check.field")? {
                Some(p) => {
                    if levels.len() > 1 {
                        return Err(
                            r.fail("check.field", "a field file needs a single grid.h level")
                        );
                    }
                    let p = base.join(p);
                    r.resolved.insert("check.field", p.display().to_string());
                    Source::File(p)
                }
                None => return Err(r.fail("check.source", "file source needs check.field")),
            },
        };
        let transform = match r.word("check.transform")?.as_str() {
            "log" => Transform::Log,
            "identity" => Transform::Identity,
            "auto" if m == 1.0 => Transform::Log,
            _ => {
                let q = r.positive("check.exponent", || {
                    if m > 1.0 {
                        (m - 1.0) / 2.0
                    } else {
                        0.5
                    }
                })?;
                Transform::Power(q)
            }
        };
        let band = r.num("check.band", || 4.0)?;
        if !(band >= 0.0 && band.is_finite()) {
            return Err(r.fail("check.band", format!("must be >= 0, got {band}")));
        }

        let window = r.list("ab.window", || vec![0.5, 4.0])?;
        let ab_window = match window[..] {
            [a, b] if a > 0.0 && a < b => (a, b),
            _ => {
                return Err(r.fail(
                    "ab.window",
                    format!("need two times 0 < a < b, got {window:?}"),
                ))
            }
        };
        let pairs = r.int("comparison.pairs")? as usize;
        if pairs == 0 {
            return Err(r.fail("comparison.pairs", "must be at least 1"));
        }

        let barrier = match r.word("barrier.kind")?.as_str() {
            "heat_kernel" => BarrierChoice::HeatKernel,
            "truncated_heat" => BarrierChoice::TruncatedHeat {
                c0: r.positive("barrier.c0", || 1.0)?,
                tau0: r.positive("barrier.tau0", || 0.5)?,
                delta0: r.positive("barrier.delta0", || 0.05)?,
            },
            _ => {
                if m == 1.0 {
                    return Err(r.fail("barrier.kind", "barenblatt needs m > 1"));
                }
                BarrierChoice::Barenblatt {
                    c: r.positive("barrier.c", || 0.25)?,
                }
            }
        };
        let centre = domain_centre(&domain);
        let c = r.list("barrier.center", || match domain {
            DomainDescriptor::Interval { .. } => vec![centre[0]],
            _ => centre.to_vec(),
        })?;
        let center = match (c.len(), dom.dim()) {
            (1, 1) => [c[0], 0.0],
            (2, 2) => [c[0], c[1]],
            _ => {
                return Err(r.fail(
                    "barrier.center",
                    format!("needs {} coordinates, got {}", dom.dim(), c.len()),
                ))
            }
        };
        let barrier_times = r.list("barrier.times", || vec![0.5, 1.0])?;
        if barrier_times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(r.fail(
                "barrier.times",
                format!("times must be positive, got {barrier_times:?}"),
            ));
        }

        let output_dir = r.path("output.dir")?.map(|p| base.join(p));
        if let Some(p) = &output_dir {
            r.resolved.insert("output.dir", p.display().to_string());
        }
        let seed = r.int("seed")?;

        if let Some((name, e)) = r.entries.iter().find(|(k, _)| !r.used.contains(*k)) {
            return Err(ConfigError::at(
                Some(e.line),
                format!("{name} does not apply to this configuration"),
            ));
        }

        Ok(Self {
            domain,
            operator,
            m,
            levels,
            initial,
            t_end,
            eta,
            cfl_safety,
            schedule,
            tol,
            source,
            transform,
            band,
            ab_window,
            pairs,
            barrier,
            center,
            barrier_times,
            output_dir,
            seed,
            resolved: r.resolved,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::at(None, format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Resolved keys, defaults included, as `key = value` lines that parse back to the same run.
    pub fn to_text(&self) -> String {
        self.resolved
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.resolved
                .iter()
                .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.clone())))
                .collect(),
        )
    }

    pub fn operator_kind(&self) -> pucci_core::Result<OperatorKind<f64>> {
        self.operator.kind()
    }

    pub fn grid(&self, h: f64) -> pucci_core::Result<Arc<Grid<f64>>> {
        Grid::build(Domain::from_descriptor(&self.domain)?, h)
    }

    pub fn initial_data(&self, grid: &Arc<Grid<f64>>) -> pucci_core::Result<InitialData<f64>> {
        let kind = match self.initial {
            InitialSpec::Distance => InitialKind::Distance,
            InitialSpec::DistancePower(q) => InitialKind::DistancePower(q),
            InitialSpec::EigenOfLaplacian => InitialKind::EigenOfLaplacian,
        };
        canonical_initial_data(grid, &kind, self.m)
    }

    pub fn flow_config(&self) -> pucci_core::Result<FlowConfig<f64>> {
        let cfg = FlowConfig::new(self.m, self.operator_kind()?, self.t_end)
            .with_schedule(self.schedule)
            .with_boundary_value(self.eta)
            .with_safety(self.cfl_safety);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn domain_centre(d: &DomainDescriptor) -> [f64; 2] {
    match d {
        DomainDescriptor::Interval { length } => [length / 2.0, 0.0],
        DomainDescriptor::Rectangle { lx, ly } => [lx / 2.0, ly / 2.0],
        DomainDescriptor::Disk { .. } => [0.0, 0.0],
        DomainDescriptor::Polygon { vertices } => {
            let n = vertices.len() as f64;
            let s = vertices
                .iter()
                .fold([0.0, 0.0], |a, v| [a[0] + v[0], a[1] + v[1]]);
            [s[0] / n, s[1] / n]
        }
    }
}
