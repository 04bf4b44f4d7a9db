//! Experiment configuration: a flat key-value text format with section
//! headers, or the same fields as a JSON object. Unknown sections, keys
//! and fields are rejected so a config cannot silently misspell a knob.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use levylab::geometry::{dist, norm, Domain};
use levylab::kernels::ProcessModel;
use serde::{Deserialize, Serialize};

pub const EXPERIMENTS: &[&str] = &[
    "levy-system",
    "accessibility",
    "martin-finite",
    "martin-infinity",
    "oscillation-finite",
    "oscillation-infinity",
    "bernstein-audit",
    "kernel-audit",
    "factorization-probe",
];

/// Ball-shaped exit target of an oscillation experiment, written
/// `cx,cy;radius;scale` in the text format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: String,
    /// Process model id (`stable:d=2:alpha=1.0`, `sbm:d=3:gamma`, ...);
    /// bernstein-audit takes a bare subordinator id instead.
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    /// Exit-target set of the levy-system check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_set: Option<String>,
    /// Domain family of the factorization probe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domains: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_dir: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_grid: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    /// Separating-sphere radius of the localized experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    /// Radial shell `lo,hi` enclosing the levy-system target set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shell: Option<Vec<f64>>,
    /// Localization parameter `a` of the factorization probe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target1: Option<TargetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target2: Option<TargetSpec>,
    pub seed: u64,
    /// Worker threads; 0 picks the machine default.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
        } else {
            parse_text(&text).with_context(|| format!("parsing {}", path.display()))
        }
    }

    /// Static diagnostics; an empty list means the config may run.
    pub fn validate(&self) -> Vec<String> {
        let mut diags = Vec::new();
        let mut diag = |msg: String| diags.push(msg);
        if !EXPERIMENTS.contains(&self.kind.as_str()) {
            diag(format!("unknown experiment kind {:?}", self.kind));
            return diags;
        }
        if self.kind == "bernstein-audit" {
            if let Err(e) =
                levylab::bernstein::CompleteBernsteinFunction::from_id(&self.model)
            {
                diag(format!("bad subordinator id: {e}"));
            }
            return diags;
        }
        let model = match ProcessModel::from_id(&self.model) {
            Ok(m) => m,
            Err(e) => {
                diag(format!("bad model id: {e}"));
                return diags;
            }
        };
        let d = model.dim();
        let dom = match &self.domain {
            Some(expr) => match Domain::parse(d, expr) {
                Ok(dom) => Some(dom),
                Err(e) => {
                    diag(format!("bad domain expression: {e}"));
                    None
                }
            },
            None => None,
        };
        let mut point = |name: &str, p: &Option<Vec<f64>>, want_inside: bool| {
            if let Some(p) = p {
                if p.len() != d {
                    diag(format!("{name} has dimension {}, model has {d}", p.len()));
                    return;
                }
                if let Some(dom) = &dom {
                    match (dom.contains(p), want_inside) {
                        (Ok(false), true) => diag(format!("probe {name} outside domain")),
                        (Ok(true), false) => diag(format!(
                            "{name} lies inside the domain; expected a boundary point"
                        )),
                        _ => {}
                    }
                }
            }
        };
        point("x", &self.x, true);
        point("x0", &self.x0, true);
        point("z0", &self.z0, false);
        if let Some(dir) = &self.probe_dir {
            if dir.len() != d {
                diags.push(format!("probe_dir has dimension {}, model has {d}", dir.len()));
            } else if norm(dir) == 0.0 {
                diags.push("probe_dir must be nonzero".into());
            }
        }
        if let Some(radii) = &self.radii {
            let inc = radii.windows(2).all(|w| w[1] > w[0]);
            let dec = radii.windows(2).all(|w| w[1] < w[0]);
            if !(inc || dec) {
                diags.push("radii must be strictly monotone".into());
            }
        }
        if self.n == Some(0) {
            diags.push("n must be positive".into());
        }
        if self.budget == Some(0) {
            diags.push("budget must be positive".into());
        }
        for name in self.missing_fields() {
            diags.push(format!("experiment {:?} needs field {name}", self.kind));
        }
        if let (Some(z0), Some(sep), Some(t)) = (&self.z0, self.separation, &self.target1) {
            if z0.len() == t.center.len() {
                let inside = dist(z0, &t.center) + t.radius <= sep;
                let outside = dist(z0, &t.center) - t.radius >= sep;
                let want_inside = self.kind == "oscillation-infinity";
                if want_inside && !inside {
                    diags.push("target1 must sit inside the separating sphere".into());
                }
                if self.kind == "oscillation-finite" && !outside {
                    diags.push("target1 must sit outside the separating sphere".into());
                }
            }
        }
        diags
    }

    fn missing_fields(&self) -> Vec<&'static str> {
        let mut missing = Vec::new();
        let mut need = |name: &'static str, present: bool| {
            if !present {
                missing.push(name);
            }
        };
        match self.kind.as_str() {
            "levy-system" => {
                need("domain", self.domain.is_some());
                need("x", self.x.is_some());
                need("a_set", self.a_set.is_some());
                need("shell", self.shell.as_ref().is_some_and(|s| s.len() == 2));
            }
            "accessibility" => {
                need("domain", self.domain.is_some());
                need("x", self.x.is_some());
            }
            "martin-finite" => {
                need("domain", self.domain.is_some());
                need("x", self.x.is_some());
                need("x0", self.x0.is_some());
                need("z0", self.z0.is_some());
                need("probe_dir", self.probe_dir.is_some());
                need("radii", self.radii.is_some());
            }
            "martin-infinity" => {
                need("domain", self.domain.is_some());
                need("x", self.x.is_some());
                need("x0", self.x0.is_some());
                need("probe_dir", self.probe_dir.is_some());
                need("radii", self.radii.is_some());
            }
            "oscillation-finite" | "oscillation-infinity" => {
                need("domain", self.domain.is_some());
                need("z0", self.z0.is_some());
                need("separation", self.separation.is_some());
                need("target1", self.target1.is_some());
                need("target2", self.target2.is_some());
                need("probe_dir", self.probe_dir.is_some());
                need("radii", self.radii.is_some());
            }
            "factorization-probe" => {
                need("domains", self.domains.is_some());
                need("z0", self.z0.is_some());
                need("separation", self.separation.is_some());
                need("a", self.a.is_some());
                need("x_grid", self.x_grid.is_some());
            }
            _ => {}
        }
        missing
    }
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| anyhow!("bad coordinate {c:?}")))
        .collect()
}

fn parse_target(s: &str) -> Result<TargetSpec> {
    let parts: Vec<&str> = s.split(';').collect();
    if parts.len() != 3 {
        bail!("target must be center;radius;scale, got {s:?}");
    }
    Ok(TargetSpec {
        center: parse_point(parts[0])?,
        radius: parts[1].trim().parse().map_err(|_| anyhow!("bad target radius"))?,
        scale: parts[2].trim().parse().map_err(|_| anyhow!("bad target scale"))?,
    })
}

/// Parses the sectioned text format. Every `key = value` line belongs to
/// the section opened by the latest `[section]` header; `#` starts a
/// comment.
pub fn parse_text(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig {
        kind: String::new(),
        model: String::new(),
        domain: None,
        a_set: None,
        domains: None,
        x: None,
        x0: None,
        z0: None,
        probe_dir: None,
        x_grid: None,
        radii: None,
        n: None,
        budget: None,
        separation: None,
        shell: None,
        a: None,
        target1: None,
        target2: None,
        seed: 0,
        workers: 0,
        out: None,
    };
    let mut section = String::new();
    let (mut saw_kind, mut saw_seed) = (false, false);
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| anyhow!("line {}: {msg}", lineno + 1);
        if let Some(head) = line.strip_prefix('[') {
            let name = head.strip_suffix(']').ok_or_else(|| at("bad section header".into()))?;
            if !["experiment", "points", "schedule", "run"].contains(&name) {
                return Err(at(format!("unknown section {name:?}")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| at("expected key = value".into()))?;
        let (key, value) = (key.trim(), value.trim());
        let err = || at(format!("unknown key {key:?} in section {section:?}"));
        match (section.as_str(), key) {
            ("experiment", "kind") => {
                cfg.kind = value.into();
                saw_kind = true;
            }
            ("experiment", "model") => cfg.model = value.into(),
            ("experiment", "domain") => cfg.domain = Some(value.into()),
            ("experiment", "a_set") => cfg.a_set = Some(value.into()),
            ("experiment", "domains") => {
                cfg.domains = Some(value.split('|').map(|s| s.trim().to_string()).collect())
            }
            ("points", "x") => cfg.x = Some(parse_point(value)?),
            ("points", "x0") => cfg.x0 = Some(parse_point(value)?),
            ("points", "z0") => cfg.z0 = Some(parse_point(value)?),
            ("points", "probe_dir") => cfg.probe_dir = Some(parse_point(value)?),
            ("points", "x_grid") => {
                cfg.x_grid = Some(
                    value
                        .split('|')
                        .map(parse_point)
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            ("schedule", "radii") => cfg.radii = Some(parse_point(value)?),
            ("schedule", "shell") => cfg.shell = Some(parse_point(value)?),
            ("schedule", "n") => cfg.n = Some(value.parse().map_err(|_| at("bad n".into()))?),
            ("schedule", "budget") => {
                cfg.budget = Some(value.parse().map_err(|_| at("bad budget".into()))?)
            }
            ("schedule", "separation") => {
                cfg.separation =
                    Some(value.parse().map_err(|_| at("bad separation".into()))?)
            }
            ("schedule", "a") => {
                cfg.a = Some(value.parse().map_err(|_| at("bad a".into()))?)
            }
            ("schedule", "target1") => cfg.target1 = Some(parse_target(value)?),
            ("schedule", "target2") => cfg.target2 = Some(parse_target(value)?),
            ("run", "seed") => {
                cfg.seed = value.parse().map_err(|_| at("bad seed".into()))?;
                saw_seed = true;
            }
            ("run", "workers") => {
                cfg.workers = value.parse().map_err(|_| at("bad workers".into()))?
            }
            ("run", "out") => cfg.out = Some(value.into()),
            _ => return Err(err()),
        }
    }
    if !saw_kind || cfg.model.is_empty() {
        bail!("config must set experiment.kind and experiment.model");
    }
    if !saw_seed {
        bail!("config must set run.seed");
    }
    Ok(cfg)
}

/// Renders a config back into the text format (round-trip partner of
/// [`parse_text`]).
#[cfg_attr(not(test), allow(dead_code))]
pub fn to_text(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let point = |p: &[f64]| p.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
    let _ = writeln!(s, "[experiment]");
    let _ = writeln!(s, "kind = {}", cfg.kind);
    let _ = writeln!(s, "model = {}", cfg.model);
    if let Some(v) = &cfg.domain {
        let _ = writeln!(s, "domain = {v}");
    }
    if let Some(v) = &cfg.a_set {
        let _ = writeln!(s, "a_set = {v}");
    }
    if let Some(v) = &cfg.domains {
        let _ = writeln!(s, "domains = {}", v.join(" | "));
    }
    let _ = writeln!(s, "\n[points]");
    for (name, p) in [("x", &cfg.x), ("x0", &cfg.x0), ("z0", &cfg.z0), ("probe_dir", &cfg.probe_dir)]
    {
        if let Some(p) = p {
            let _ = writeln!(s, "{name} = {}", point(p));
        }
    }
    if let Some(grid) = &cfg.x_grid {
        let rows: Vec<String> = grid.iter().map(|p| point(p)).collect();
        let _ = writeln!(s, "x_grid = {}", rows.join(" | "));
    }
    let _ = writeln!(s, "\n[schedule]");
    for (name, p) in [("radii", &cfg.radii), ("shell", &cfg.shell)] {
        if let Some(p) = p {
            let _ = writeln!(s, "{name} = {}", point(p));
        }
    }
    if let Some(v) = cfg.n {
        let _ = writeln!(s, "n = {v}");
    }
    if let Some(v) = cfg.budget {
        let _ = writeln!(s, "budget = {v}");
    }
    if let Some(v) = cfg.separation {
        let _ = writeln!(s, "separation = {v}");
    }
    if let Some(v) = cfg.a {
        let _ = writeln!(s, "a = {v}");
    }
    for (name, t) in [("target1", &cfg.target1), ("target2", &cfg.target2)] {
        if let Some(t) = t {
            let _ = writeln!(s, "{name} = {};{};{}", point(&t.center), t.radius, t.scale);
        }
    }
    let _ = writeln!(s, "\n[run]");
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "workers = {}", cfg.workers);
    if let Some(v) = &cfg.out {
        let _ = writeln!(s, "out = {v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
[experiment]
kind = martin-infinity
model = stable:d=2:alpha=1.0
domain = fvhorn(gamma=3)

[points]
x = 2.0,0.0
x0 = 1.5,0.0
probe_dir = 1,0

[schedule]
radii = 2.75,3.25,4.0  # geometric-ish probe ladder
n = 1000
budget = 400

[run]
seed = 7
";

    #[test]
    fn text_round_trips_through_json() {
        let cfg = parse_text(SAMPLE).unwrap();
        assert_eq!(cfg.kind, "martin-infinity");
        assert_eq!(cfg.radii.as_deref(), Some(&[2.75, 3.25, 4.0][..]));
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
        let text2 = to_text(&cfg);
        assert_eq!(parse_text(&text2).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = SAMPLE.replace("budget = 400", "budgit = 400");
        let err = parse_text(&bad).unwrap_err().to_string();
        assert!(err.contains("budgit"), "{err}");
        let mut json: serde_json::Value =
            serde_json::to_value(parse_text(SAMPLE).unwrap()).unwrap();
        json["typo"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ExperimentConfig>(json).is_err());
    }

    #[test]
    fn validate_flags_bad_points() {
        let mut cfg = parse_text(SAMPLE).unwrap();
        assert!(cfg.validate().is_empty(), "{:?}", cfg.validate());
        cfg.x = Some(vec![0.0, 0.0]);
        assert!(cfg.validate().iter().any(|d| d.contains("outside domain")));
        cfg.x = Some(vec![2.0, 0.0]);
        cfg.radii = Some(vec![1.0, 3.0, 2.0]);
        assert!(cfg.validate().iter().any(|d| d.contains("monotone")));
    }
}
