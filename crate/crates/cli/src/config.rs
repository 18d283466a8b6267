//! Experiment configuration: a TOML key tree with `include = [...]` composition.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::{Table, Value};

use parlab_core::geometry::{build_grid, smooth_step, Domain, SpaceTimeGrid, Vec2};
use parlab_core::laws::{builtin_law, builtin_laws, CoefficientLaw, ConvectionLaw, DiffusionLaw};
use parlab_core::pde::BoundaryTrace;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Later tables override earlier ones key by key; nested tables merge recursively.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn load_tree(path: &Path, stack: &mut Vec<PathBuf>) -> Result<Table, ConfigError> {
    let canon = path
        .canonicalize()
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    if stack.contains(&canon) {
        return err(format!("include cycle through {}", path.display()));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let mut table: Table = text
        .parse()
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let includes = match table.remove("include") {
        None => vec![],
        Some(Value::Array(a)) => a,
        Some(Value::String(s)) => vec![Value::String(s)],
        Some(_) => {
            return err(format!(
                "{}: key `include` must be a list of paths",
                path.display()
            ))
        }
    };
    stack.push(canon);
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out = Table::new();
    for inc in includes {
        let Value::String(p) = inc else {
            return err(format!(
                "{}: key `include` must be a list of paths",
                path.display()
            ));
        };
        merge(&mut out, load_tree(&dir.join(p), stack)?);
    }
    stack.pop();
    merge(&mut out, table);
    Ok(out)
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Forward,
    Dtn,
    Linearize,
    GoVerify,
    Density,
    Discriminate,
    ReconstructA,
    RecoverB,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainSpec {
    UnitSquare,
    Disc { center: Vec2, radius: f64 },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "unit_square")]
    pub domain: DomainSpec,
    #[serde(default = "one")]
    pub t_final: f64,
    pub nt: usize,
    pub nx: usize,
}

fn unit_square() -> DomainSpec {
    DomainSpec::UnitSquare
}

fn one() -> f64 {
    1.0
}

impl GridSpec {
    pub fn build(&self) -> parlab_core::error::Result<SpaceTimeGrid> {
        let domain = match &self.domain {
            DomainSpec::UnitSquare => Domain::unit_square(),
            DomainSpec::Disc { center, radius } => Domain::disc(*center, *radius)?,
        };
        build_grid(domain, self.t_final, self.nt, self.nx)
    }
}

/// Either a builtin name or an explicit diffusion/convection pair.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawBlock {
    pub builtin: Option<String>,
    pub a: Option<DiffusionLaw>,
    pub convection: Option<ConvectionLaw>,
}

/// g = amplitude * s((t - onset)/ramp) * cos(pi f t) * cos(pi kx x) * cos(pi ky y), s a smooth step.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_onset")]
    pub onset: f64,
    #[serde(default = "default_ramp")]
    pub ramp: f64,
    #[serde(default)]
    pub frequency: f64,
    #[serde(default)]
    pub kx: f64,
    #[serde(default)]
    pub ky: f64,
}

fn default_onset() -> f64 {
    0.05
}

fn default_ramp() -> f64 {
    0.1
}

impl SourceSpec {
    pub fn trace(&self, grid: &SpaceTimeGrid) -> BoundaryTrace {
        use std::f64::consts::PI;
        let s = self.clone();
        BoundaryTrace::from_fn(grid, move |t, x| {
            if s.amplitude == 0.0 {
                return 0.0;
            }
            s.amplitude
                * smooth_step((t - s.onset) / s.ramp)
                * (PI * s.frequency * t).cos()
                * (PI * s.kx * x[0]).cos()
                * (PI * s.ky * x[1]).cos()
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub kind: Kind,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    #[serde(default)]
    pub laws: BTreeMap<String, LawBlock>,
    pub law: String,
    pub law2: Option<String>,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub params: Table,
}

#[derive(Debug)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub output: PathBuf,
    pub seed: u64,
    pub grid: GridSpec,
    pub lambda: f64,
    pub law: CoefficientLaw,
    pub law2: Option<CoefficientLaw>,
    pub params: Table,
}

fn resolve(
    name: &str,
    key: &str,
    laws: &BTreeMap<String, LawBlock>,
) -> Result<CoefficientLaw, ConfigError> {
    if let Some(b) = laws.get(name) {
        return match (&b.builtin, &b.a) {
            (Some(_), _) if b.convection.is_some() || b.a.is_some() => err(format!(
                "laws.{name}: give either `builtin` or `a`/`convection`, not both"
            )),
            (Some(n), _) => builtin_law(n).ok_or_else(|| {
                ConfigError(format!(
                    "laws.{name}.builtin: unknown law \"{n}\"; builtins: {}",
                    builtin_names()
                ))
            }),
            (None, Some(a)) => Ok(CoefficientLaw::new(
                name,
                a.clone(),
                b.convection.clone().unwrap_or_else(ConvectionLaw::zero),
            )),
            (None, None) => err(format!("laws.{name}: needs `builtin` or `a`")),
        };
    }
    builtin_law(name).ok_or_else(|| {
        let defined: Vec<&str> = laws.keys().map(String::as_str).collect();
        ConfigError(format!(
            "{key}: unknown law \"{name}\"; defined: [{}], builtins: {}",
            defined.join(", "),
            builtin_names()
        ))
    })
}

fn builtin_names() -> String {
    builtin_laws()
        .iter()
        .map(|(n, _, _)| *n)
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let tree = load_tree(path, &mut vec![])?;
    let raw: RawConfig = Value::Table(tree)
        .try_into()
        .map_err(|e: toml::de::Error| {
            ConfigError(format!("{}: {}", path.display(), e.message()))
        })?;
    from_raw(raw)
}

pub fn from_raw(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let law = resolve(&raw.law, "law", &raw.laws)?;
    let law2 = raw
        .law2
        .as_deref()
        .map(|n| resolve(n, "law2", &raw.laws))
        .transpose()?;
    if matches!(raw.kind, Kind::Discriminate | Kind::RecoverB) && law2.is_none() {
        return err(format!("law2: required for kind {:?}", raw.kind));
    }
    if raw.grid.nx < 2 || raw.grid.nt < 2 || raw.grid.t_final.is_nan() || raw.grid.t_final <= 0.0 {
        return err("grid: need nx >= 2, nt >= 2 and t_final > 0");
    }
    Ok(ExperimentConfig {
        kind: raw.kind,
        output: raw.output,
        seed: raw.seed,
        grid: raw.grid,
        lambda: raw.lambda,
        law,
        law2,
        params: raw.params,
    })
}

/// Typed view of the kind-specific `[params]` table.
pub fn params<T: serde::de::DeserializeOwned>(table: &Table) -> Result<T, ConfigError> {
    Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError(format!("params: {}", e.message())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn includes_merge_with_override() {
        let d = tempfile::tempdir().unwrap();
        write(
            d.path(),
            "grid.toml",
            "[grid]\nnt = 8\nnx = 8\nt_final = 2.0\n",
        );
        let p = write(
            d.path(),
            "main.toml",
            "include = [\"grid.toml\"]\nkind = \"forward\"\noutput = \"o\"\nlaw = \"heat\"\n[grid]\nnx = 16\n",
        );
        let c = load(&p).unwrap();
        assert_eq!((c.grid.nt, c.grid.nx, c.grid.t_final), (8, 16, 2.0));
    }

    #[test]
    fn cycles_and_unknown_laws_are_reported() {
        let d = tempfile::tempdir().unwrap();
        let a = write(d.path(), "a.toml", "include = [\"b.toml\"]\n");
        write(d.path(), "b.toml", "include = [\"a.toml\"]\n");
        assert!(load(&a).unwrap_err().0.contains("cycle"));
        let p = write(
            d.path(),
            "c.toml",
            "kind = \"forward\"\noutput = \"o\"\nlaw = \"nope\"\n[grid]\nnt = 4\nnx = 4\n",
        );
        let e = load(&p).unwrap_err().0;
        assert!(e.starts_with("law: unknown law \"nope\""), "{e}");
    }

    #[test]
    fn explicit_law_block() {
        let d = tempfile::tempdir().unwrap();
        let p = write(
            d.path(),
            "c.toml",
            "kind = \"forward\"\noutput = \"o\"\nlaw = \"mine\"\n[grid]\nnt = 4\nnx = 4\n\
             [laws.mine]\na = { kind = \"constant\", value = 2.0 }\n",
        );
        let c = load(&p).unwrap();
        assert_eq!(c.law.a.value(0.3, 1.0), 2.0);
        let q = write(
            d.path(),
            "d.toml",
            "kind = \"forward\"\noutput = \"o\"\nlaw = \"x\"\n[grid]\nnt = 4\nnx = 4\n\
             [laws.x]\nbuiltin = \"heat\"\na = { kind = \"constant\", value = 2.0 }\n",
        );
        assert!(load(&q).unwrap_err().0.contains("laws.x"));
    }
}
