//! Plain-text scene configuration.
//!
//! Grammar, one item per line:
//!
//! ```text
//! line    := blank | comment | header | entry
//! comment := '#' any*
//! header  := '[' name ']'
//! entry   := key '=' value
//! value   := token ((',' | ' ')+ token)*
//! ```
//!
//! Entries before the first header belong to an unnamed top-level section.
//! A scene file uses these sections; one file may carry all of them:
//!
//! ```text
//! [view]                 # repeated, one block per camera, in order
//! fx = 1266.4
//! fy = 1266.4
//! cx = 816.2
//! cy = 491.5
//! rot = 1 0 0  0 1 0  0 0 1   # camera-to-ego rotation, row-major
//! trans = 0 0 1.5             # camera origin in the ego frame, meters
//!
//! [frustum]
//! feat_h = 16
//! feat_w = 44
//! downsample = 16
//! depth_start = 1
//! depth_end = 60
//! depth_step = 1
//!
//! [grid]
//! lower = -51.2 -51.2 -5
//! voxel_size = 0.8 0.8 8
//! dims = 128 128 1
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::ConfigError;
use crate::geometry::{CameraRig, CameraView, FrustumSpec, VoxelGridSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    /// Empty for the top-level section.
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    fn require(&self, key: &str) -> Result<&Entry, ConfigError> {
        self.entry(key).ok_or_else(|| ConfigError::MissingKey {
            section: self.name.clone(),
            key: key.to_string(),
        })
    }

    /// Parses a single-token value.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let e = self.require(key)?;
        e.value.trim().parse().map_err(|_| ConfigError::Syntax {
            line: e.line,
            message: format!("cannot parse `{}` for `{key}`", e.value.trim()),
        })
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.entry(key) {
            Some(_) => self.get(key),
            None => Ok(default),
        }
    }

    /// Parses a list value with exactly `N` tokens.
    pub fn get_array<T: FromStr + Copy + Default, const N: usize>(&self, key: &str) -> Result<[T; N], ConfigError> {
        let e = self.require(key)?;
        let values = tokens(&e.value)
            .map(|t| t.parse::<T>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| ConfigError::Syntax {
                line: e.line,
                message: format!("cannot parse `{}` for `{key}`", e.value.trim()),
            })?;
        if values.len() != N {
            return Err(ConfigError::Syntax {
                line: e.line,
                message: format!("`{key}` needs {N} values, found {}", values.len()),
            });
        }
        let mut out = [T::default(); N];
        out.copy_from_slice(&values);
        Ok(out)
    }

    /// Parses a list value of any length.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError> {
        let e = self.require(key)?;
        tokens(&e.value)
            .map(|t| {
                t.parse::<T>().map_err(|_| ConfigError::Syntax {
                    line: e.line,
                    message: format!("cannot parse `{t}` in `{key}`"),
                })
            })
            .collect()
    }

    /// Rejects keys outside `allowed`.
    pub fn expect_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        match self.entries.iter().find(|e| !allowed.contains(&e.key.as_str())) {
            Some(e) => Err(ConfigError::Syntax {
                line: e.line,
                message: format!("unknown key `{}` in [{}]", e.key, self.name),
            }),
            None => Ok(()),
        }
    }
}

fn tokens(value: &str) -> impl Iterator<Item = &str> {
    value.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections = vec![Section {
            name: String::new(),
            line: 0,
            entries: Vec::new(),
        }];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').map(str::trim).filter(|n| {
                    !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
                });
                let Some(name) = name else {
                    return Err(ConfigError::Syntax {
                        line,
                        message: format!("malformed section header `{content}`"),
                    });
                };
                sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("expected `key = value`, found `{content}`"),
                });
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("bad key `{key}`"),
                });
            }
            sections
                .last_mut()
                .expect("top-level section always present")
                .entries
                .push(Entry {
                    key: key.to_string(),
                    value: value.trim().to_string(),
                    line,
                });
        }
        Ok(Self { sections })
    }

    pub fn top_level(&self) -> &Section {
        &self.sections[0]
    }

    pub fn sections_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }

    /// The single section called `name`; a repeated section is an error.
    pub fn unique(&self, name: &'static str) -> Result<&Section, ConfigError> {
        let mut found = self.sections_named(name);
        let first = found.next().ok_or(ConfigError::MissingSection(name))?;
        if let Some(dup) = found.next() {
            return Err(ConfigError::Syntax {
                line: dup.line,
                message: format!("duplicate [{name}] section"),
            });
        }
        Ok(first)
    }
}

const VIEW_KEYS: [&str; 6] = ["fx", "fy", "cx", "cy", "rot", "trans"];
const FRUSTUM_KEYS: [&str; 6] = ["feat_h", "feat_w", "downsample", "depth_start", "depth_end", "depth_step"];
const GRID_KEYS: [&str; 3] = ["lower", "voxel_size", "dims"];

pub fn rig_from_document(doc: &Document) -> Result<CameraRig, ConfigError> {
    let mut views = Vec::new();
    for s in doc.sections_named("view") {
        s.expect_keys(&VIEW_KEYS)?;
        let r: [f64; 9] = s.get_array("rot")?;
        views.push(CameraView {
            fx: s.get("fx")?,
            fy: s.get("fy")?,
            cx: s.get("cx")?,
            cy: s.get("cy")?,
            rot: [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]],
            trans: s.get_array("trans")?,
        });
    }
    if views.is_empty() {
        return Err(ConfigError::MissingSection("view"));
    }
    Ok(CameraRig::new(views)?)
}

pub fn frustum_from_document(doc: &Document) -> Result<FrustumSpec, ConfigError> {
    let s = doc.unique("frustum")?;
    s.expect_keys(&FRUSTUM_KEYS)?;
    let spec = FrustumSpec {
        feat_h: s.get("feat_h")?,
        feat_w: s.get("feat_w")?,
        downsample: s.get("downsample")?,
        depth_start: s.get("depth_start")?,
        depth_end: s.get("depth_end")?,
        depth_step: s.get("depth_step")?,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn grid_from_document(doc: &Document) -> Result<VoxelGridSpec, ConfigError> {
    let s = doc.unique("grid")?;
    s.expect_keys(&GRID_KEYS)?;
    let grid = VoxelGridSpec {
        lower: s.get_array("lower")?,
        voxel_size: s.get_array("voxel_size")?,
        dims: s.get_array("dims")?,
    };
    grid.validate()?;
    Ok(grid)
}

pub fn parse_rig(text: &str) -> Result<CameraRig, ConfigError> {
    rig_from_document(&Document::parse(text)?)
}

pub fn parse_frustum(text: &str) -> Result<FrustumSpec, ConfigError> {
    frustum_from_document(&Document::parse(text)?)
}

pub fn parse_grid(text: &str) -> Result<VoxelGridSpec, ConfigError> {
    grid_from_document(&Document::parse(text)?)
}

fn join<T: std::fmt::Display>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Renders whichever parts are given as one scene file. Floats use the
/// shortest representation that parses back to the same bits.
pub fn write_scene(
    rig: Option<&CameraRig>,
    frustum: Option<&FrustumSpec>,
    grid: Option<&VoxelGridSpec>,
) -> String {
    let mut out = String::new();
    if let Some(rig) = rig {
        for (i, v) in rig.views().iter().enumerate() {
            let rot: Vec<f64> = v.rot.iter().flatten().copied().collect();
            let _ = writeln!(out, "[view]  # {i}");
            let _ = writeln!(out, "fx = {}", v.fx);
            let _ = writeln!(out, "fy = {}", v.fy);
            let _ = writeln!(out, "cx = {}", v.cx);
            let _ = writeln!(out, "cy = {}", v.cy);
            let _ = writeln!(out, "rot = {}", join(&rot));
            let _ = writeln!(out, "trans = {}", join(&v.trans));
            out.push('\n');
        }
    }
    if let Some(f) = frustum {
        let _ = writeln!(out, "[frustum]");
        let _ = writeln!(out, "feat_h = {}", f.feat_h);
        let _ = writeln!(out, "feat_w = {}", f.feat_w);
        let _ = writeln!(out, "downsample = {}", f.downsample);
        let _ = writeln!(out, "depth_start = {}", f.depth_start);
        let _ = writeln!(out, "depth_end = {}", f.depth_end);
        let _ = writeln!(out, "depth_step = {}", f.depth_step);
        out.push('\n');
    }
    if let Some(g) = grid {
        let _ = writeln!(out, "[grid]");
        let _ = writeln!(out, "lower = {}", join(&g.lower));
        let _ = writeln!(out, "voxel_size = {}", join(&g.voxel_size));
        let _ = writeln!(out, "dims = {}", join(&g.dims));
    }
    out
}
