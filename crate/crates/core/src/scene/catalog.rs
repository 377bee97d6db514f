//! Object catalog: primitive proxies for everyday graspable objects.
//!
//! File format (TOML), one `[[object]]` table per entry:
//!
//! ```toml
//! [[object]]
//! id = "tennis_ball"
//! shape = "sphere"        # sphere | box | cylinder
//! dims = [0.033]          # sphere: [radius]; box: [x, y, z]; cylinder: [radius, height]
//! mass = 0.058            # kg
//! split = "seen"          # seen | unseen
//! category = "ball"       # ball | long_box | square_box | bottle | cup | elongated
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::Vec3;

pub const CATALOG_SIZE: usize = 43;
pub const SEEN_COUNT: usize = 30;
pub const UNSEEN_COUNT: usize = 13;

const DEFAULT_CATALOG: &str = include_str!("../../assets/catalog.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    /// Full side lengths along the object's local x, y, z.
    Box { extents: [f64; 3] },
    /// Axis along local z.
    Cylinder { radius: f64, height: f64 },
}

impl Shape {
    pub fn half_extents(&self) -> Vec3<f64> {
        match *self {
            Shape::Sphere { radius } => Vec3::new(radius, radius, radius),
            Shape::Box { extents } => Vec3::new(extents[0] / 2.0, extents[1] / 2.0, extents[2] / 2.0),
            Shape::Cylinder { radius, height } => Vec3::new(radius, radius, height / 2.0),
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            _ => self.half_extents().norm(),
        }
    }

    /// Height of the object centre above a supporting surface.
    pub fn rest_height(&self) -> f64 {
        self.half_extents().z
    }

    pub fn volume(&self) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Shape::Sphere { radius } => 4.0 / 3.0 * PI * radius.powi(3),
            Shape::Box { extents } => extents.iter().product(),
            Shape::Cylinder { radius, height } => PI * radius * radius * height,
        }
    }

    pub fn surface_area(&self) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Shape::Sphere { radius } => 4.0 * PI * radius * radius,
            Shape::Box { extents: [a, b, c] } => 2.0 * (a * b + b * c + a * c),
            Shape::Cylinder { radius, height } => 2.0 * PI * radius * (radius + height),
        }
    }

    fn dims(&self) -> Vec<f64> {
        match *self {
            Shape::Sphere { radius } => vec![radius],
            Shape::Box { extents } => extents.to_vec(),
            Shape::Cylinder { radius, height } => vec![radius, height],
        }
    }

    /// Tall objects stand at least 1.5x higher than they are wide.
    pub fn is_tall(&self) -> bool {
        let h = self.half_extents();
        h.z >= 1.5 * h.x.max(h.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Seen,
    Unseen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Ball,
    LongBox,
    SquareBox,
    Bottle,
    Cup,
    Elongated,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Seen => "seen",
            Split::Unseen => "unseen",
        }
    }
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Ball => "ball",
            Category::LongBox => "long_box",
            Category::SquareBox => "square_box",
            Category::Bottle => "bottle",
            Category::Cup => "cup",
            Category::Elongated => "elongated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub shape: Shape,
    pub mass: f64,
    pub split: Split,
    pub category: Category,
}

#[derive(Deserialize)]
struct CatalogFile {
    #[serde(default)]
    object: Vec<RawEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    id: String,
    shape: String,
    dims: Vec<f64>,
    mass: f64,
    split: Split,
    category: Category,
}

impl RawEntry {
    fn into_spec(self) -> Result<ObjectSpec> {
        let bad = |reason: String| Error::InvalidCatalog {
            entry: self.id.clone(),
            reason,
        };
        let expect = |n: usize| {
            if self.dims.len() == n {
                Ok(())
            } else {
                Err(bad(format!("shape `{}` needs {n} dims, got {}", self.shape, self.dims.len())))
            }
        };
        let shape = match self.shape.as_str() {
            "sphere" => {
                expect(1)?;
                Shape::Sphere { radius: self.dims[0] }
            }
            "box" => {
                expect(3)?;
                Shape::Box {
                    extents: [self.dims[0], self.dims[1], self.dims[2]],
                }
            }
            "cylinder" => {
                expect(2)?;
                Shape::Cylinder {
                    radius: self.dims[0],
                    height: self.dims[1],
                }
            }
            other => return Err(bad(format!("unknown shape `{other}`"))),
        };
        if shape.dims().iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(bad("dims must be positive".into()));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(bad("mass must be positive".into()));
        }
        Ok(ObjectSpec {
            id: self.id,
            shape,
            mass: self.mass,
            split: self.split,
            category: self.category,
        })
    }
}

/// Parses and validates catalog text.
pub fn parse_catalog(text: &str) -> Result<Vec<ObjectSpec>> {
    let file: CatalogFile = toml::from_str(text).map_err(|e| Error::InvalidCatalog {
        entry: "<file>".into(),
        reason: e.to_string(),
    })?;
    let specs = file
        .object
        .into_iter()
        .map(RawEntry::into_spec)
        .collect::<Result<Vec<_>>>()?;
    validate_catalog(&specs)?;
    Ok(specs)
}

fn validate_catalog(specs: &[ObjectSpec]) -> Result<()> {
    let whole = |reason: String| Error::InvalidCatalog {
        entry: "<catalog>".into(),
        reason,
    };
    if specs.len() != CATALOG_SIZE {
        return Err(whole(format!("expected {CATALOG_SIZE} objects, found {}", specs.len())));
    }
    let mut ids: Vec<&str> = specs.iter().map(|s| s.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidCatalog {
            entry: w[0].to_string(),
            reason: "duplicate id".into(),
        });
    }
    for (split, want) in [(Split::Seen, SEEN_COUNT), (Split::Unseen, UNSEEN_COUNT)] {
        let members: Vec<_> = specs.iter().filter(|s| s.split == split).collect();
        if members.len() != want {
            return Err(whole(format!("expected {want} {split:?} objects, found {}", members.len())));
        }
        let tall = members.iter().filter(|s| s.shape.is_tall()).count();
        if tall == 0 || tall == members.len() {
            return Err(whole(format!(
                "{split:?} split needs both compact and tall objects"
            )));
        }
    }
    Ok(())
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Vec<ObjectSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_catalog(&text)
}

/// The bundled 43-object catalog.
pub fn default_catalog() -> Vec<ObjectSpec> {
    parse_catalog(DEFAULT_CATALOG).expect("bundled catalog is valid")
}

pub fn find<'a>(catalog: &'a [ObjectSpec], id: &str) -> Result<&'a ObjectSpec> {
    catalog
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Error::NotFound(format!("object `{id}`")))
}
