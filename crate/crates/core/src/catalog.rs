//! Maps bundled with the library.

use crate::error::{Error, Result};
use crate::map_model::{MapDefinition, MapModel};

const BUNDLED: &[(&str, &str)] = &[
    ("z2", include_str!("../maps/z2.json")),
    ("z3", include_str!("../maps/z3.json")),
    ("chebyshev", include_str!("../maps/chebyshev.json")),
    ("lattes4", include_str!("../maps/lattes4.json")),
    ("perturbed_quadratic", include_str!("../maps/perturbed_quadratic.json")),
    ("power_p2", include_str!("../maps/power_p2.json")),
    ("skew_p2", include_str!("../maps/skew_p2.json")),
];

pub fn ids() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(id, _)| *id)
}

pub fn definition(id: &str) -> Result<MapDefinition> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(name, _)| *name == id)
        .ok_or_else(|| Error::InvalidArgument(format!("no bundled map named `{id}`")))?;
    MapDefinition::from_json_str(text)
}

pub fn load(id: &str) -> Result<MapModel> {
    MapModel::new(definition(id)?)
}
