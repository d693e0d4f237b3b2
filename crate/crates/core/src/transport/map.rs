use serde::{Deserialize, Serialize};

use crate::c_convexity::DiscretePotential;
use crate::geometry::ProductPoint;

/// Image of a source point: the lowest active atom, with a tie flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapImage {
    pub point: ProductPoint,
    pub index: usize,
    pub tie: bool,
}

pub fn transport_map(potential: &DiscretePotential, x: &ProductPoint) -> MapImage {
    let (index, tie) = potential.argmax(x);
    MapImage {
        point: potential.atoms[index].clone(),
        index,
        tie,
    }
}
