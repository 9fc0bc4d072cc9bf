use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Electronic {
    G,
    E,
}

/// Radiative pathway; P1 carries the dominant ZPL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pathway {
    P1,
    P2,
}

impl Pathway {
    pub fn other(self) -> Self {
        match self {
            Pathway::P1 => Pathway::P2,
            Pathway::P2 => Pathway::P1,
        }
    }
}

/// Occupied sublevel of the metastable shelf, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shelf {
    None,
    SUp,
    SDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub electronic: Electronic,
    pub pathway: Pathway,
    pub shelf: Shelf,
    /// Spectral offset of the active line from its nominal center, GHz.
    pub detuning_ghz: f64,
}

impl EnvState {
    pub fn new(pathway: Pathway, detuning_ghz: f64) -> Self {
        Self {
            electronic: Electronic::G,
            pathway,
            shelf: Shelf::None,
            detuning_ghz,
        }
    }

    pub fn is_shelved(&self) -> bool {
        self.shelf != Shelf::None
    }

    /// The electronic level is undefined while shelved and must be G.
    pub fn is_consistent(&self) -> bool {
        !(self.is_shelved() && self.electronic == Electronic::E)
    }
}
