use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::medium::MediumRealization;

/// Route by which a speed was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Eigen,
    Freidlin,
    Pde,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Eigen => "eigen",
            Method::Freidlin => "freidlin",
            Method::Pde => "pde",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Hex form of the realization id.
    pub realization: String,
    pub window: f64,
    pub h: f64,
    pub tol: f64,
}

impl Provenance {
    pub fn of(m: &MediumRealization, tol: f64) -> Self {
        Provenance {
            realization: format!("{:016x}", m.realization_id),
            window: m.window(),
            h: m.spacing(),
            tol,
        }
    }
}

/// A spreading-speed value with its error bar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub value: f64,
    pub method: Method,
    /// `p*` for the eigen route, `gamma*` for the Freidlin route.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<f64>,
    pub err: f64,
    pub provenance: Provenance,
    /// Method-specific diagnostics.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, f64>,
}
