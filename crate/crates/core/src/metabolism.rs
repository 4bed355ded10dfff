//! Intracellular energy metabolism: a four-reaction mass-action network
//! integrated with classical RK4.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::SupplyConfig;
use crate::error::{Error, Result};
use crate::params::MetabolicParams;

/// Species amounts in model units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetabolicState {
    pub glu: f64,
    pub nad_plus: f64,
    pub nadh: f64,
    pub pyr: f64,
    pub lac: f64,
    pub o2: f64,
    pub atp: f64,
}

pub const SPECIES: [&str; 7] = ["Glu", "NAD+", "NADH", "Pyr", "Lac", "O2", "ATP"];

impl MetabolicState {
    /// Fresh cell: supplied species at their clamp values, NAD pool fully
    /// oxidised, no pyruvate or lactate.
    pub fn initial(supply: &SupplyConfig, atp: f64) -> Self {
        Self {
            glu: supply.glucose,
            nad_plus: supply.nad_total,
            nadh: 0.0,
            pyr: 0.0,
            lac: 0.0,
            o2: supply.oxygen,
            atp,
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.glu,
            self.nad_plus,
            self.nadh,
            self.pyr,
            self.lac,
            self.o2,
            self.atp,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            glu: a[0],
            nad_plus: a[1],
            nadh: a[2],
            pyr: a[3],
            lac: a[4],
            o2: a[5],
            atp: a[6],
        }
    }

    pub fn nad_total(&self) -> f64 {
        self.nad_plus + self.nadh
    }

    fn axpy(&self, a: f64, d: &MetabolicState) -> MetabolicState {
        let x = self.to_array();
        let y = d.to_array();
        MetabolicState::from_array(std::array::from_fn(|i| x[i] + a * y[i]))
    }

    /// Bit pattern of the state, for exact de-duplication.
    pub(crate) fn bits(&self) -> [u64; 7] {
        self.to_array().map(f64::to_bits)
    }
}

/// Instantaneous reaction fluxes (amount/min).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReactionRates {
    pub r_glyc: f64,
    pub r_aer: f64,
    pub r_ferm: f64,
    pub r_cons: f64,
}

/// Mass-action fluxes with orders equal to the reactant stoichiometry.
///
/// Oxygen enters the aerobic lump at first order.
pub fn reaction_rates(s: &MetabolicState, k: &MetabolicParams) -> ReactionRates {
    ReactionRates {
        r_glyc: k.k_glu * s.glu * s.nad_plus * s.nad_plus,
        r_aer: k.k_aer * s.pyr * s.nadh * s.o2,
        r_ferm: k.k_ana * s.pyr * s.nadh,
        r_cons: k.k_ene * s.atp,
    }
}

/// Change of every species produced by `rates` acting for `dt`.
pub fn apply_stoichiometry(rates: &ReactionRates, dt: f64) -> MetabolicState {
    let ReactionRates {
        r_glyc: g,
        r_aer: a,
        r_ferm: f,
        r_cons: c,
    } = *rates;
    MetabolicState {
        glu: -g * dt,
        nad_plus: (-2.0 * g + a + f) * dt,
        nadh: (2.0 * g - a - f) * dt,
        pyr: (2.0 * g - a - f) * dt,
        lac: f * dt,
        o2: -3.0 * a * dt,
        atp: (2.0 * g + 17.0 * a - c) * dt,
    }
}

fn derivative(s: &MetabolicState, k: &MetabolicParams) -> MetabolicState {
    apply_stoichiometry(&reaction_rates(s, k), 1.0)
}

/// One classical RK4 step of length `h` without clamping.
pub fn rk4_step(s: &MetabolicState, k: &MetabolicParams, h: f64) -> MetabolicState {
    let k1 = derivative(s, k);
    let k2 = derivative(&s.axpy(0.5 * h, &k1), k);
    let k3 = derivative(&s.axpy(0.5 * h, &k2), k);
    let k4 = derivative(&s.axpy(h, &k3), k);
    let x = s.to_array();
    let (a, b, c, d) = (k1.to_array(), k2.to_array(), k3.to_array(), k4.to_array());
    MetabolicState::from_array(std::array::from_fn(|i| {
        x[i] + h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i])
    }))
}

/// Clamp values for the continuously supplied species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamp {
    pub glucose: f64,
    pub oxygen: f64,
}

impl From<&SupplyConfig> for Clamp {
    fn from(s: &SupplyConfig) -> Self {
        Self {
            glucose: s.glucose,
            oxygen: s.oxygen,
        }
    }
}

/// Advances `s` by `dt` in `ceil(dt / substep)` equal RK4 substeps. After
/// each substep glucose and oxygen are reset to the clamp (when given) and
/// negative amounts are floored at zero.
pub fn integrate(
    s: &MetabolicState,
    k: &MetabolicParams,
    dt: f64,
    substep: f64,
    clamp: Option<Clamp>,
) -> Result<MetabolicState> {
    if !(dt > 0.0) {
        return Err(Error::domain("dt", dt, "(0, inf)"));
    }
    if !(substep > 0.0) {
        return Err(Error::domain("substep", substep, "(0, inf)"));
    }
    let n = (dt / substep - 1e-9).ceil().max(1.0) as usize;
    let h = dt / n as f64;
    let mut cur = *s;
    for _ in 0..n {
        let mut next = rk4_step(&cur, k, h).to_array();
        for (i, v) in next.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::Integration {
                    species: SPECIES[i],
                });
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        cur = MetabolicState::from_array(next);
        if let Some(c) = clamp {
            cur.glu = c.glucose;
            cur.o2 = c.oxygen;
        }
    }
    Ok(cur)
}

/// ATP level at which production balances consumption when glucose and
/// oxygen are clamped and NADH is recycled fast enough that the NAD pool
/// stays oxidised. Diagnostic only: used to reason about parameter regimes.
pub fn nominal_atp_steady_state(k: &MetabolicParams, supply: &SupplyConfig) -> f64 {
    let glyc = k.k_glu * supply.glucose * supply.nad_total * supply.nad_total;
    let recycle = k.k_aer * supply.oxygen + k.k_ana;
    let aerobic_share = if recycle > 0.0 {
        k.k_aer * supply.oxygen / recycle
    } else {
        0.0
    };
    // Two ATP from glycolysis, 17 per pyruvate through the aerobic lump.
    (2.0 + 2.0 * 17.0 * aerobic_share) * glyc / k.k_ene
}

/// Human-readable stoichiometry table of the network.
pub fn stoichiometry_table() -> String {
    let rows: [(&str, &str, [i32; 7]); 4] = [
        ("glycolysis", "k_glu*Glu*NAD+^2", [-1, -2, 2, 2, 0, 0, 2]),
        ("aerobic", "k_aer*Pyr*NADH*O2", [0, 1, -1, -1, 0, -3, 17]),
        ("fermentation", "k_ana*Pyr*NADH", [0, 1, -1, -1, 1, 0, 0]),
        ("consumption", "k_ene*ATP", [0, 0, 0, 0, 0, 0, -1]),
    ];
    let mut out = String::new();
    let _ = write!(out, "{:<13} {:<20}", "reaction", "rate");
    for s in SPECIES {
        let _ = write!(out, " {s:>5}");
    }
    out.push('\n');
    for (name, law, coeffs) in rows {
        let _ = write!(out, "{name:<13} {law:<20}");
        for c in coeffs {
            let _ = write!(out, " {c:>5}");
        }
        out.push('\n');
    }
    out
}
