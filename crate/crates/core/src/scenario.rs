//! Reproducible scenario generation.
//!
//! APs sit at the centers of the cells of a regular grid over a square
//! region (four quadrant centers for four APs); users are placed uniformly
//! at random. Gains follow the log-distance law
//! `PL(d) = 30.6 + 36.7·log10(d)` dB with a 1 m distance floor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Matrix, Scenario, TaskSpec};

/// Name recorded in provenance blocks.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64)";

pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub num_users: usize,
    pub num_aps: usize,
    /// Side length of the square region in meters.
    pub region_m: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_w_per_hz: f64,
    pub task_bits: f64,
    pub deadline_s: f64,
    pub cycles_per_bit: f64,
    pub capacity_cps: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            num_users: 8,
            num_aps: 4,
            region_m: 200.0,
            bandwidth_hz: 1e7,
            // −174 dBm/Hz
            noise_psd_w_per_hz: 10f64.powf(-20.4),
            task_bits: 1.5e6,
            deadline_s: 0.5,
            cycles_per_bit: 1e3,
            capacity_cps: 2.5e10,
            seed: 42,
        }
    }
}

impl GenParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.num_users == 0 || self.num_aps == 0 {
            return Err(Error::InvalidValue("need at least one user and one AP".into()));
        }
        for (name, v) in [
            ("region_m", self.region_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_psd_w_per_hz", self.noise_psd_w_per_hz),
            ("task_bits", self.task_bits),
            ("deadline_s", self.deadline_s),
            ("cycles_per_bit", self.cycles_per_bit),
            ("capacity_cps", self.capacity_cps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidValue(format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

/// Linear gain at `distance_m` and whether the distance was clamped.
pub fn pathloss_gain(distance_m: f64) -> (f64, bool) {
    let clamped = !(distance_m >= MIN_DISTANCE_M);
    let d = if clamped { MIN_DISTANCE_M } else { distance_m };
    let loss_db = 30.6 + 36.7 * d.log10();
    (10f64.powf(-loss_db / 10.0), clamped)
}

/// AP coordinates: centers of a `cols × rows` grid of equal cells, where
/// `cols = ceil(sqrt(M))`.
pub fn ap_positions(num_aps: usize, region_m: f64) -> Vec<(f64, f64)> {
    let cols = (num_aps as f64).sqrt().ceil() as usize;
    let rows = num_aps.div_ceil(cols);
    let (w, h) = (region_m / cols as f64, region_m / rows as f64);
    (0..num_aps)
        .map(|k| {
            let (c, r) = (k % cols, k / cols);
            ((c as f64 + 0.5) * w, (r as f64 + 0.5) * h)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub params: GenParams,
    pub user_positions_m: Vec<(f64, f64)>,
    pub ap_positions_m: Vec<(f64, f64)>,
    /// Number of user–AP distances raised to the 1 m floor.
    pub clamped_distances: usize,
}

/// Scenario JSON as written to disk: the scenario fields plus an optional
/// provenance block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDocument {
    #[serde(flatten)]
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl ScenarioDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        doc.scenario.check()?;
        Ok(doc)
    }
}

pub fn generate(params: &GenParams) -> Result<ScenarioDocument> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let users: Vec<(f64, f64)> = (0..params.num_users)
        .map(|_| {
            let x = rng.random::<f64>() * params.region_m;
            let y = rng.random::<f64>() * params.region_m;
            (x, y)
        })
        .collect();
    let aps = ap_positions(params.num_aps, params.region_m);
    let mut clamped_distances = 0;
    let gains = Matrix::from_fn(params.num_users, params.num_aps, |i, j| {
        let d = (users[i].0 - aps[j].0).hypot(users[i].1 - aps[j].1);
        let (g, clamped) = pathloss_gain(d);
        clamped_distances += clamped as usize;
        g
    });
    let scenario = Scenario {
        num_users: params.num_users,
        num_aps: params.num_aps,
        gains,
        tasks: vec![
            TaskSpec {
                input_bits: params.task_bits,
                deadline_s: params.deadline_s,
                cycles_per_bit: params.cycles_per_bit,
            };
            params.num_users
        ],
        bandwidth_hz: params.bandwidth_hz,
        compute_capacity: vec![params.capacity_cps; params.num_aps],
        noise_psd: params.noise_psd_w_per_hz,
    };
    Ok(ScenarioDocument {
        scenario,
        provenance: Some(Provenance {
            generator: GENERATOR.into(),
            seed: params.seed,
            params: params.clone(),
            user_positions_m: users,
            ap_positions_m: aps,
            clamped_distances,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pathloss_examples() {
        let (g1, c1) = pathloss_gain(1.0);
        assert_relative_eq!(g1, 10f64.powf(-3.06), max_relative = 1e-14);
        assert!(!c1);
        assert_relative_eq!(pathloss_gain(100.0).0, 10f64.powf(-10.4), max_relative = 1e-13);
        assert_relative_eq!(
            pathloss_gain(10.0).0 / pathloss_gain(100.0).0,
            10f64.powf(3.67),
            max_relative = 1e-12
        );
        let (g, clamped) = pathloss_gain(0.2);
        assert!(clamped);
        assert_eq!(g, g1);
    }

    #[test]
    fn four_aps_on_quadrant_centers() {
        assert_eq!(
            ap_positions(4, 200.0),
            vec![(50.0, 50.0), (150.0, 50.0), (50.0, 150.0), (150.0, 150.0)]
        );
        assert_eq!(ap_positions(1, 200.0), vec![(100.0, 100.0)]);
    }

    #[test]
    fn default_seed_42() {
        let doc = generate(&GenParams::default()).unwrap();
        let s = &doc.scenario;
        assert_eq!((s.num_users, s.num_aps), (8, 4));
        let g_max = 10f64.powf(-3.06);
        assert!(s.gains.as_slice().iter().all(|&g| g > 0.0 && g <= g_max));
        s.check().unwrap();
        // equal split: 8 · (1.5e9/4) / 0.5 = 6e9 < 2.5e10 per AP
        let demand: f64 = s.tasks.iter().map(|t| t.required_cycles() / 4.0 / t.deadline_s).sum();
        assert!(demand < s.compute_capacity[0]);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&GenParams::with_seed(7)).unwrap().to_json().unwrap();
        let b = generate(&GenParams::with_seed(7)).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let c = generate(&GenParams::with_seed(8)).unwrap().to_json().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn json_roundtrip_within_tolerance() {
        let doc = generate(&GenParams::default()).unwrap();
        let back = ScenarioDocument::from_json(&doc.to_json().unwrap()).unwrap();
        for (a, b) in doc.scenario.gains.as_slice().iter().zip(back.scenario.gains.as_slice()) {
            assert!(((a - b) / a).abs() <= 1e-12);
        }
        assert_eq!(back.scenario, doc.scenario);
        assert_eq!(back.provenance.unwrap().seed, 42);
    }

    #[test]
    fn relabeling_users_permutes_gain_rows() {
        let doc = generate(&GenParams::default()).unwrap();
        let prov = doc.provenance.unwrap();
        let aps = prov.ap_positions_m;
        let mut users = prov.user_positions_m.clone();
        users.reverse();
        let n = users.len();
        for (i, u) in users.iter().enumerate() {
            for (j, a) in aps.iter().enumerate() {
                let g = pathloss_gain((u.0 - a.0).hypot(u.1 - a.1)).0;
                assert_eq!(g, doc.scenario.gains[(n - 1 - i, j)]);
            }
        }
    }

    #[test]
    fn single_pair_scenario() {
        let doc = generate(&GenParams {
            num_users: 1,
            num_aps: 1,
            ..GenParams::default()
        })
        .unwrap();
        assert_eq!(doc.scenario.gains.shape(), (1, 1));
    }
}
