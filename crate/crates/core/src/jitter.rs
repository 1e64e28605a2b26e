//! Clock-jitter scenario: a uniform sampling grid perturbed by truncated
//! Gaussian jitter, random polynomial coefficients, noiseless observations.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::{self as numfmt};
use crate::vandermonde::{
    synthesize_observations, CoefficientMatrix, ObservationMatrix, SampleLocations,
};

const JITTER_STREAM: u64 = 1;
const COEFFICIENT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterScenario {
    #[serde(rename = "N")]
    pub n: usize,
    pub domain_lo: f64,
    pub domain_hi: f64,
    /// Jitter severity; displacements are bounded by `delta * T / 2`.
    pub delta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub seed: u64,
}

impl JitterScenario {
    /// The evaluation setting: `N = 30` samples on `[-3, 3]`.
    pub fn standard(delta: f64, k: usize, l: usize, seed: u64) -> Self {
        Self { n: 30, domain_lo: -3.0, domain_hi: 3.0, delta, k, l, seed }
    }

    /// Sampling period `T = (hi - lo) / (N - 1)`.
    pub fn period(&self) -> f64 {
        (self.domain_hi - self.domain_lo) / (self.n as f64 - 1.0)
    }

    /// Standard deviation (and truncation bound) of the jitter, `delta * T / 2`.
    pub fn jitter_sigma(&self) -> f64 {
        0.5 * self.delta * self.period()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput("scenario needs N >= 2".into()));
        }
        if !(self.domain_lo.is_finite() && self.domain_hi.is_finite())
            || self.domain_lo >= self.domain_hi
        {
            return Err(Error::InvalidInput("domain must satisfy lo < hi".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidInput("delta must be positive".into()));
        }
        if self.k == 0 || self.l < self.k {
            return Err(Error::InvalidInput(format!(
                "need 1 <= K <= L (K = {}, L = {})",
                self.k, self.l
            )));
        }
        Ok(())
    }
}

/// Whether adjacent samples can swap order, i.e. `delta >= 1`.
pub fn overlap_possible(scenario: &JitterScenario) -> bool {
    scenario.delta >= 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct JitterInstance {
    pub scenario: JitterScenario,
    pub uniform_locations: SampleLocations,
    /// Not sorted in general.
    pub true_locations: SampleLocations,
    pub w_true: CoefficientMatrix,
    pub y: ObservationMatrix,
}

impl JitterInstance {
    pub fn period(&self) -> f64 {
        self.scenario.period()
    }
}

/// Mixes a master seed and a run index into an independent scenario seed
/// (SplitMix64 finalizer).
pub fn derive_seed(master: u64, run_index: u64) -> u64 {
    let mut z = master ^ run_index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Zero-mean Gaussian with standard deviation `sigma`, truncated to
/// `[-sigma, sigma]` by rejection.
pub struct TruncatedGaussian {
    normal: Normal<f64>,
    bound: f64,
}

impl TruncatedGaussian {
    pub fn new(sigma: f64) -> Result<Self> {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidInput(format!("jitter sigma: {e}")))?;
        Ok(Self { normal, bound: sigma })
    }
}

impl Distribution<f64> for TruncatedGaussian {
    fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let j = self.normal.sample(rng);
            if j.abs() <= self.bound {
                return j;
            }
        }
    }
}

/// Draws one instance. Jitter and coefficients use separate ChaCha streams of
/// the scenario seed, so neither perturbs the other.
pub fn generate(scenario: &JitterScenario) -> Result<JitterInstance> {
    scenario.validate()?;
    let t = scenario.period();
    let uniform: Vec<f64> =
        (0..scenario.n).map(|i| scenario.domain_lo + i as f64 * t).collect();

    let jitter = TruncatedGaussian::new(scenario.jitter_sigma())?;
    let mut rng = stream(scenario.seed, JITTER_STREAM);
    let truth: Vec<f64> = uniform.iter().map(|&u| u + jitter.sample(&mut rng)).collect();

    let mut rng = stream(scenario.seed, COEFFICIENT_STREAM);
    let w = DMatrix::from_fn(scenario.k, scenario.l, |_, _| StandardNormal.sample(&mut rng));

    let true_locations = SampleLocations::new(truth)?;
    let w_true = CoefficientMatrix::new(w)?;
    let y = synthesize_observations(&true_locations, &w_true)?;
    Ok(JitterInstance {
        scenario: *scenario,
        uniform_locations: SampleLocations::new(uniform)?,
        true_locations,
        w_true,
        y,
    })
}

/// On-disk fixture layout. Matrices are arrays of rows.
#[derive(Debug, Serialize, Deserialize)]
struct Fixture {
    scenario: JitterScenario,
    #[serde(rename = "T", serialize_with = "numfmt::ser_f64")]
    period: f64,
    #[serde(serialize_with = "numfmt::ser_vec")]
    u: Vec<f64>,
    #[serde(serialize_with = "numfmt::ser_vec")]
    x: Vec<f64>,
    #[serde(rename = "W", serialize_with = "numfmt::ser_rows")]
    w: Vec<Vec<f64>>,
    #[serde(rename = "Y", serialize_with = "numfmt::ser_rows")]
    y: Vec<Vec<f64>>,
}

impl JitterInstance {
    /// Fixture JSON; every number is printed with 17 significant digits.
    pub fn to_json(&self) -> String {
        let fixture = Fixture {
            scenario: self.scenario,
            period: self.period(),
            u: self.uniform_locations.as_slice().to_vec(),
            x: self.true_locations.as_slice().to_vec(),
            w: numfmt::rows_of(self.w_true.as_matrix()),
            y: numfmt::rows_of(self.y.as_matrix()),
        };
        serde_json::to_string_pretty(&fixture).expect("fixture serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Fixture = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("fixture: {e}")))?;
        f.scenario.validate()?;
        let (n, k, l) = (f.scenario.n, f.scenario.k, f.scenario.l);
        if f.u.len() != n || f.x.len() != n {
            return Err(Error::ShapeMismatch("fixture location arrays must have N entries".into()));
        }
        let w = numfmt::matrix_from_rows(&f.w, k, l, "W")?;
        let y = numfmt::matrix_from_rows(&f.y, n, l, "Y")?;
        Ok(Self {
            scenario: f.scenario,
            uniform_locations: SampleLocations::new(f.u)?,
            true_locations: SampleLocations::new(f.x)?,
            w_true: CoefficientMatrix::new(w)?,
            y: ObservationMatrix::new(y)?,
        })
    }
}
