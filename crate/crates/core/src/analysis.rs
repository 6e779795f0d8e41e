//! Experiment drivers: EPR-width sweeps, flatness of outcome densities and
//! seeded outcome sampling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::epr::{build_epr_energy, build_epr_position, EprSpec};
use crate::error::{Error, Result};
use crate::hilbert::Grid;
use crate::measurement::{OutcomeLabel, TAU_PROB};
use crate::protocol_energy::EnergyProtocol;
use crate::protocol_xp::XpProtocol;
use crate::record::TeleportRecord;
use crate::states::InputState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Xp,
    Energy,
    Qubit,
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProtocolKind::Xp => "xp",
            ProtocolKind::Energy => "energy",
            ProtocolKind::Qubit => "qubit",
        })
    }
}

/// Fixed ingredients of a sweep; only the EPR width varies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSetup {
    pub grid: Grid,
    pub input: InputState,
    /// Envelope length of the position pair.
    pub envelope: f64,
    pub epsilon0: f64,
    pub oversample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub sigmas: Vec<f64>,
    pub mean_fidelity: Vec<f64>,
    pub min_fidelity: Vec<f64>,
    pub accepted_mass: Vec<f64>,
}

/// Probability-weighted mean and minimum fidelity over accepted outcomes,
/// and the accepted probability mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptedStats {
    pub mean_fidelity: f64,
    pub min_fidelity: f64,
    pub accepted_mass: f64,
}

pub fn accepted_stats(records: &[TeleportRecord]) -> AcceptedStats {
    accepted_stats_from(records.iter().map(|r| (r.accepted, r.fidelity, r.probability())))
}

/// [`accepted_stats`] over `(accepted, fidelity, probability)` triples.
pub fn accepted_stats_from<I>(rows: I) -> AcceptedStats
where
    I: IntoIterator<Item = (bool, Option<f64>, f64)>,
{
    let mut mass = 0.0;
    let mut weighted = 0.0;
    let mut worst = f64::INFINITY;
    for (accepted, fidelity, p) in rows {
        if let (true, Some(f)) = (accepted, fidelity) {
            mass += p;
            weighted += p * f;
            worst = worst.min(f);
        }
    }
    AcceptedStats {
        mean_fidelity: if mass > 0.0 { weighted / mass } else { f64::NAN },
        min_fidelity: if worst.is_finite() { worst } else { f64::NAN },
        accepted_mass: mass,
    }
}

/// Runs the protocol once per `σ` with the regularized pair.
pub fn sweep_sigma(protocol: ProtocolKind, sigmas: &[f64], setup: &SweepSetup) -> Result<SweepResult> {
    if sigmas.is_empty() {
        return Err(Error::Empty("sigma list"));
    }
    if sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidEpr("sweep widths must be positive".into()));
    }
    if sigmas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidEpr("sweep widths must be strictly descending".into()));
    }
    let g = &setup.grid;
    let psi = setup.input.build(g)?;
    let mut out = SweepResult {
        sigmas: sigmas.to_vec(),
        mean_fidelity: Vec::with_capacity(sigmas.len()),
        min_fidelity: Vec::with_capacity(sigmas.len()),
        accepted_mass: Vec::with_capacity(sigmas.len()),
    };
    let records_for = |sigma: f64| -> Result<Vec<TeleportRecord>> {
        match protocol {
            ProtocolKind::Xp => {
                let epr = build_epr_position(g, g, &EprSpec::position(sigma, setup.envelope))?;
                XpProtocol::new(g)?.run(&psi, &epr)
            }
            ProtocolKind::Energy => {
                let epr = build_epr_energy(g, g, &EprSpec::energy(sigma, setup.epsilon0))?;
                EnergyProtocol::new(g, setup.oversample)?.run(&psi, &epr, setup.epsilon0)
            }
            ProtocolKind::Qubit => Err(Error::InvalidInput(
                "the qubit protocol has no EPR width to sweep".into(),
            )),
        }
    };
    for &sigma in sigmas {
        let s = accepted_stats(&records_for(sigma)?);
        out.mean_fidelity.push(s.mean_fidelity);
        out.min_fidelity.push(s.min_fidelity);
        out.accepted_mass.push(s.accepted_mass);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatnessAxis {
    /// Every outcome against every other.
    All,
    /// Only across `T` (or the second label index) at fixed first index.
    TOnly,
}

fn relative_spread(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|h| (h - mean).abs() / mean).fold(0.0, f64::max)
}

/// Largest relative deviation of `H(z)` from its mean, over outcomes with
/// `H(z) > τ_prob`.
pub fn probability_flatness(records: &[TeleportRecord], axis: FlatnessAxis) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    Ok(density_flatness(
        records.iter().map(|r| (r.label.indices.first().copied().unwrap_or(0), r.density)),
        axis,
    ))
}

/// [`probability_flatness`] over `(first label index, H(z))` pairs.
pub fn density_flatness<I>(points: I, axis: FlatnessAxis) -> f64
where
    I: IntoIterator<Item = (i64, f64)>,
{
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (key, h) in points.into_iter().filter(|&(_, h)| h > TAU_PROB) {
        let key = match axis {
            FlatnessAxis::All => 0,
            FlatnessAxis::TOnly => key,
        };
        groups.entry(key).or_default().push(h);
    }
    groups.values().map(|h| relative_spread(h)).fold(0.0, f64::max)
}

/// `count` i.i.d. labels drawn from `w_z H(z)` by inverse CDF.
pub fn sample_outcomes(records: &[TeleportRecord], count: usize, seed: u64) -> Result<Vec<OutcomeLabel>> {
    let idx = sample_indices(records, count, seed)?;
    Ok(idx.into_iter().map(|i| records[i].label.clone()).collect())
}

/// Like [`sample_outcomes`] but returns record positions.
pub fn sample_indices(records: &[TeleportRecord], count: usize, seed: u64) -> Result<Vec<usize>> {
    let mut cdf = Vec::with_capacity(records.len());
    let mut total = 0.0;
    for r in records {
        total += r.probability().max(0.0);
        cdf.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let last = records.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            cdf.partition_point(|&c| c <= u).min(last)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epr::ideal_epr_energy;
    use crate::hilbert::Boundary;
    use crate::protocol_xp::run_xp_ideal;

    fn fake(probs: &[f64]) -> Vec<TeleportRecord> {
        probs
            .iter()
            .enumerate()
            .map(|(i, &p)| TeleportRecord {
                label: OutcomeLabel::new(vec![i as f64], vec![i as i64], 1.0),
                density: p,
                conditional: None,
                corrected: None,
                fidelity: None,
                accepted: true,
                clipped: false,
            })
            .collect()
    }

    fn tv(probs: &[f64], draws: &[usize]) -> f64 {
        let mut counts = vec![0usize; probs.len()];
        for &d in draws {
            counts[d] += 1;
        }
        let n = draws.len() as f64;
        0.5 * probs.iter().zip(&counts).map(|(p, &c)| (p - c as f64 / n).abs()).sum::<f64>()
    }

    #[test]
    fn sampling_is_deterministic_and_degenerate_safe() {
        let r = fake(&[0.2, 0.3, 0.5]);
        assert_eq!(sample_indices(&r, 100, 9).unwrap(), sample_indices(&r, 100, 9).unwrap());
        assert_ne!(sample_indices(&r, 100, 9).unwrap(), sample_indices(&r, 100, 10).unwrap());
        let one = fake(&[0.0, 1.0, 0.0]);
        assert!(sample_indices(&one, 1000, 1).unwrap().iter().all(|&i| i == 1));
        assert_eq!(sample_indices(&fake(&[0.0, 0.0]), 3, 0), Err(Error::ZeroMass));
        let labels = sample_outcomes(&r, 5, 2).unwrap();
        assert_eq!(labels.len(), 5);
    }

    #[test]
    fn uniform_frequencies_within_binomial_bands() {
        let k = 64;
        let probs = vec![1.0 / k as f64; k];
        let n = 100_000;
        let draws = sample_indices(&fake(&probs), n, 4).unwrap();
        let mut counts = vec![0usize; k];
        for &d in &draws {
            counts[d] += 1;
        }
        let p = 1.0 / k as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        // 4σ: 64 simultaneous bands
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 4.0 * sd, "{c}");
        }
        assert!(tv(&probs, &draws) < 0.02);
    }

    #[test]
    fn total_variation_shrinks_with_draws() {
        let k = 4096;
        let probs: Vec<f64> = (0..k).map(|i| (1 + i % 7) as f64).collect();
        let total: f64 = probs.iter().sum();
        let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
        let draws = sample_indices(&fake(&probs), 10_000_000, 8).unwrap();
        assert!(tv(&probs, &draws) < 0.02);
    }

    #[test]
    fn flatness_of_ideal_runs() {
        let g = Grid::new(16, 0.5, 0.0, Boundary::Cyclic).unwrap();
        let psi = InputState::GaussianPacket { center: 4.0, width: 0.6, momentum: 1.0 }.build(&g).unwrap();
        let r = run_xp_ideal(&psi).unwrap();
        assert!(probability_flatness(&r, FlatnessAxis::All).unwrap() < 1e-10);

        let ge = Grid::new(16, 0.5, 0.0, Boundary::Truncated).unwrap();
        let psi = InputState::Bump { e_min: 0.5, e_max: 3.0, momentum: 0.2 }.build(&ge).unwrap();
        let epr = ideal_epr_energy(&ge, &ge, 4.0).unwrap();
        let r = EnergyProtocol::new(&ge, 2).unwrap().run(&psi, &epr, 4.0).unwrap();
        assert!(probability_flatness(&r, FlatnessAxis::TOnly).unwrap() < 1e-10);
        assert!(probability_flatness(&r, FlatnessAxis::All).unwrap() > 1e-3);
        assert_eq!(probability_flatness(&[], FlatnessAxis::All), Err(Error::Empty("records")));
    }

    fn xp_setup() -> SweepSetup {
        let grid = Grid::new(32, 0.25, 0.0, Boundary::Cyclic).unwrap();
        SweepSetup {
            grid,
            input: InputState::GaussianPacket { center: 4.0, width: 0.5, momentum: 0.0 },
            envelope: grid.span(),
            epsilon0: 0.0,
            oversample: 1,
        }
    }

    #[test]
    fn xp_sweep_improves_as_pair_sharpens() {
        let setup = xp_setup();
        let d = setup.grid.spacing();
        let r = sweep_sigma(ProtocolKind::Xp, &[4.0 * d, d, 0.1 * d], &setup).unwrap();
        assert_eq!(r.mean_fidelity.len(), 3);
        for w in r.mean_fidelity.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "{:?}", r.mean_fidelity);
        }
        assert!(r.mean_fidelity[2] > 0.99);
        for m in &r.accepted_mass {
            assert!((m - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn decorrelated_pair_loses_fidelity() {
        let mut setup = xp_setup();
        setup.envelope = 2.0 * setup.grid.span();
        let r = sweep_sigma(ProtocolKind::Xp, &[setup.grid.span()], &setup).unwrap();
        assert!(r.mean_fidelity[0] <= 0.9, "{}", r.mean_fidelity[0]);
    }

    #[test]
    fn energy_sweep_at_ideal_width_is_exact() {
        let grid = Grid::new(16, 0.5, 0.0, Boundary::Truncated).unwrap();
        let setup = SweepSetup {
            grid,
            input: InputState::Bump { e_min: 0.5, e_max: 3.0, momentum: 0.0 },
            envelope: 0.0,
            epsilon0: 4.0,
            oversample: 2,
        };
        let r = sweep_sigma(ProtocolKind::Energy, &[1.0, 0.1], &setup).unwrap();
        assert!((r.mean_fidelity[1] - 1.0).abs() < 1e-9);
        assert!((r.min_fidelity[1] - 1.0).abs() < 1e-9);
        assert!(r.mean_fidelity[0] < r.mean_fidelity[1]);
    }

    #[test]
    fn sweep_rejects_bad_sigma_lists() {
        let setup = xp_setup();
        assert!(sweep_sigma(ProtocolKind::Xp, &[], &setup).is_err());
        assert!(sweep_sigma(ProtocolKind::Xp, &[0.1, 0.2], &setup).is_err());
        assert!(sweep_sigma(ProtocolKind::Xp, &[0.1, -0.2], &setup).is_err());
        assert!(sweep_sigma(ProtocolKind::Qubit, &[0.1], &setup).is_err());
    }
}
