use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trial::elevation_candidates;
use super::{iteration_seed, perceive, TrialParams};
use crate::error::{Error, Result};
use crate::scene::{generate_scene, oracle_keypoint_visibility, Family, Scene};
use crate::scoring::{evaluate_all, score_terms, Weights};
use crate::viewpoints::CandidateId;

/// SNR reported for a cell whose achieved R_vis never varies.
pub const SNR_SENTINEL: f64 = 1e6;

/// Candidate counts and oracle R_vis of one sweep trial, computed once and
/// reused by every weight cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTrial {
    pub family: Family,
    pub seed: u64,
    pub n_m: usize,
    pub n_i: usize,
    /// `(id, n_in, n_occ, r_vis)` for each candidate that sees the target.
    pub candidates: Vec<(CandidateId, usize, usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub w_o: f64,
    pub w_a: f64,
    pub w_v: f64,
    pub trials: usize,
    pub mean_rvis: f64,
    pub std_rvis: f64,
    pub snr: f64,
    /// Standard deviation was zero and `snr` holds the sentinel.
    pub zero_std: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub step: f64,
    pub cells: Vec<SweepCell>,
    /// Index into `cells` of the highest SNR, ties to the first cell in
    /// row-major order (rows w_a, columns w_o).
    pub best: Option<usize>,
    /// Trials without any candidate seeing the target, left out of every cell.
    pub skipped_trials: usize,
    pub trials: Vec<SweepTrial>,
}

/// Candidate set at the spawn of `scene`, scored once.
pub fn sweep_trial(scene: &Scene, p: &TrialParams, seed: u64) -> Result<SweepTrial> {
    let per = perceive(scene, &scene.spawn_camera(), p, iteration_seed(seed, 0))?;
    let mesh = per.hypothesis.as_ref().unwrap_or(&per.init_mesh);
    let cands = elevation_candidates(scene, p, mesh, &scene.spawn, &scene.spawn_camera(), iteration_seed(seed, 0))?;
    let scored = evaluate_all(&cands, &mesh.vertices, &per.occluder_points(p.occluders), &p.intrinsics, &p.weights, &p.eval);
    let candidates = scored
        .par_iter()
        .filter(|s| s.n_in > 0)
        .map(|s| {
            let (n_vis, n_kp) = oracle_keypoint_visibility(scene, &s.candidate.cam, &p.intrinsics);
            (s.candidate.id, s.n_in, s.n_occ, n_vis as f64 / n_kp as f64)
        })
        .collect();
    Ok(SweepTrial {
        family: scene.family,
        seed,
        n_m: mesh.len(),
        n_i: p.intrinsics.pixel_count(),
        candidates,
    })
}

/// Achieved R_vis of the argmax candidate under `w`, ties to the lower id.
pub fn sweep_select(trial: &SweepTrial, w: &Weights) -> Option<(CandidateId, f64)> {
    let mut best: Option<(CandidateId, f64, f64)> = None;
    for &(id, n_in, n_occ, r) in &trial.candidates {
        let s = score_terms(n_in, n_occ, trial.n_m, trial.n_i, w).3;
        best = match best {
            Some((bid, bs, br)) if !(s > bs || (s == bs && id < bid)) => Some((bid, bs, br)),
            _ => Some((id, s, r)),
        };
    }
    best.map(|(id, _, r)| (id, r))
}

/// Aggregate precomputed trials over the simplex grid with the given step.
pub fn sweep_cells(trials: &[SweepTrial], step: f64) -> Result<(Vec<SweepCell>, Option<usize>)> {
    let n = (1.0 / step).round() as usize;
    if n == 0 || ((n as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("grid step {step} must divide 1")));
    }
    let used: Vec<&SweepTrial> = trials.iter().filter(|t| !t.candidates.is_empty()).collect();
    let mut cells = Vec::new();
    for ia in 0..=n {
        for io in 0..=(n - ia) {
            let w_o = io as f64 / n as f64;
            let w_a = ia as f64 / n as f64;
            let w_v = (n - io - ia) as f64 / n as f64;
            let w = Weights { w_v, w_a, w_o };
            let r: Vec<f64> = used.iter().filter_map(|t| sweep_select(t, &w).map(|x| x.1)).collect();
            let (mean, std) = mean_std(&r);
            let zero_std = std == 0.0;
            cells.push(SweepCell {
                w_o,
                w_a,
                w_v,
                trials: r.len(),
                mean_rvis: mean,
                std_rvis: std,
                snr: if zero_std { SNR_SENTINEL } else { mean / std },
                zero_std,
            });
        }
    }
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if c.trials > 0 && best.is_none_or(|b| c.snr > cells[b].snr) {
            best = Some(i);
        }
    }
    Ok((cells, best))
}

/// Population mean and standard deviation.
fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Grid sweep over `(w_o, w_a)` with one trial per family and seed.
pub fn weight_sweep(families: &[Family], seeds: &[u64], step: f64, p: &TrialParams) -> Result<SweepResult> {
    if seeds.is_empty() || families.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one trial".into()));
    }
    p.validate()?;
    let jobs: Vec<(Family, u64)> = families.iter().flat_map(|&f| seeds.iter().map(move |&s| (f, s))).collect();
    let trials: Vec<SweepTrial> = jobs
        .par_iter()
        .map(|&(family, seed)| {
            let scene = generate_scene(family, seed)?;
            match sweep_trial(&scene, p, seed) {
                Ok(t) => Ok(t),
                // no traversable space around the spawn: nothing to select from
                Err(Error::EmptyTraversableSet | Error::BaseCellInvalid) => Ok(SweepTrial {
                    family,
                    seed,
                    n_m: scene.target.len(),
                    n_i: p.intrinsics.pixel_count(),
                    candidates: Vec::new(),
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let (cells, best) = sweep_cells(&trials, step)?;
    let skipped_trials = trials.iter().filter(|t| t.candidates.is_empty()).count();
    Ok(SweepResult {
        step,
        cells,
        best,
        skipped_trials,
        trials,
    })
}

/// Long-form cell table.
pub fn write_sweep_cells_csv<W: Write>(w: W, cells: &[SweepCell]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["w_o", "w_a", "w_v", "trials", "mean_rvis", "std_rvis", "snr", "zero_std"])?;
    for c in cells {
        wr.write_record([
            c.w_o.to_string(),
            c.w_a.to_string(),
            c.w_v.to_string(),
            c.trials.to_string(),
            c.mean_rvis.to_string(),
            c.std_rvis.to_string(),
            c.snr.to_string(),
            c.zero_std.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// SNR heatmap: one row per w_a, one column per w_o, empty where w_v < 0.
pub fn write_sweep_grid_csv<W: Write>(w: W, result: &SweepResult) -> Result<()> {
    let n = (1.0 / result.step).round() as usize;
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["w_a\\w_o".to_string()];
    header.extend((0..=n).map(|io| (io as f64 / n as f64).to_string()));
    wr.write_record(&header)?;
    let mut it = result.cells.iter();
    for ia in 0..=n {
        let mut row = vec![(ia as f64 / n as f64).to_string()];
        for io in 0..=n {
            if io + ia <= n {
                row.push(it.next().expect("cell per simplex point").snr.to_string());
            } else {
                row.push(String::new());
            }
        }
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(c: Vec<(usize, usize, usize, f64)>) -> SweepTrial {
        SweepTrial {
            family: Family::Indoor,
            seed: 0,
            n_m: 100,
            n_i: 1000,
            candidates: c
                .into_iter()
                .map(|(pos, n_in, n_occ, r)| (CandidateId { position: pos, pitch: 0 }, n_in, n_occ, r))
                .collect(),
        }
    }

    #[test]
    fn simplex_has_66_cells() {
        let t = trial(vec![(0, 50, 0, 0.5)]);
        let (cells, _) = sweep_cells(&[t], 0.1).unwrap();
        assert_eq!(cells.len(), 66);
        assert!(cells.iter().all(|c| c.w_v >= 0.0 && (c.w_v + c.w_a + c.w_o - 1.0).abs() < 1e-12));
    }

    #[test]
    fn uniform_rvis_flags_zero_std() {
        let ts: Vec<_> = (0..5).map(|_| trial(vec![(0, 50, 10, 0.4), (1, 80, 70, 0.4)])).collect();
        let (cells, best) = sweep_cells(&ts, 0.1).unwrap();
        assert!(cells.iter().all(|c| c.zero_std && c.snr == SNR_SENTINEL && (c.mean_rvis - 0.4).abs() < 1e-15));
        assert_eq!(best, Some(0));
    }

    #[test]
    fn selection_follows_weights() {
        // many vertices in view but heavily occluded versus few and clear
        let t = trial(vec![(0, 90, 80, 0.2), (1, 20, 0, 0.9)]);
        assert_eq!(sweep_select(&t, &Weights::new(1.0, 0.0, 0.0).unwrap()).unwrap().1, 0.2);
        assert_eq!(sweep_select(&t, &Weights::new(0.0, 0.0, 1.0).unwrap()).unwrap().1, 0.9);
    }

    #[test]
    fn ties_go_to_lower_id() {
        let t = trial(vec![(3, 50, 0, 0.1), (1, 50, 0, 0.7)]);
        assert_eq!(sweep_select(&t, &Weights::default()).unwrap().0.position, 1);
    }

    #[test]
    fn bad_step_rejected() {
        assert!(sweep_cells(&[], 0.3).is_err());
    }
}
