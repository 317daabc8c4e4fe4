//! CA-CFAR detection, ground-truth maps, detection matching and metrics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::params::{cell_of, NormalizedPath, SystemConfig};
use crate::RMat;

pub const DEFAULT_GUARD: usize = 2;
pub const DEFAULT_TRAIN: usize = 8;
pub const DEFAULT_TOL_CELLS: usize = 1;

/// A detected cell: `(range_bin, doppler_bin)` with its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub range_bin: usize,
    pub doppler_bin: usize,
    pub score: f64,
}

impl Detection {
    pub fn cell(&self) -> (usize, usize) {
        (self.range_bin, self.doppler_bin)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    /// Builds a set, rejecting repeated cells and non-finite scores.
    pub fn new(detections: Vec<Detection>) -> Result<Self> {
        let mut cells: Vec<(usize, usize)> = detections.iter().map(Detection::cell).collect();
        cells.sort_unstable();
        if cells.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("detection cells must be unique".into()));
        }
        if detections.iter().any(|d| !d.score.is_finite()) {
            return Err(Error::Validation("detection scores must be finite".into()));
        }
        Ok(Self { detections })
    }

    /// Every cell whose score strictly exceeds `threshold`.
    pub fn above(scores: &RMat, threshold: f64) -> Self {
        let mut detections = Vec::new();
        for c in 0..scores.ncols() {
            for r in 0..scores.nrows() {
                let s = scores[(r, c)];
                if s > threshold {
                    detections.push(Detection { range_bin: r, doppler_bin: c, score: s });
                }
            }
        }
        Self { detections }
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// Detections ordered by descending score, ties by ascending cell.
    pub fn ranked(&self) -> Vec<Detection> {
        let mut d = self.detections.clone();
        d.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.cell().cmp(&b.cell())));
        d
    }
}

/// Learned per-cell detection probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    pub values: RMat,
    pub frame_id: Option<String>,
}

impl ConfidenceMap {
    pub fn new(values: RMat, frame_id: Option<String>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("confidence value {v} at flat index {i} outside [0, 1]")));
        }
        Ok(Self { values, frame_id })
    }
}

/// Binary target-presence grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMap {
    pub grid: DMatrix<u8>,
    pub paths: Vec<NormalizedPath>,
}

impl GroundTruthMap {
    /// Occupied cells in column-major order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for c in 0..self.grid.ncols() {
            for r in 0..self.grid.nrows() {
                if self.grid[(r, c)] != 0 {
                    out.push((r, c));
                }
            }
        }
        out
    }

    pub fn count(&self) -> usize {
        self.grid.iter().filter(|&&v| v != 0).count()
    }
}

pub fn ground_truth(paths: &[NormalizedPath], cfg: &SystemConfig) -> GroundTruthMap {
    let mut grid = DMatrix::<u8>::zeros(cfg.n_subcarriers(), cfg.n_symbols());
    for p in paths {
        grid[cell_of(p, cfg)] = 1;
    }
    GroundTruthMap { grid, paths: paths.to_vec() }
}

/// Number of training cells and the CA threshold factor for a window.
pub fn cfar_threshold_factor(guard: usize, train: usize, pfa: f64) -> (usize, f64) {
    let h = 2 * (guard + train) + 1;
    let g = 2 * guard + 1;
    let n_t = h * h - g * g;
    let n = n_t as f64;
    (n_t, n * (pfa.powf(-1.0 / n) - 1.0))
}

/// Two-dimensional cell-averaging CFAR on squared magnitudes with circular
/// windows on both axes. Detections are scored by magnitude.
pub fn ca_cfar(mag: &RMat, guard: usize, train: usize, pfa: f64) -> Result<DetectionSet> {
    if guard == 0 || train == 0 {
        return Err(Error::Config("CFAR guard and training widths must be at least 1".into()));
    }
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::Config(format!("pfa {pfa} outside (0, 1)")));
    }
    let window = 2 * (guard + train) + 1;
    let (rows, cols) = mag.shape();
    if window > rows || window > cols {
        return Err(Error::Window { window, rows, cols });
    }
    let power = mag.map(|m| m * m);
    let outer = circular_box_sum(&power, guard + train);
    let inner = circular_box_sum(&power, guard);
    let (n_t, factor) = cfar_threshold_factor(guard, train, pfa);
    let mut detections = Vec::new();
    for c in 0..cols {
        for r in 0..rows {
            let noise = (outer[(r, c)] - inner[(r, c)]).max(0.0) / n_t as f64;
            if power[(r, c)] > factor * noise {
                detections.push(Detection { range_bin: r, doppler_bin: c, score: mag[(r, c)] });
            }
        }
    }
    Ok(DetectionSet { detections })
}

/// Sum over the `(2h+1) x (2h+1)` box centred on every cell, wrapping at
/// both edges.
pub fn circular_box_sum(m: &RMat, h: usize) -> RMat {
    let (rows, cols) = m.shape();
    let mut along_rows = RMat::zeros(rows, cols);
    for c in 0..cols {
        let mut acc: f64 = (0..=2 * h).map(|d| m[((d + rows - h % rows) % rows, c)]).sum();
        for r in 0..rows {
            along_rows[(r, c)] = acc;
            acc += m[((r + h + 1) % rows, c)] - m[((r + rows - h % rows) % rows, c)];
        }
    }
    let mut out = RMat::zeros(rows, cols);
    for r in 0..rows {
        let mut acc: f64 = (0..=2 * h).map(|d| along_rows[(r, (d + cols - h % cols) % cols)]).sum();
        for c in 0..cols {
            out[(r, c)] = acc;
            acc += along_rows[(r, (c + h + 1) % cols)] - along_rows[(r, (c + cols - h % cols) % cols)];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub p_d: f64,
    pub p_fa: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub n_targets: usize,
    pub n_cells: usize,
    /// `(detection cell, truth cell)` for every true positive.
    pub pairs: Vec<((usize, usize), (usize, usize))>,
}

fn wrap_dist(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

/// Greedy score-descending matching with a `tol` cell gate on each axis.
/// The Doppler axis is treated as circular; the range axis is not.
pub fn match_and_score(det: &DetectionSet, truth: &GroundTruthMap, tol: usize) -> MatchResult {
    let (rows, cols) = truth.grid.shape();
    let targets = truth.cells();
    let mut used = vec![false; targets.len()];
    let mut pairs = Vec::new();
    let mut fp = 0;
    for d in det.ranked() {
        let best = targets
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, &(r, c))| {
                let dr = d.range_bin.abs_diff(r);
                let dc = wrap_dist(d.doppler_bin, c, cols);
                (dr.max(dc), dr + dc, i)
            })
            .filter(|&(cheb, _, _)| cheb <= tol)
            .min();
        match best {
            Some((_, _, i)) => {
                used[i] = true;
                pairs.push((d.cell(), targets[i]));
            }
            None => fp += 1,
        }
    }
    let tp = pairs.len();
    let n_cells = rows * cols;
    MatchResult {
        p_d: if targets.is_empty() { 0.0 } else { tp as f64 / targets.len() as f64 },
        p_fa: fp as f64 / n_cells as f64,
        true_positives: tp,
        false_positives: fp,
        n_targets: targets.len(),
        n_cells,
        pairs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub p_fa: f64,
    pub p_d: f64,
}

/// Sweeps a global threshold over per-frame score grids; counts are pooled
/// over frames before forming the rates.
pub fn roc_sweep(scores: &[RMat], truths: &[GroundTruthMap], thresholds: &[f64], tol: usize) -> Result<Vec<RocPoint>> {
    if thresholds.len() < 2 {
        return Err(Error::Config("ROC sweep needs at least two thresholds".into()));
    }
    if scores.len() != truths.len() {
        return Err(Error::Dimension(format!("{} score maps for {} truth maps", scores.len(), truths.len())));
    }
    if let Some(i) = (0..scores.len()).find(|&i| scores[i].shape() != truths[i].grid.shape()) {
        return Err(Error::Dimension(format!("frame {i}: score and truth grids differ in shape")));
    }
    Ok(thresholds
        .iter()
        .map(|&t| {
            let (mut tp, mut fp, mut targets, mut cells) = (0, 0, 0, 0);
            for (s, g) in scores.iter().zip(truths) {
                let m = match_and_score(&DetectionSet::above(s, t), g, tol);
                tp += m.true_positives;
                fp += m.false_positives;
                targets += m.n_targets;
                cells += m.n_cells;
            }
            RocPoint {
                threshold: t,
                p_fa: if cells == 0 { 0.0 } else { fp as f64 / cells as f64 },
                p_d: if targets == 0 { 0.0 } else { tp as f64 / targets as f64 },
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rmse {
    pub range_m: f64,
    pub velocity_mps: f64,
    pub matched: usize,
}

/// Range/velocity RMSE over truths after greedy nearest-pair assignment in
/// cell-normalized units. Each unmatched truth contributes one full cell of
/// error on both axes.
pub fn rmse(estimates: &[(f64, f64)], truths: &[(f64, f64)], range_res: f64, vel_res: f64) -> Result<Rmse> {
    if truths.is_empty() {
        return Err(Error::Validation("RMSE needs at least one truth".into()));
    }
    if !(range_res > 0.0 && vel_res > 0.0) {
        return Err(Error::Config("RMSE resolutions must be positive".into()));
    }
    let mut cand = Vec::with_capacity(estimates.len() * truths.len());
    for (ti, t) in truths.iter().enumerate() {
        for e in estimates {
            let d = ((e.0 - t.0) / range_res).powi(2) + ((e.1 - t.1) / vel_res).powi(2);
            cand.push((d, ti, *e));
        }
    }
    cand.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2 .0.total_cmp(&b.2 .0)).then(a.2 .1.total_cmp(&b.2 .1))
    });
    let mut truth_used = vec![false; truths.len()];
    // Identical estimates are interchangeable, so track remaining copies by value.
    let mut remaining: Vec<(f64, f64)> = estimates.to_vec();
    let (mut se_r, mut se_v, mut matched) = (0.0, 0.0, 0);
    for (_, ti, e) in cand {
        if truth_used[ti] {
            continue;
        }
        let Some(pos) = remaining.iter().position(|r| r.0.to_bits() == e.0.to_bits() && r.1.to_bits() == e.1.to_bits())
        else {
            continue;
        };
        remaining.swap_remove(pos);
        truth_used[ti] = true;
        matched += 1;
        se_r += (e.0 - truths[ti].0).powi(2);
        se_v += (e.1 - truths[ti].1).powi(2);
    }
    let missed = (truths.len() - matched) as f64;
    se_r += missed * range_res * range_res;
    se_v += missed * vel_res * vel_res;
    let n = truths.len() as f64;
    Ok(Rmse { range_m: (se_r / n).sqrt(), velocity_mps: (se_v / n).sqrt(), matched })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_config, normalize_path, PathGroup, PathParams, RawConfig};
    use crate::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1};

    fn brute_box(m: &RMat, h: usize) -> RMat {
        let (rows, cols) = m.shape();
        RMat::from_fn(rows, cols, |r, c| {
            let mut s = 0.0;
            for dr in -(h as i64)..=h as i64 {
                for dc in -(h as i64)..=h as i64 {
                    let rr = (r as i64 + dr).rem_euclid(rows as i64) as usize;
                    let cc = (c as i64 + dc).rem_euclid(cols as i64) as usize;
                    s += m[(rr, cc)];
                }
            }
            s
        })
    }

    #[test]
    fn box_sum_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = RMat::from_fn(13, 11, |_, _| rng.random::<f64>());
        for h in [0, 1, 3, 5] {
            let fast = circular_box_sum(&m, h);
            assert!((fast - brute_box(&m, h)).abs().max() < 1e-10);
        }
    }

    #[test]
    fn threshold_factor_matches_exponential_tail() {
        // For exponential cells, P(X > a * mean of N) = (1 + a/N)^-N.
        let (n, a) = cfar_threshold_factor(2, 8, 1e-3);
        assert_eq!(n, 21 * 21 - 5 * 5);
        assert!(((1.0 + a / n as f64).powi(-(n as i32)) - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn cfar_noise_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pfa = 1e-2;
        let mut fa = 0usize;
        let mut cells = 0usize;
        for _ in 0..8 {
            let m = RMat::from_fn(128, 128, |_, _| {
                let p: f64 = Exp1.sample(&mut rng);
                p.sqrt()
            });
            fa += ca_cfar(&m, 2, 8, pfa).unwrap().len();
            cells += m.len();
        }
        let rate = fa as f64 / cells as f64;
        assert!((rate - pfa).abs() < 0.2 * pfa, "rate {rate}");
    }

    #[test]
    fn cfar_single_peak() {
        let mut m = RMat::from_element(64, 64, 1.0);
        m[(20, 30)] = 10f64.powf(30.0 / 20.0);
        let d = ca_cfar(&m, 2, 8, 1e-4).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.detections[0].cell(), (20, 30));
    }

    #[test]
    fn cfar_zero_map_and_errors() {
        assert!(ca_cfar(&RMat::zeros(32, 32), 2, 8, 1e-3).unwrap().is_empty());
        assert!(matches!(ca_cfar(&RMat::zeros(32, 16), 2, 8, 1e-3), Err(Error::Window { .. })));
        assert!(ca_cfar(&RMat::zeros(32, 32), 0, 8, 1e-3).is_err());
        assert!(ca_cfar(&RMat::zeros(32, 32), 2, 8, 1.0).is_err());
    }

    #[test]
    fn cfar_monotone_in_pfa() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = RMat::from_fn(64, 64, |_, _| Exp1.sample(&mut rng));
        let mut prev = 0;
        for pfa in [1e-4, 1e-3, 1e-2, 1e-1] {
            let n = ca_cfar(&m, 2, 8, pfa).unwrap().len();
            assert!(n >= prev);
            prev = n;
        }
    }

    fn grid_truth(rows: usize, cols: usize, cells: &[(usize, usize)]) -> GroundTruthMap {
        let mut grid = DMatrix::<u8>::zeros(rows, cols);
        for &c in cells {
            grid[c] = 1;
        }
        GroundTruthMap { grid, paths: vec![] }
    }

    fn det(cells: &[(usize, usize)]) -> DetectionSet {
        DetectionSet::new(
            cells
                .iter()
                .enumerate()
                .map(|(i, &(r, c))| Detection { range_bin: r, doppler_bin: c, score: 100.0 - i as f64 })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ground_truth_examples() {
        let cfg = derive_config(RawConfig::default()).unwrap();
        assert_eq!(ground_truth(&[], &cfg).count(), 0);
        let p = PathParams {
            range_m: 300.0,
            velocity_mps: 0.0,
            aoa_rad: 0.0,
            aod_rad: 0.0,
            reflect: Complex64::new(1.0, 0.0),
            group: PathGroup::Focal(0),
        };
        let np = normalize_path(&p, &cfg).unwrap();
        let g = ground_truth(std::slice::from_ref(&np), &cfg);
        assert_eq!(g.cells(), vec![(100, 0)]);
        assert_eq!(ground_truth(&[np.clone(), np], &cfg).count(), 1);
    }

    #[test]
    fn matching_examples() {
        let t = grid_truth(2048, 64, &[(10, 5), (200, 40), (900, 63)]);
        let exact = match_and_score(&det(&[(10, 5), (200, 40), (900, 63)]), &t, 1);
        assert_eq!((exact.p_d, exact.p_fa), (1.0, 0.0));
        let none = match_and_score(&DetectionSet::default(), &t, 1);
        assert_eq!((none.p_d, none.p_fa), (0.0, 0.0));
        let mixed = det(&[(11, 4), (899, 0), (500, 1), (501, 9), (7, 7), (1000, 30), (3, 3)]);
        let m = match_and_score(&mixed, &t, 1);
        assert_eq!(m.true_positives, 2);
        assert!((m.p_d - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.p_fa, 5.0 / 131072.0);
    }

    #[test]
    fn matching_does_not_wrap_range() {
        let t = grid_truth(64, 16, &[(0, 0)]);
        assert_eq!(match_and_score(&det(&[(63, 15)]), &t, 1).true_positives, 0);
        assert_eq!(match_and_score(&det(&[(1, 15)]), &t, 1).true_positives, 1);
    }

    #[test]
    fn duplicate_cells_rejected() {
        let d = Detection { range_bin: 1, doppler_bin: 1, score: 1.0 };
        assert!(DetectionSet::new(vec![d, d]).is_err());
        let bad = Detection { score: f64::NAN, ..d };
        assert!(DetectionSet::new(vec![bad]).is_err());
    }

    proptest! {
        #[test]
        fn matching_permutation_invariant(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = grid_truth(32, 16, &[(rng.random_range(0..32), rng.random_range(0..16)),
                                         (rng.random_range(0..32), rng.random_range(0..16))]);
            let mut dets: Vec<Detection> = Vec::new();
            for i in 0..8 {
                let cell = (rng.random_range(0..32), rng.random_range(0..16));
                if dets.iter().all(|d| d.cell() != cell) {
                    dets.push(Detection { range_bin: cell.0, doppler_bin: cell.1, score: i as f64 + rng.random::<f64>() });
                }
            }
            let a = match_and_score(&DetectionSet::new(dets.clone()).unwrap(), &t, 1);
            dets.reverse();
            let b = match_and_score(&DetectionSet::new(dets).unwrap(), &t, 1);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn roc_extremes_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scores: Vec<RMat> = (0..4).map(|_| RMat::from_fn(32, 16, |_, _| rng.random::<f64>())).collect();
        let truths: Vec<GroundTruthMap> =
            (0..4).map(|_| grid_truth(32, 16, &[(rng.random_range(0..32), rng.random_range(0..16))])).collect();
        let thr: Vec<f64> = (0..=20).map(|i| -0.1 + i as f64 * 0.06).collect();
        let roc = roc_sweep(&scores, &truths, &thr, 1).unwrap();
        assert_eq!(roc[0].p_d, 1.0);
        let last = roc.last().unwrap();
        assert_eq!((last.p_d, last.p_fa), (0.0, 0.0));
        for w in roc.windows(2) {
            assert!(w[1].p_d <= w[0].p_d && w[1].p_fa <= w[0].p_fa);
        }
        assert!(roc_sweep(&scores, &truths, &[0.5], 1).is_err());
    }

    #[test]
    fn roc_null_model_tracks_chance() {
        // With tolerance 0 and uniform random scores, a cell fires with
        // probability 1 - t regardless of truth, so P_D ~ P_FA * cells/(cells - targets).
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let scores: Vec<RMat> = (0..50).map(|_| RMat::from_fn(32, 32, |_, _| rng.random::<f64>())).collect();
        let truths: Vec<GroundTruthMap> = (0..50)
            .map(|_| {
                grid_truth(
                    32,
                    32,
                    &[
                        (rng.random_range(0..32), rng.random_range(0..32)),
                        (rng.random_range(0..32), rng.random_range(0..32)),
                    ],
                )
            })
            .collect();
        let roc = roc_sweep(&scores, &truths, &[0.5, 0.8], 0).unwrap();
        for p in roc {
            let fire = 1.0 - p.threshold;
            assert!((p.p_d - fire).abs() < 0.12, "{p:?}");
            assert!((p.p_fa - fire).abs() < 0.02, "{p:?}");
        }
    }

    #[test]
    fn rmse_examples() {
        let (dr, dv) = (3.0, 0.5);
        let t = [(30.0, 1.0), (90.0, -2.0)];
        assert_eq!(rmse(&t, &t, dr, dv).unwrap().range_m, 0.0);
        let r = rmse(&[(31.5, 0.0)], &[(30.0, 0.0)], dr, dv).unwrap();
        assert!((r.range_m - 1.5).abs() < 1e-12);
        let a = rmse(&[(91.0, -2.0), (30.5, 1.1)], &t, dr, dv).unwrap();
        let b = rmse(&[(30.5, 1.1), (91.0, -2.0)], &t, dr, dv).unwrap();
        assert_eq!(a, b);
        let miss = rmse(&[], &t, dr, dv).unwrap();
        assert_eq!((miss.range_m, miss.velocity_mps, miss.matched), (dr, dv, 0));
        assert!(rmse(&[(1.0, 1.0)], &[], dr, dv).is_err());
    }

    #[test]
    fn confidence_map_validation() {
        assert!(ConfidenceMap::new(RMat::from_element(2, 2, 0.5), None).is_ok());
        let mut v = RMat::zeros(2, 2);
        v[(1, 1)] = 1.2;
        assert!(ConfidenceMap::new(v, None).is_err());
    }
}
