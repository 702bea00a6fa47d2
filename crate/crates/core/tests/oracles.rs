//! Independent-oracle checks: brute-force GW permutation recovery,
//! exhaustive k-means partitions, a test-only Jacobi eigensolver against
//! PCA, and the synthetic speaker/utterance direction agreement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phonematch::cluster::{kmeans, lloyd};
use phonematch::corpus::UnigramDistribution;
use phonematch::gw::{distance_matrices, entropic_gw, extract_matching};
use phonematch::matrix::{dot, norm, EmbeddingMatrix, RoleTag};
use phonematch::subspace::{collapse, group_means, pca};

fn mat(rows: Vec<Vec<f64>>) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(rows, RoleTag::Frames).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for p in &out {
            for c in 0..n {
                if !p.contains(&c) {
                    let mut q = p.clone();
                    q.push(c);
                    next.push(q);
                }
            }
        }
        out = next;
    }
    out
}

/// GW cost of matching centroid i to symbol perm[i], by direct enumeration.
fn permutation_cost(s: &EmbeddingMatrix, sp: &EmbeddingMatrix, perm: &[usize]) -> f64 {
    let n = perm.len();
    let mut cost = 0.0;
    for i in 0..n {
        for k in 0..n {
            let diff = s.get(i, k) - sp.get(perm[i], perm[k]);
            cost += diff * diff;
        }
    }
    cost
}

#[test]
fn gw_matching_agrees_with_brute_force_on_permuted_point_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut hits = 0;
    let trials = 12;
    for trial in 0..trials {
        let n = 4 + (trial % 3);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..8).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let true_perm: Vec<usize> = {
            // Fisher-Yates with the same generator.
            let mut p: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                p.swap(i, j);
            }
            p
        };
        let mut permuted = vec![Vec::new(); n];
        for (i, &target) in true_perm.iter().enumerate() {
            permuted[target] = pts[i].clone();
        }
        let centroids = mat(pts);
        let embeddings = mat(permuted);
        let dp = distance_matrices(&centroids, &embeddings);

        let best = permutations(n)
            .into_iter()
            .min_by(|a, b| {
                permutation_cost(&dp.s, &dp.s_prime, a)
                    .partial_cmp(&permutation_cost(&dp.s, &dp.s_prime, b))
                    .unwrap()
            })
            .unwrap();
        // The planted permutation has cost exactly 0, so it is the optimum.
        assert_eq!(
            best, true_perm,
            "oracle disagrees with the planted permutation"
        );

        let p = UnigramDistribution::uniform(n).unwrap();
        let matching = entropic_gw(&dp, &p, &p, 0.005, 1000, 50, 0)
            .map(|c| extract_matching(&c))
            .unwrap();
        if matching == best {
            hits += 1;
        }
    }
    assert!(
        hits >= trials - 1,
        "recovered only {hits}/{trials} permutations"
    );
}

/// Every 2-clustering of at most 8 points, by exhaustive bit masks.
fn best_two_partition(points: &EmbeddingMatrix) -> (f64, Vec<Vec<f64>>) {
    let n = points.nrows();
    let d = points.dim();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 1..(1u32 << n) - 1 {
        let mut sums = [vec![0.0; d], vec![0.0; d]];
        let mut counts = [0usize; 2];
        for (i, row) in points.iter_rows().enumerate() {
            let g = ((mask >> i) & 1) as usize;
            counts[g] += 1;
            for (s, v) in sums[g].iter_mut().zip(row) {
                *s += v;
            }
        }
        let means: Vec<Vec<f64>> = (0..2)
            .map(|g| sums[g].iter().map(|s| s / counts[g] as f64).collect())
            .collect();
        let mut sse = 0.0;
        for (i, row) in points.iter_rows().enumerate() {
            let g = ((mask >> i) & 1) as usize;
            sse += row
                .iter()
                .zip(&means[g])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        if sse < best.0 {
            best = (sse, means);
        }
    }
    best
}

#[test]
fn kmeans_never_beats_the_exhaustive_two_partition_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..40 {
        let n = 4 + (trial % 5);
        let pts = mat((0..n)
            .map(|_| (0..2).map(|_| rng.random::<f64>() * 6.0).collect())
            .collect());
        let (optimum, means) = best_two_partition(&pts);
        let cs = kmeans(&pts, 2, 50, trial as u64).unwrap();
        assert!(
            cs.inertia >= optimum - 1e-9,
            "kmeans inertia {} below exhaustive optimum {optimum}",
            cs.inertia
        );
        // Initialized at the optimum, Lloyd stays there.
        let init = EmbeddingMatrix::from_rows(means, RoleTag::Centroids).unwrap();
        let fixed = lloyd(&pts, init, 50).unwrap();
        assert!(
            (fixed.inertia - optimum).abs() <= 1e-9,
            "fixed point drifted: {} vs {optimum}",
            fixed.inertia
        );
    }
}

/// Cyclic Jacobi eigensolver for small symmetric matrices; independent of
/// the nalgebra-backed implementation inside `pca`.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> Vec<(f64, Vec<f64>)> {
    let d = a.len();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|i| (a[i][i], (0..d).map(|k| v[k][i]).collect()))
        .collect();
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    pairs
}

#[test]
fn pca_matches_a_jacobi_oracle_on_gaussian_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let n = 600;
    let d = 5;
    let gauss = |rng: &mut ChaCha8Rng| {
        // Box-Muller, test-local.
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| gauss(&mut rng)).collect())
        .collect();
    let m = mat(rows.clone());
    let basis = pca(&m, d).unwrap();

    // Oracle: covariance assembled independently, diagonalized by Jacobi.
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in &rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in cov.iter_mut() {
        for x in row.iter_mut() {
            *x /= n as f64;
        }
    }
    let oracle = jacobi_eigen(cov);

    for k in 0..d {
        let ev = basis.eigenvalues[k];
        let (oracle_ev, oracle_vec) = &oracle[k];
        assert!(
            (ev - oracle_ev).abs() <= 1e-9 * oracle_ev.max(1e-12),
            "eigenvalue {k}: {ev} vs oracle {oracle_ev}"
        );
        // Directions agree up to sign.
        let agree = dot(basis.direction(k), oracle_vec).abs();
        assert!(agree > 1.0 - 1e-7, "direction {k} agreement {agree}");
    }

    // Isotropic data: eigenvalues within sampling tolerance of each other.
    let spread = basis.eigenvalues[0] - basis.eigenvalues[d - 1];
    assert!(spread < 0.5, "isotropic eigenvalue spread {spread}");
}

#[test]
fn speaker_and_utterance_directions_agree_on_offset_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(321);
    let d = 8;
    let axis: Vec<f64> = {
        let raw: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let len = norm(&raw);
        raw.iter().map(|x| x / len).collect()
    };
    let speakers = 12;
    let utterances_per_speaker = 6;
    let frames_per_utterance = 30;

    let mut rows = Vec::new();
    let mut utt_ids = Vec::new();
    let mut spk_ids = Vec::new();
    for s in 0..speakers {
        let offset = (rng.random::<f64>() - 0.5) * 16.0;
        for u in 0..utterances_per_speaker {
            for _ in 0..frames_per_utterance {
                let mut frame: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                for (f, a) in frame.iter_mut().zip(&axis) {
                    *f += offset * a;
                }
                rows.push(frame);
                utt_ids.push(s * utterances_per_speaker + u);
                spk_ids.push(s);
            }
        }
    }
    let frames = mat(rows);

    let spk_means = group_means(&frames, &spk_ids).unwrap();
    let utt_means = group_means(&frames, &utt_ids).unwrap();
    let spk_basis = pca(&spk_means, 2).unwrap();
    let utt_basis = pca(&utt_means, 2).unwrap();

    let spk_dot = dot(spk_basis.direction(0), &axis).abs();
    let utt_dot = dot(utt_basis.direction(0), &axis).abs();
    assert!(spk_dot >= 0.99, "speaker direction alignment {spk_dot}");
    assert!(utt_dot >= 0.99, "utterance direction alignment {utt_dot}");
    let mutual = dot(spk_basis.direction(0), utt_basis.direction(0)).abs();
    assert!(mutual >= 0.99, "speaker/utterance agreement {mutual}");

    // Collapsing the estimated direction removes the offset variance.
    let collapsed = collapse(&frames, utt_basis.direction(0)).unwrap();
    let var_along = |m: &EmbeddingMatrix| {
        let proj: Vec<f64> = m.iter_rows().map(|r| dot(r, &axis)).collect();
        let mean = proj.iter().sum::<f64>() / proj.len() as f64;
        proj.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / proj.len() as f64
    };
    let before = var_along(&frames);
    let after = var_along(&collapsed);
    assert!(
        after <= 1e-4 * before,
        "residual variance {after} not small next to {before}"
    );
}
