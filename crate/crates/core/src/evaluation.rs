//! Translation-quality metrics and zero-shot attribute inference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm, Matrix};

/// Retrieval metrics for one translation experiment. Ranking is chunked: each
/// prediction competes only against the targets of its own chunk, which
/// bounds the similarity matrix at chunk_size².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_cos: f64,
    pub top1: f64,
    pub mean_rank: f64,
    pub n: usize,
    pub stderr_cos: f64,
    pub stderr_rank: f64,
    pub batch_chunks: usize,
}

impl EvalReport {
    /// Binomial standard error of the top-1 rate.
    pub fn top1_stderr(&self) -> f64 {
        (self.top1 * (1.0 - self.top1) / self.n as f64).sqrt()
    }
}

/// Cosine similarity; 0 when either vector has norm below 1e-12.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("cosine", a.len(), b.len()));
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na < 1e-12 || nb < 1e-12 {
        return Ok(0.0);
    }
    Ok(dot(a, b) / (na * nb))
}

struct ChunkStats {
    cos: Vec<f64>,
    rank: Vec<f64>,
    top1_hits: usize,
}

fn eval_chunk(pred: &Matrix, truth: &Matrix, start: usize, end: usize) -> ChunkStats {
    let rows: Vec<usize> = (start..end).collect();
    let mut p = pred.gather_rows(&rows);
    let mut t = truth.gather_rows(&rows);
    p.normalize_rows_in_place(1e-12);
    t.normalize_rows_in_place(1e-12);
    // All pairwise cosines inside the chunk in one multiply.
    let sims = p.matmul_a_bt(&t);
    let n = rows.len();
    let mut cos = Vec::with_capacity(n);
    let mut rank = Vec::with_capacity(n);
    let mut top1_hits = 0;
    for i in 0..n {
        let row = sims.row(i);
        let mine = row[i];
        cos.push(mine);
        let mut r = 1usize;
        for (j, &s) in row.iter().enumerate() {
            if s > mine || (s == mine && j < i) {
                r += 1;
            }
        }
        if r == 1 {
            top1_hits += 1;
        }
        rank.push(r as f64);
    }
    ChunkStats { cos, rank, top1_hits }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean cosine to the true targets, top-1 accuracy, and mean rank of the true
/// target among each chunk's candidates (descending cosine, ties broken by
/// ascending index). Standard errors are sample stddev / √n.
pub fn eval_translation(pred: &Matrix, truth: &Matrix, chunk_size: usize) -> Result<EvalReport> {
    if pred.shape() != truth.shape() {
        return Err(Error::dim(
            "eval_translation",
            format!("{:?}", truth.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    let n = pred.rows();
    if n < 2 {
        return Err(Error::Domain(format!(
            "eval_translation needs at least 2 rows, got {n}"
        )));
    }
    if chunk_size < 2 {
        return Err(Error::Domain(format!(
            "chunk_size must be >= 2, got {chunk_size}"
        )));
    }

    let bounds: Vec<(usize, usize)> = (0..n)
        .step_by(chunk_size)
        .map(|s| (s, (s + chunk_size).min(n)))
        .collect();
    let chunks: Vec<ChunkStats> = bounds
        .par_iter()
        .map(|&(s, e)| eval_chunk(pred, truth, s, e))
        .collect();

    let mut cos = Vec::with_capacity(n);
    let mut rank = Vec::with_capacity(n);
    let mut hits = 0usize;
    for c in &chunks {
        cos.extend_from_slice(&c.cos);
        rank.extend_from_slice(&c.rank);
        hits += c.top1_hits;
    }
    let (mean_cos, stderr_cos) = mean_and_stderr(&cos);
    let (mean_rank, stderr_rank) = mean_and_stderr(&rank);
    Ok(EvalReport {
        mean_cos,
        top1: hits as f64 / n as f64,
        mean_rank,
        n,
        stderr_cos,
        stderr_rank,
        batch_chunks: chunks.len(),
    })
}

/// Zero-shot attribute inference: documents, candidate attribute embeddings,
/// and per-document true label sets.
#[derive(Debug, Clone)]
pub struct AttributeTask {
    pub doc_embeddings: Matrix,
    pub attribute_embeddings: Matrix,
    pub true_labels: Vec<Vec<usize>>,
    pub k: usize,
}

/// Fraction of documents whose k nearest attributes (by cosine) intersect the
/// true label set. Documents with an empty label set count as misses.
pub fn attribute_topk(task: &AttributeTask) -> Result<f64> {
    let n = task.doc_embeddings.rows();
    let n_attrs = task.attribute_embeddings.rows();
    if n == 0 {
        return Err(Error::EmptyBatch("attribute_topk documents"));
    }
    if task.doc_embeddings.cols() != task.attribute_embeddings.cols() {
        return Err(Error::dim(
            "attribute_topk",
            task.doc_embeddings.cols(),
            task.attribute_embeddings.cols(),
        ));
    }
    if task.true_labels.len() != n {
        return Err(Error::dim("attribute_topk labels", n, task.true_labels.len()));
    }
    if task.k == 0 || task.k > n_attrs {
        return Err(Error::Domain(format!(
            "k must be in 1..={n_attrs}, got {}",
            task.k
        )));
    }
    for labels in &task.true_labels {
        if labels.iter().any(|&c| c >= n_attrs) {
            return Err(Error::Domain("label index out of range".into()));
        }
    }

    let mut hits = 0usize;
    for i in 0..n {
        let labels = &task.true_labels[i];
        if labels.is_empty() {
            continue;
        }
        let doc = task.doc_embeddings.row(i);
        let mut sims: Vec<(f64, usize)> = (0..n_attrs)
            .map(|c| Ok((cosine(doc, task.attribute_embeddings.row(c))?, c)))
            .collect::<Result<_>>()?;
        sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let topk: Vec<usize> = sims[..task.k].iter().map(|&(_, c)| c).collect();
        if labels.iter().any(|c| topk.contains(c)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut m = Matrix::zeros(n, d);
        for v in m.data_mut() {
            *v = rng.sample(StandardNormal);
        }
        m
    }

    #[test]
    fn cosine_examples() {
        let x = vec![0.3, -0.4, 1.0];
        assert!((cosine(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn perfect_translator_fixed_point() {
        let truth = random_matrix(64, 8, 1);
        let report = eval_translation(&truth, &truth, 32).unwrap();
        assert_eq!(report.mean_cos, 1.0);
        assert_eq!(report.top1, 1.0);
        assert_eq!(report.mean_rank, 1.0);
        assert_eq!(report.batch_chunks, 2);
        assert_eq!(report.top1_stderr(), 0.0);
    }

    #[test]
    fn top1_one_implies_rank_one() {
        let truth = random_matrix(40, 6, 2);
        let report = eval_translation(&truth, &truth, 40).unwrap();
        assert_eq!(report.top1, 1.0);
        assert_eq!(report.mean_rank, 1.0);
    }

    #[test]
    fn random_translator_rank_is_near_half() {
        for seed in 0..5 {
            let n = 512;
            let pred = random_matrix(n, 16, 100 + seed);
            let truth = random_matrix(n, 16, 200 + seed);
            let report = eval_translation(&pred, &truth, n).unwrap();
            let lo = 0.4 * n as f64;
            let hi = 0.6 * n as f64;
            assert!(
                report.mean_rank >= lo && report.mean_rank <= hi,
                "seed {seed}: mean rank {}",
                report.mean_rank
            );
        }
    }

    #[test]
    fn three_doc_ranks_match_sort_oracle() {
        // Hand-set vectors with a known similarity structure.
        let pred = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let truth = Matrix::from_rows(&[
            vec![0.9, 0.1],
            vec![1.0, 0.0],
            vec![0.5, 0.5],
        ])
        .unwrap();
        let report = eval_translation(&pred, &truth, 3).unwrap();

        // Oracle: exhaustive sorted ranking per row.
        let mut total_rank = 0.0;
        let mut hits = 0;
        for i in 0..3 {
            let mut sims: Vec<(f64, usize)> = (0..3)
                .map(|j| (cosine(pred.row(i), truth.row(j)).unwrap(), j))
                .collect();
            sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let rank = sims.iter().position(|&(_, j)| j == i).unwrap() + 1;
            if rank == 1 {
                hits += 1;
            }
            total_rank += rank as f64;
        }
        assert!((report.mean_rank - total_rank / 3.0).abs() < 1e-12);
        assert!((report.top1 - hits as f64 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_invariance_within_chunk() {
        let n = 30;
        let pred = random_matrix(n, 5, 3);
        let truth = random_matrix(n, 5, 4);
        let base = eval_translation(&pred, &truth, n).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        let shuffled =
            eval_translation(&pred.gather_rows(&idx), &truth.gather_rows(&idx), n).unwrap();
        assert!((base.mean_cos - shuffled.mean_cos).abs() < 1e-12);
        assert!((base.mean_rank - shuffled.mean_rank).abs() < 1e-12);
        assert!((base.top1 - shuffled.top1).abs() < 1e-12);
    }

    #[test]
    fn truth_as_prediction_dominates() {
        let n = 40;
        let pred = random_matrix(n, 6, 6);
        let truth = random_matrix(n, 6, 7);
        let actual = eval_translation(&pred, &truth, n).unwrap();
        let perfect = eval_translation(&truth, &truth, n).unwrap();
        assert!(perfect.top1 >= actual.top1);
        assert!(perfect.mean_cos >= actual.mean_cos);
    }

    #[test]
    fn rejects_bad_shapes() {
        let a = random_matrix(4, 3, 8);
        let b = random_matrix(4, 2, 9);
        assert!(eval_translation(&a, &b, 4).is_err());
        assert!(eval_translation(&a, &a, 1).is_err());
        let single = random_matrix(1, 3, 10);
        assert!(eval_translation(&single, &single, 4).is_err());
    }

    #[test]
    fn attribute_self_match() {
        let attrs = random_matrix(3, 4, 11);
        let task = AttributeTask {
            doc_embeddings: attrs.clone(),
            attribute_embeddings: attrs.clone(),
            true_labels: vec![vec![0], vec![1], vec![2]],
            k: 1,
        };
        assert_eq!(attribute_topk(&task).unwrap(), 1.0);
    }

    #[test]
    fn attribute_full_k_hits_everything_labeled() {
        let docs = random_matrix(5, 4, 12);
        let attrs = random_matrix(3, 4, 13);
        let task = AttributeTask {
            doc_embeddings: docs,
            attribute_embeddings: attrs,
            true_labels: vec![vec![0], vec![2], vec![1, 2], vec![0, 1], vec![2]],
            k: 3,
        };
        assert_eq!(attribute_topk(&task).unwrap(), 1.0);
    }

    #[test]
    fn attribute_enumeration_oracle() {
        // 4 docs, 3 attributes, constructed similarities, k = 2.
        let attrs = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let docs = Matrix::from_rows(&[
            vec![0.9, 0.4, 0.0],
            vec![0.0, 0.2, 0.9],
            vec![0.5, 0.5, 0.1],
            vec![0.1, 0.0, 0.3],
        ])
        .unwrap();
        let labels = vec![vec![0], vec![1], vec![2], vec![0]];
        let task = AttributeTask {
            doc_embeddings: docs.clone(),
            attribute_embeddings: attrs.clone(),
            true_labels: labels.clone(),
            k: 2,
        };
        let got = attribute_topk(&task).unwrap();

        let mut hits = 0;
        for i in 0..4 {
            let mut sims: Vec<(f64, usize)> = (0..3)
                .map(|c| (cosine(docs.row(i), attrs.row(c)).unwrap(), c))
                .collect();
            sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let topk: Vec<usize> = sims[..2].iter().map(|&(_, c)| c).collect();
            if labels[i].iter().any(|c| topk.contains(c)) {
                hits += 1;
            }
        }
        assert_eq!(got, hits as f64 / 4.0);
    }

    #[test]
    fn attribute_monotone_in_k() {
        let docs = random_matrix(20, 5, 14);
        let attrs = random_matrix(6, 5, 15);
        let labels: Vec<Vec<usize>> = (0..20).map(|i| vec![i % 6]).collect();
        let mut prev = 0.0;
        for k in 1..=6 {
            let task = AttributeTask {
                doc_embeddings: docs.clone(),
                attribute_embeddings: attrs.clone(),
                true_labels: labels.clone(),
                k,
            };
            let acc = attribute_topk(&task).unwrap();
            assert!(acc >= prev, "accuracy dropped at k = {k}");
            prev = acc;
        }
        assert_eq!(prev, 1.0);
    }

    #[test]
    fn empty_labels_count_as_misses() {
        let docs = random_matrix(2, 3, 16);
        let task = AttributeTask {
            doc_embeddings: docs.clone(),
            attribute_embeddings: docs.clone(),
            true_labels: vec![vec![0], vec![]],
            k: 1,
        };
        assert_eq!(attribute_topk(&task).unwrap(), 0.5);
    }
}
