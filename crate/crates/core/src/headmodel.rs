//! Linear statistical head model: a fixed template mesh deformed by shape
//! (morphology) and expression blendshape fields, rotated by an axis-angle
//! pose, observed as 2D landmarks under a weak-perspective projection.
//! The model is procedurally generated from a seed and acts as the fixed,
//! differentiable decoder of the expression decoupling autoencoder.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonio;
use crate::linalg::{dot, norm2, rotate};
use crate::rng;

pub const HEAD_MODEL_FORMAT_VERSION: u32 = 1;

/// Norm of the leading basis field; field k within each family has norm
/// `BASIS_SIGMA0 * BASIS_RHO^k`.
pub const BASIS_SIGMA0: f64 = 1.0;
pub const BASIS_RHO: f64 = 0.9;

const STREAM_BASES: u64 = 0x6261_7365; // "base"

// Ellipsoid-cap template geometry.
const AXIS_X: f64 = 1.0;
const AXIS_Y: f64 = 1.3;
const AXIS_Z: f64 = 1.0;
const PHI_MAX: f64 = 1.1; // azimuth half-range, radians
const PSI_MAX: f64 = 1.0; // elevation half-range, radians

/// Decoupled face parameters: expression coefficients, axis-angle pose
/// (radians) and morphology coefficients.
///
/// Convention: a pose vector with norm at most pi identifies every rotation
/// uniquely. Sampled data respects that bound; the mesh operations accept any
/// finite pose since the rotation itself is defined for all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceParams {
    pub expression: Vec<f64>,
    pub pose: [f64; 3],
    pub morphology: Vec<f64>,
}

impl FaceParams {
    pub fn zeros(n_expr: usize, n_shape: usize) -> Self {
        FaceParams {
            expression: vec![0.0; n_expr],
            pose: [0.0; 3],
            morphology: vec![0.0; n_shape],
        }
    }

    pub fn validate(&self, n_expr: usize, n_shape: usize) -> Result<()> {
        if self.expression.len() != n_expr || self.morphology.len() != n_shape {
            return Err(Error::dimension(format!(
                "params have (e, m) lengths ({}, {}), expected ({}, {})",
                self.expression.len(),
                self.morphology.len(),
                n_expr,
                n_shape
            )));
        }
        let finite = self.expression.iter().all(|v| v.is_finite())
            && self.pose.iter().all(|v| v.is_finite())
            && self.morphology.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("non-finite face parameter"));
        }
        let pose_norm = dot(&self.pose, &self.pose).sqrt();
        if pose_norm > std::f64::consts::PI {
            return Err(Error::invalid(format!(
                "pose norm {pose_norm} exceeds pi"
            )));
        }
        Ok(())
    }

    /// Concatenation (expression | pose | morphology), the layout used by
    /// the encoder output and by representation error metrics.
    pub fn concat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.expression.len() + 3 + self.morphology.len());
        out.extend_from_slice(&self.expression);
        out.extend_from_slice(&self.pose);
        out.extend_from_slice(&self.morphology);
        out
    }
}

/// 2D landmark set in normalized image units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmarks2D {
    pub points: Vec<[f64; 2]>,
}

impl Landmarks2D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Interleaved (x0, y0, x1, y1, ...) layout.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len() * 2);
        for p in &self.points {
            out.push(p[0]);
            out.push(p[1]);
        }
        out
    }
}

/// In-plane similarity (scale + translation, no rotation) aligning predicted
/// landmarks to observed ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub scale: f64,
    pub t_x: f64,
    pub t_y: f64,
}

impl Alignment {
    pub const IDENTITY: Alignment = Alignment {
        scale: 1.0,
        t_x: 0.0,
        t_y: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadModel {
    format_version: u32,
    pub seed: u64,
    pub n_vertices: usize,
    pub n_shape: usize,
    pub n_expr: usize,
    pub n_landmarks: usize,
    /// n_vertices x 3, row-major.
    template: Vec<f64>,
    /// n_shape fields, each n_vertices x 3 row-major.
    shape_basis: Vec<Vec<f64>>,
    /// n_expr fields, each n_vertices x 3 row-major.
    expr_basis: Vec<Vec<f64>>,
    landmark_indices: Vec<usize>,
    /// Triangle connectivity of the template grid. Never deformed.
    face_indices: Vec<[usize; 3]>,
}

/// Builds the procedural head model.
///
/// The template is a fixed grid of points on an ellipsoid cap (independent of
/// the seed); landmark indices are mirrored left/right pairs spread over the
/// grid. The shape and expression displacement fields are drawn from the
/// seeded stream, orthogonalized as flattened vectors, and scaled by the
/// decaying spectrum sigma0 * rho^k within each family.
pub fn build_head_model(
    seed: u64,
    n_vertices: usize,
    n_shape: usize,
    n_expr: usize,
    n_landmarks: usize,
) -> Result<HeadModel> {
    if n_landmarks < 4 {
        return Err(Error::invalid(format!(
            "need at least 4 landmarks, got {n_landmarks}"
        )));
    }
    if n_vertices < n_landmarks {
        return Err(Error::invalid(format!(
            "n_vertices {n_vertices} < n_landmarks {n_landmarks}"
        )));
    }
    if n_shape < 1 || n_expr < 1 {
        return Err(Error::invalid("need at least one shape and one expression field"));
    }
    if n_shape + n_expr + 3 > 2 * n_landmarks {
        return Err(Error::invalid(format!(
            "{n_shape} shape + {n_expr} expression + 3 pose parameters exceed \
             the 2 x {n_landmarks} landmark observations"
        )));
    }

    let (template, cols, rows) = build_template(n_vertices);
    let landmark_indices = pick_landmarks(n_vertices, cols, n_landmarks)?;
    let face_indices = build_triangles(n_vertices, cols, rows);

    let n_fields = n_shape + n_expr;
    let fields = orthonormal_fields(rng::derive(seed, STREAM_BASES), n_fields, 3 * n_vertices);
    let mut shape_basis = Vec::with_capacity(n_shape);
    let mut expr_basis = Vec::with_capacity(n_expr);
    for (k, mut field) in fields.into_iter().enumerate() {
        let (family_k, target) = if k < n_shape {
            (k, &mut shape_basis)
        } else {
            (k - n_shape, &mut expr_basis)
        };
        let scale = BASIS_SIGMA0 * BASIS_RHO.powi(family_k as i32);
        for v in field.iter_mut() {
            *v *= scale;
        }
        target.push(field);
    }

    Ok(HeadModel {
        format_version: HEAD_MODEL_FORMAT_VERSION,
        seed,
        n_vertices,
        n_shape,
        n_expr,
        n_landmarks,
        template,
        shape_basis,
        expr_basis,
        landmark_indices,
        face_indices,
    })
}

fn build_template(n_vertices: usize) -> (Vec<f64>, usize, usize) {
    let mut cols = (n_vertices as f64).sqrt().ceil() as usize;
    if cols % 2 == 0 {
        cols += 1;
    }
    let rows = n_vertices.div_ceil(cols);
    let mut template = Vec::with_capacity(n_vertices * 3);
    for idx in 0..n_vertices {
        let r = idx / cols;
        let c = idx % cols;
        let phi = if cols > 1 {
            PHI_MAX * (2.0 * c as f64 / (cols - 1) as f64 - 1.0)
        } else {
            0.0
        };
        let psi = if rows > 1 {
            PSI_MAX * (2.0 * r as f64 / (rows - 1) as f64 - 1.0)
        } else {
            0.0
        };
        template.push(AXIS_X * phi.sin() * psi.cos());
        template.push(AXIS_Y * psi.sin());
        template.push(AXIS_Z * phi.cos() * psi.cos());
    }
    (template, cols, rows)
}

/// Mirrored landmark layout: pairs (r, c) / (r, cols-1-c) spread evenly over
/// the complete rows of the grid, plus one centerline point when the count is
/// odd.
fn pick_landmarks(n_vertices: usize, cols: usize, n_landmarks: usize) -> Result<Vec<usize>> {
    let full_rows = n_vertices / cols;
    let half_cols = (cols - 1) / 2;
    let total_left = full_rows * half_cols;
    let n_pairs = n_landmarks / 2;
    let n_center = n_landmarks % 2;
    if n_pairs > total_left || (n_center == 1 && full_rows == 0) {
        return Err(Error::invalid(format!(
            "grid of {n_vertices} vertices cannot host {n_landmarks} mirrored landmarks"
        )));
    }
    let mut indices = Vec::with_capacity(n_landmarks);
    for k in 0..n_pairs {
        let slot = k * total_left / n_pairs;
        let r = slot / half_cols;
        let c = slot % half_cols;
        indices.push(r * cols + c);
        indices.push(r * cols + (cols - 1 - c));
    }
    if n_center == 1 {
        indices.push((full_rows / 2) * cols + half_cols);
    }
    debug_assert!(indices.iter().all(|&i| i < n_vertices));
    Ok(indices)
}

fn build_triangles(n_vertices: usize, cols: usize, rows: usize) -> Vec<[usize; 3]> {
    let mut tris = Vec::new();
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols - 1 {
            let a = r * cols + c;
            let b = a + 1;
            let d = a + cols;
            let e = d + 1;
            if e < n_vertices {
                tris.push([a, b, d]);
                tris.push([b, e, d]);
            }
        }
    }
    tris
}

/// Draws `count` unit-norm mutually orthogonal vectors of length `dim` from
/// the seeded stream (modified Gram-Schmidt with one re-orthogonalization
/// pass; near-dependent draws are rejected and redrawn).
fn orthonormal_fields(seed: u64, count: usize, dim: usize) -> Vec<Vec<f64>> {
    assert!(count <= dim);
    let mut rng = rng::stream(seed);
    let mut fields: Vec<Vec<f64>> = Vec::with_capacity(count);
    while fields.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for _ in 0..2 {
            for prev in &fields {
                let proj = dot(&v, prev);
                for (vi, pi) in v.iter_mut().zip(prev) {
                    *vi -= proj * pi;
                }
            }
        }
        let n = norm2(&v);
        if n < 1e-6 {
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= n;
        }
        fields.push(v);
    }
    fields
}

impl HeadModel {
    pub fn landmark_indices(&self) -> &[usize] {
        &self.landmark_indices
    }

    pub fn face_indices(&self) -> &[[usize; 3]] {
        &self.face_indices
    }

    pub fn template_point(&self, idx: usize) -> [f64; 3] {
        [
            self.template[3 * idx],
            self.template[3 * idx + 1],
            self.template[3 * idx + 2],
        ]
    }

    pub fn shape_field(&self, k: usize) -> &[f64] {
        &self.shape_basis[k]
    }

    pub fn expr_field(&self, k: usize) -> &[f64] {
        &self.expr_basis[k]
    }

    fn check_params(&self, params: &FaceParams) -> Result<()> {
        if params.expression.len() != self.n_expr || params.morphology.len() != self.n_shape {
            return Err(Error::dimension(format!(
                "params (e, m) lengths ({}, {}) do not match model ({}, {})",
                params.expression.len(),
                params.morphology.len(),
                self.n_expr,
                self.n_shape
            )));
        }
        Ok(())
    }

    /// Unrotated morphed position of one vertex:
    /// template + sum_k m_k shape_k + sum_k e_k expr_k.
    #[inline]
    fn morph_vertex(&self, idx: usize, params: &FaceParams) -> [f64; 3] {
        let o = 3 * idx;
        let mut acc = [self.template[o], self.template[o + 1], self.template[o + 2]];
        for (k, &m) in params.morphology.iter().enumerate() {
            let f = &self.shape_basis[k][o..o + 3];
            acc[0] += m * f[0];
            acc[1] += m * f[1];
            acc[2] += m * f[2];
        }
        for (k, &e) in params.expression.iter().enumerate() {
            let f = &self.expr_basis[k][o..o + 3];
            acc[0] += e * f[0];
            acc[1] += e * f[1];
            acc[2] += e * f[2];
        }
        acc
    }

    /// All vertices of the posed mesh.
    pub fn mesh_vertices(&self, params: &FaceParams) -> Result<Vec<[f64; 3]>> {
        self.check_params(params)?;
        let mut out = Vec::with_capacity(self.n_vertices);
        for idx in 0..self.n_vertices {
            out.push(rotate(params.pose, self.morph_vertex(idx, params)));
        }
        Ok(out)
    }

    /// The landmark subset of the posed mesh, in landmark-index order.
    pub fn landmarks_3d(&self, params: &FaceParams) -> Result<Vec<[f64; 3]>> {
        self.check_params(params)?;
        let mut out = Vec::with_capacity(self.landmark_indices.len());
        for &idx in &self.landmark_indices {
            out.push(rotate(params.pose, self.morph_vertex(idx, params)));
        }
        Ok(out)
    }

    /// Precomputed landmark-restricted decoder for training loops.
    pub fn landmark_decoder(&self) -> LandmarkDecoder {
        let n = self.landmark_indices.len();
        let gather = |field: &Vec<f64>| -> Vec<[f64; 3]> {
            self.landmark_indices
                .iter()
                .map(|&idx| [field[3 * idx], field[3 * idx + 1], field[3 * idx + 2]])
                .collect()
        };
        LandmarkDecoder {
            n_landmarks: n,
            n_shape: self.n_shape,
            n_expr: self.n_expr,
            template: self
                .landmark_indices
                .iter()
                .map(|&idx| self.template_point(idx))
                .collect(),
            shape: self.shape_basis.iter().map(gather).collect(),
            expr: self.expr_basis.iter().map(gather).collect(),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        jsonio::write_file(path, self)
    }

    pub fn load_json(path: &Path) -> Result<HeadModel> {
        let model: HeadModel = jsonio::read_versioned(path, HEAD_MODEL_FORMAT_VERSION)?;
        model.check_structure()?;
        Ok(model)
    }

    fn check_structure(&self) -> Result<()> {
        if self.template.len() != 3 * self.n_vertices
            || self.shape_basis.len() != self.n_shape
            || self.expr_basis.len() != self.n_expr
            || self.landmark_indices.len() != self.n_landmarks
        {
            return Err(Error::malformed("head model arrays inconsistent with header"));
        }
        for f in self.shape_basis.iter().chain(&self.expr_basis) {
            if f.len() != 3 * self.n_vertices {
                return Err(Error::malformed("basis field has wrong length"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for &idx in &self.landmark_indices {
            if idx >= self.n_vertices || !seen.insert(idx) {
                return Err(Error::malformed("landmark indices out of range or repeated"));
            }
        }
        Ok(())
    }
}

/// Landmark-restricted copy of the model used in training inner loops. Its
/// outputs are bit-identical to `HeadModel::landmarks_3d`: the per-vertex
/// accumulation runs in the same order over the same values.
#[derive(Debug, Clone)]
pub struct LandmarkDecoder {
    pub n_landmarks: usize,
    pub n_shape: usize,
    pub n_expr: usize,
    template: Vec<[f64; 3]>,
    shape: Vec<Vec<[f64; 3]>>,
    expr: Vec<Vec<[f64; 3]>>,
}

impl LandmarkDecoder {
    /// Unrotated morphed landmark positions.
    pub fn morph(&self, expression: &[f64], morphology: &[f64]) -> Vec<[f64; 3]> {
        debug_assert_eq!(expression.len(), self.n_expr);
        debug_assert_eq!(morphology.len(), self.n_shape);
        let mut out = self.template.clone();
        for (i, acc) in out.iter_mut().enumerate() {
            for (k, &m) in morphology.iter().enumerate() {
                let f = self.shape[k][i];
                acc[0] += m * f[0];
                acc[1] += m * f[1];
                acc[2] += m * f[2];
            }
            for (k, &e) in expression.iter().enumerate() {
                let f = self.expr[k][i];
                acc[0] += e * f[0];
                acc[1] += e * f[1];
                acc[2] += e * f[2];
            }
        }
        out
    }

    /// Posed landmark positions, equal to `HeadModel::landmarks_3d`.
    pub fn decode(&self, params: &FaceParams) -> Vec<[f64; 3]> {
        self.morph(&params.expression, &params.morphology)
            .into_iter()
            .map(|v| rotate(params.pose, v))
            .collect()
    }

    pub fn shape_field(&self, k: usize) -> &[[f64; 3]] {
        &self.shape[k]
    }

    pub fn expr_field(&self, k: usize) -> &[[f64; 3]] {
        &self.expr[k]
    }
}

/// Weak-perspective projection: (x, y) = (s px + t_x, s py + t_y), z dropped.
pub fn project_2d(points: &[[f64; 3]], align: &Alignment) -> Result<Landmarks2D> {
    if !(align.scale > 0.0) {
        return Err(Error::invalid(format!(
            "projection scale must be positive, got {}",
            align.scale
        )));
    }
    Ok(Landmarks2D {
        points: points
            .iter()
            .map(|p| [align.scale * p[0] + align.t_x, align.scale * p[1] + align.t_y])
            .collect(),
    })
}

/// Least-squares similarity (scale + translation) mapping `predicted` onto
/// `observed`: with both sets centered, s = sum(<o_c, p_c>) / sum(|p_c|^2)
/// and t = mean(observed) - s * mean(predicted). The scale is clamped to at
/// least 1e-6; a predicted set with zero variance is reported as degenerate.
pub fn solve_alignment(observed: &Landmarks2D, predicted: &Landmarks2D) -> Result<Alignment> {
    if observed.len() != predicted.len() {
        return Err(Error::dimension(format!(
            "observed {} vs predicted {} landmarks",
            observed.len(),
            predicted.len()
        )));
    }
    let n = observed.len();
    if n == 0 {
        return Err(Error::invalid("empty landmark sets"));
    }
    let nf = n as f64;
    let mut mo = [0.0f64; 2];
    let mut mp = [0.0f64; 2];
    for (o, p) in observed.points.iter().zip(&predicted.points) {
        mo[0] += o[0];
        mo[1] += o[1];
        mp[0] += p[0];
        mp[1] += p[1];
    }
    mo[0] /= nf;
    mo[1] /= nf;
    mp[0] /= nf;
    mp[1] /= nf;
    let mut num = 0.0;
    let mut den = 0.0;
    for (o, p) in observed.points.iter().zip(&predicted.points) {
        let oc = [o[0] - mo[0], o[1] - mo[1]];
        let pc = [p[0] - mp[0], p[1] - mp[1]];
        num += oc[0] * pc[0] + oc[1] * pc[1];
        den += pc[0] * pc[0] + pc[1] * pc[1];
    }
    if den == 0.0 {
        return Err(Error::degenerate(
            "predicted landmarks have zero variance; alignment scale is undefined",
        ));
    }
    let scale = (num / den).max(1e-6);
    Ok(Alignment {
        scale,
        t_x: mo[0] - scale * mp[0],
        t_y: mo[1] - scale * mp[1],
    })
}

/// L1 landmark loss: sum_i |x_i - (s xh_i + t_x)| + |y_i - (s yh_i + t_y)|.
pub fn landmark_loss(
    observed: &Landmarks2D,
    predicted: &Landmarks2D,
    align: &Alignment,
) -> Result<f64> {
    if observed.len() != predicted.len() {
        return Err(Error::dimension(format!(
            "observed {} vs predicted {} landmarks",
            observed.len(),
            predicted.len()
        )));
    }
    let mut loss = 0.0;
    for (o, p) in observed.points.iter().zip(&predicted.points) {
        loss += (o[0] - (align.scale * p[0] + align.t_x)).abs();
        loss += (o[1] - (align.scale * p[1] + align.t_y)).abs();
    }
    Ok(loss)
}

/// Squared-residual counterpart of the landmark loss, the quantity the
/// closed-form alignment minimizes.
pub fn alignment_sq_residual(
    observed: &Landmarks2D,
    predicted: &Landmarks2D,
    align: &Alignment,
) -> f64 {
    let mut loss = 0.0;
    for (o, p) in observed.points.iter().zip(&predicted.points) {
        let dx = o[0] - (align.scale * p[0] + align.t_x);
        let dy = o[1] - (align.scale * p[1] + align.t_y);
        loss += dx * dx + dy * dy;
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_model() -> HeadModel {
        build_head_model(7, 64, 3, 4, 12).unwrap()
    }

    fn random_params(model: &HeadModel, seed: u64) -> FaceParams {
        let mut rng = rng::stream(seed);
        FaceParams {
            expression: (0..model.n_expr).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            pose: [
                0.3 * rng.sample::<f64, _>(StandardNormal),
                0.3 * rng.sample::<f64, _>(StandardNormal),
                0.3 * rng.sample::<f64, _>(StandardNormal),
            ],
            morphology: (0..model.n_shape).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        }
    }

    #[test]
    fn build_shape_contract() {
        let model = build_head_model(7, 512, 8, 10, 68).unwrap();
        assert_eq!(model.shape_basis.len(), 8);
        assert_eq!(model.expr_basis.len(), 10);
        for f in model.shape_basis.iter().chain(&model.expr_basis) {
            assert_eq!(f.len(), 512 * 3);
        }
        assert_eq!(model.landmark_indices.len(), 68);
        assert_eq!(model.template.len(), 512 * 3);
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_head_model(7, 512, 8, 10, 68).unwrap();
        let b = build_head_model(7, 512, 8, 10, 68).unwrap();
        assert_eq!(a, b);
        let c = build_head_model(8, 512, 8, 10, 68).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn build_rejects_non_identifiable_dims() {
        // 30 + 30 + 3 > 2 * 8
        assert!(build_head_model(7, 32, 30, 30, 8).is_err());
        assert!(build_head_model(7, 8, 2, 2, 12).is_err()); // n_v < N
        assert!(build_head_model(7, 64, 0, 4, 12).is_err());
    }

    #[test]
    fn landmark_indices_distinct_and_mirrored() {
        let model = build_head_model(7, 512, 8, 10, 68).unwrap();
        let mut seen = std::collections::HashSet::new();
        for &idx in &model.landmark_indices {
            assert!(idx < 512);
            assert!(seen.insert(idx));
        }
        // Pairs come as (left, right) on the same row, mirrored about the
        // template's symmetry plane: x_left = -x_right.
        for pair in model.landmark_indices.chunks_exact(2) {
            let l = model.template_point(pair[0]);
            let r = model.template_point(pair[1]);
            assert!((l[0] + r[0]).abs() < 1e-12);
            assert!((l[1] - r[1]).abs() < 1e-12);
            assert!((l[2] - r[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn bases_orthogonal_with_decaying_spectrum() {
        let model = small_model();
        let all: Vec<&Vec<f64>> = model.shape_basis.iter().chain(&model.expr_basis).collect();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                let cos = dot(a, b) / (norm2(a) * norm2(b));
                assert!(cos.abs() < 1e-10, "fields not orthogonal: {cos}");
            }
        }
        for (k, f) in model.shape_basis.iter().enumerate() {
            let expect = BASIS_SIGMA0 * BASIS_RHO.powi(k as i32);
            assert!((norm2(f) - expect).abs() < 1e-10 * expect);
        }
        for (k, f) in model.expr_basis.iter().enumerate() {
            let expect = BASIS_SIGMA0 * BASIS_RHO.powi(k as i32);
            assert!((norm2(f) - expect).abs() < 1e-10 * expect);
        }
    }

    #[test]
    fn zero_params_give_template() {
        let model = small_model();
        let verts = model.mesh_vertices(&FaceParams::zeros(4, 3)).unwrap();
        for (idx, v) in verts.iter().enumerate() {
            assert_eq!(*v, model.template_point(idx));
        }
    }

    #[test]
    fn unit_expression_axis_adds_one_field() {
        let model = small_model();
        let mut params = FaceParams::zeros(4, 3);
        params.expression[2] = 1.0;
        let verts = model.mesh_vertices(&params).unwrap();
        for (idx, v) in verts.iter().enumerate() {
            let t = model.template_point(idx);
            let f = &model.expr_basis[2][3 * idx..3 * idx + 3];
            assert_eq!(v[0], t[0] + f[0]);
            assert_eq!(v[1], t[1] + f[1]);
            assert_eq!(v[2], t[2] + f[2]);
        }
    }

    #[test]
    fn half_turn_matches_direct_rotation_oracle() {
        // p = (0, 0, pi): independent oracle rotates each template point by
        // 180 degrees about z directly: (x, y, z) -> (-x, -y, z).
        let model = small_model();
        let mut params = FaceParams::zeros(4, 3);
        params.pose = [0.0, 0.0, std::f64::consts::PI];
        let verts = model.mesh_vertices(&params).unwrap();
        for (idx, v) in verts.iter().enumerate() {
            let t = model.template_point(idx);
            assert!((v[0] + t[0]).abs() < 1e-12);
            assert!((v[1] + t[1]).abs() < 1e-12);
            assert!((v[2] - t[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn landmarks_equal_gathered_mesh_vertices() {
        let model = small_model();
        for trial in 0..100 {
            let params = random_params(&model, 1000 + trial);
            let mesh = model.mesh_vertices(&params).unwrap();
            let lms = model.landmarks_3d(&params).unwrap();
            for (lm, &idx) in lms.iter().zip(model.landmark_indices()) {
                assert_eq!(*lm, mesh[idx], "trial {trial} idx {idx}");
            }
        }
    }

    #[test]
    fn landmark_decoder_matches_landmarks_3d_bit_exactly() {
        let model = small_model();
        let decoder = model.landmark_decoder();
        for trial in 0..50 {
            let params = random_params(&model, 2000 + trial);
            let a = model.landmarks_3d(&params).unwrap();
            let b = decoder.decode(&params);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn linearity_at_zero_pose() {
        let model = small_model();
        let mut rng = rng::stream(99);
        for _ in 0..20 {
            let mut draw = |n: usize| -> Vec<f64> {
                (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
            };
            let e1 = draw(4);
            let e2 = draw(4);
            let m = draw(3);
            let base = FaceParams {
                expression: vec![0.0; 4],
                pose: [0.0; 3],
                morphology: m.clone(),
            };
            let p1 = FaceParams { expression: e1.clone(), ..base.clone() };
            let p2 = FaceParams { expression: e2.clone(), ..base.clone() };
            let sum = FaceParams {
                expression: e1.iter().zip(&e2).map(|(a, b)| a + b).collect(),
                ..base.clone()
            };
            let v0 = model.mesh_vertices(&base).unwrap();
            let v1 = model.mesh_vertices(&p1).unwrap();
            let v2 = model.mesh_vertices(&p2).unwrap();
            let vs = model.mesh_vertices(&sum).unwrap();
            for i in 0..v0.len() {
                for c in 0..3 {
                    let lhs = vs[i][c] - v0[i][c];
                    let rhs = (v1[i][c] - v0[i][c]) + (v2[i][c] - v0[i][c]);
                    let tol = 1e-10 * (1.0 + lhs.abs().max(rhs.abs()));
                    assert!((lhs - rhs).abs() <= tol);
                }
            }
        }
    }

    #[test]
    fn rotation_preserves_pairwise_distances() {
        let model = small_model();
        for trial in 0..20 {
            let mut params = random_params(&model, 3000 + trial);
            let posed = model.mesh_vertices(&params).unwrap();
            params.pose = [0.0; 3];
            let flat = model.mesh_vertices(&params).unwrap();
            for i in (0..flat.len()).step_by(7) {
                for j in (i + 1..flat.len()).step_by(11) {
                    let d0 = dist3(flat[i], flat[j]);
                    let d1 = dist3(posed[i], posed[j]);
                    assert!((d0 - d1).abs() <= 1e-8 * (1.0 + d0));
                }
            }
        }
    }

    fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn project_identity_drops_z() {
        let pts = vec![[1.0, 2.0, 9.0], [-0.5, 0.25, -3.0]];
        let out = project_2d(&pts, &Alignment::IDENTITY).unwrap();
        assert_eq!(out.points, vec![[1.0, 2.0], [-0.5, 0.25]]);
    }

    #[test]
    fn project_scales_and_translates() {
        let pts = vec![[1.0, 2.0, 9.0]];
        let align = Alignment { scale: 2.0, t_x: 1.0, t_y: -1.0 };
        let out = project_2d(&pts, &align).unwrap();
        assert_eq!(out.points, vec![[3.0, 3.0]]);
    }

    #[test]
    fn project_rejects_non_positive_scale() {
        let pts = vec![[1.0, 2.0, 3.0]];
        assert!(project_2d(&pts, &Alignment { scale: 0.0, t_x: 0.0, t_y: 0.0 }).is_err());
        assert!(project_2d(&pts, &Alignment { scale: -1.0, t_x: 0.0, t_y: 0.0 }).is_err());
    }

    #[test]
    fn successive_inverse_scales_restore_points() {
        let pts = vec![[0.5, -1.5, 2.0], [2.0, 0.25, -1.0]];
        let half = project_2d(&pts, &Alignment { scale: 0.5, t_x: 0.0, t_y: 0.0 }).unwrap();
        let back: Vec<[f64; 3]> = half.points.iter().map(|p| [p[0], p[1], 0.0]).collect();
        let again = project_2d(&back, &Alignment { scale: 2.0, t_x: 0.0, t_y: 0.0 }).unwrap();
        for (orig, p) in pts.iter().zip(&again.points) {
            assert_eq!(p[0], orig[0]);
            assert_eq!(p[1], orig[1]);
        }
    }

    #[test]
    fn alignment_identity_when_sets_match() {
        let obs = Landmarks2D { points: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]] };
        let a = solve_alignment(&obs, &obs).unwrap();
        assert!((a.scale - 1.0).abs() < 1e-15);
        assert!(a.t_x.abs() < 1e-15);
        assert!(a.t_y.abs() < 1e-15);
    }

    #[test]
    fn alignment_exact_recovery() {
        let pred = Landmarks2D { points: vec![[0.0, 0.0], [1.0, 0.5], [-0.5, 1.0], [2.0, -1.0]] };
        let obs = Landmarks2D {
            points: pred.points.iter().map(|p| [2.0 * p[0] + 1.0, 2.0 * p[1] + 1.0]).collect(),
        };
        let a = solve_alignment(&obs, &pred).unwrap();
        assert!((a.scale - 2.0).abs() < 1e-12);
        assert!((a.t_x - 1.0).abs() < 1e-12);
        assert!((a.t_y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_degenerate_when_predicted_coincident() {
        let obs = Landmarks2D { points: vec![[0.0, 0.0], [1.0, 1.0]] };
        let pred = Landmarks2D { points: vec![[0.5, 0.5], [0.5, 0.5]] };
        match solve_alignment(&obs, &pred) {
            Err(Error::Degenerate(_)) => {}
            other => panic!("expected degeneracy error, got {other:?}"),
        }
    }

    /// Closed form beats every (s, t) candidate on a grid, including the
    /// per-s optimal translation, on the squared-residual objective.
    #[test]
    fn alignment_beats_grid_search_oracle() {
        let mut rng = rng::stream(4242);
        for _ in 0..5 {
            let n = 6;
            let pred = Landmarks2D {
                points: (0..n)
                    .map(|_| [rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)])
                    .collect(),
            };
            let obs = Landmarks2D {
                points: pred
                    .points
                    .iter()
                    .map(|p| {
                        [
                            1.7 * p[0] + 0.3 + 0.05 * rng.sample::<f64, _>(StandardNormal),
                            1.7 * p[1] - 0.2 + 0.05 * rng.sample::<f64, _>(StandardNormal),
                        ]
                    })
                    .collect(),
            };
            let solved = solve_alignment(&obs, &pred).unwrap();
            let best = alignment_sq_residual(&obs, &pred, &solved);
            // Coarser grid than the acceptance suite, same construction.
            let mut s = 0.1;
            while s <= 5.0 {
                let per_s = per_scale_optimal_t(&obs, &pred, s);
                for di in -2i64..=2 {
                    for dj in -2i64..=2 {
                        let cand = Alignment {
                            scale: s,
                            t_x: per_s.0 + di as f64 * 1e-3,
                            t_y: per_s.1 + dj as f64 * 1e-3,
                        };
                        let r = alignment_sq_residual(&obs, &pred, &cand);
                        assert!(best <= r + 1e-12, "grid beat closed form: {best} > {r}");
                    }
                }
                s += 0.01;
            }
        }
    }

    fn per_scale_optimal_t(obs: &Landmarks2D, pred: &Landmarks2D, s: f64) -> (f64, f64) {
        let n = obs.len() as f64;
        let (mut ox, mut oy, mut px, mut py) = (0.0, 0.0, 0.0, 0.0);
        for (o, p) in obs.points.iter().zip(&pred.points) {
            ox += o[0];
            oy += o[1];
            px += p[0];
            py += p[1];
        }
        ((ox - s * px) / n, (oy - s * py) / n)
    }

    #[test]
    fn loss_zero_when_aligned() {
        let pred = Landmarks2D { points: vec![[1.0, 1.0], [2.0, -1.0]] };
        let align = Alignment { scale: 1.5, t_x: 0.2, t_y: -0.3 };
        let obs = project_2d(
            &pred.points.iter().map(|p| [p[0], p[1], 0.0]).collect::<Vec<_>>(),
            &align,
        )
        .unwrap();
        assert_eq!(landmark_loss(&obs, &pred, &align).unwrap(), 0.0);
    }

    #[test]
    fn loss_unit_offsets() {
        let obs = Landmarks2D { points: vec![[0.0, 0.0]] };
        let pred = Landmarks2D { points: vec![[1.0, 1.0]] };
        let loss = landmark_loss(&obs, &pred, &Alignment::IDENTITY).unwrap();
        assert_eq!(loss, 2.0);

        let obs = Landmarks2D { points: vec![[3.0, 4.0]] };
        let pred = Landmarks2D { points: vec![[1.0, 1.0]] };
        let align = Alignment { scale: 2.0, t_x: 1.0, t_y: 2.0 };
        assert_eq!(landmark_loss(&obs, &pred, &align).unwrap(), 0.0);
    }

    #[test]
    fn loss_rejects_length_mismatch() {
        let a = Landmarks2D { points: vec![[0.0, 0.0]] };
        let b = Landmarks2D { points: vec![[0.0, 0.0], [1.0, 1.0]] };
        assert!(landmark_loss(&a, &b, &Alignment::IDENTITY).is_err());
        assert!(solve_alignment(&a, &b).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let model = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save_json(&path).unwrap();
        let back = HeadModel::load_json(&path).unwrap();
        assert_eq!(model, back);
    }
}
