//! Character pose math: morph-target blending, forward kinematics, linear
//! blend skinning, Perlin perturbation of animation parameters and pose
//! interpolation. Produces data only.

use std::f64::consts::PI;
use std::io::Write;

use thiserror::Error;

pub type Vec3 = [f64; 3];

#[derive(Debug, Error)]
pub enum AnimationError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("expected {expected} bone angles, got {got}")]
    AngleCountMismatch { expected: usize, got: usize },
    #[error("vertex {vertex} skin weights sum to {sum}")]
    WeightSumError { vertex: usize, sum: f64 },
    #[error("pose layouts differ")]
    LayoutMismatch,
    #[error("invalid skeleton: {0}")]
    BadSkeleton(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
}

impl Mesh {
    /// CSV: `index,x,y,z`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,x,y,z")?;
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(out, "{i},{},{},{}", v[0], v[1], v[2])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphTarget {
    pub label: String,
    pub deltas: Vec<Vec3>,
}

/// `v_i = base_i + Σ_j w_j · delta_{j,i}`.
pub fn blend_morphs(base: &Mesh, targets: &[MorphTarget], weights: &[f64]) -> Result<Mesh, AnimationError> {
    if weights.len() != targets.len() {
        return Err(AnimationError::LengthMismatch {
            expected: targets.len(),
            got: weights.len(),
        });
    }
    let n = base.vertices.len();
    if let Some(t) = targets.iter().find(|t| t.deltas.len() != n) {
        return Err(AnimationError::LengthMismatch {
            expected: n,
            got: t.deltas.len(),
        });
    }
    let mut vertices = base.vertices.clone();
    for (t, &w) in targets.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (v, d) in vertices.iter_mut().zip(&t.deltas) {
            for k in 0..3 {
                v[k] += w * d[k];
            }
        }
    }
    Ok(Mesh { vertices })
}

/// Rigid transform: rotation matrix then translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub rot: [[f64; 3]; 3],
    pub trans: Vec3,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        rot: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        trans: [0.0; 3],
    };

    pub fn translation(t: Vec3) -> Self {
        Self {
            trans: t,
            ..Self::IDENTITY
        }
    }

    /// Rotation by `angle` about a unit `axis` (Rodrigues).
    pub fn rotation(axis: Vec3, angle: f64) -> Self {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let [x, y, z] = axis.map(|c| c / norm);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Self {
            rot: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
            trans: [0.0; 3],
        }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let r = &self.rot;
        [
            r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2] + self.trans[0],
            r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2] + self.trans[1],
            r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2] + self.trans[2],
        ]
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Transform) -> Transform {
        let mut rot = [[0.0; 3]; 3];
        for (i, row) in rot.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.rot[i][k] * other.rot[k][j]).sum();
            }
        }
        Transform {
            rot,
            trans: self.apply(other.trans),
        }
    }

    pub fn inverse(&self) -> Transform {
        let mut rot = [[0.0; 3]; 3];
        for (i, row) in rot.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.rot[j][i];
            }
        }
        let t = self.trans;
        let inv = Transform { rot, trans: [0.0; 3] };
        let r = inv.apply(t);
        Transform {
            rot,
            trans: [-r[0], -r[1], -r[2]],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bone {
    pub name: String,
    pub parent: Option<usize>,
    /// Rest offset of this bone's origin in the parent's frame.
    pub offset: Vec3,
    pub length: f64,
    /// Rotation axis in the bone's own frame.
    pub axis: Vec3,
}

/// Bones in topological order; bone 0 is the only root.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    bones: Vec<Bone>,
}

impl Skeleton {
    pub fn new(bones: Vec<Bone>) -> Result<Self, AnimationError> {
        if bones.is_empty() {
            return Err(AnimationError::BadSkeleton("no bones".into()));
        }
        for (i, b) in bones.iter().enumerate() {
            match (i, b.parent) {
                (0, None) => {}
                (0, Some(_)) => return Err(AnimationError::BadSkeleton("bone 0 must be the root".into())),
                (_, None) => return Err(AnimationError::BadSkeleton(format!("second root {}", b.name))),
                (_, Some(p)) if p >= i => {
                    return Err(AnimationError::BadSkeleton(format!(
                        "bone {} has parent {p} not before it",
                        b.name
                    )))
                }
                _ => {}
            }
        }
        Ok(Self { bones })
    }

    /// Chain of `lengths.len()` bones along +x rotating about +z.
    pub fn planar_chain(lengths: &[f64]) -> Result<Self, AnimationError> {
        let bones = lengths
            .iter()
            .enumerate()
            .map(|(i, &len)| Bone {
                name: format!("bone{i}"),
                parent: i.checked_sub(1),
                offset: if i == 0 { [0.0; 3] } else { [lengths[i - 1], 0.0, 0.0] },
                length: len,
                axis: [0.0, 0.0, 1.0],
            })
            .collect();
        Self::new(bones)
    }

    /// Planar upper-body rig of the mime character.
    pub fn character() -> Self {
        let bone = |name: &str, parent: Option<usize>, offset: Vec3, length: f64| Bone {
            name: name.into(),
            parent,
            offset,
            length,
            axis: [0.0, 0.0, 1.0],
        };
        Self::new(vec![
            bone("pelvis", None, [0.0, 0.0, 0.0], 0.5),
            bone("spine", Some(0), [0.0, 0.5, 0.0], 0.6),
            bone("neck", Some(1), [0.0, 0.6, 0.0], 0.15),
            bone("head", Some(2), [0.0, 0.15, 0.0], 0.3),
            bone("upper_arm_l", Some(1), [-0.25, 0.55, 0.0], 0.35),
            bone("lower_arm_l", Some(4), [-0.35, 0.0, 0.0], 0.3),
            bone("hand_l", Some(5), [-0.3, 0.0, 0.0], 0.1),
            bone("upper_arm_r", Some(1), [0.25, 0.55, 0.0], 0.35),
            bone("lower_arm_r", Some(7), [0.35, 0.0, 0.0], 0.3),
            bone("hand_r", Some(8), [0.3, 0.0, 0.0], 0.1),
        ])
        .expect("static rig is valid")
    }

    pub fn bones(&self) -> &[Bone] {
        &self.bones
    }

    pub fn len(&self) -> usize {
        self.bones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bones.is_empty()
    }

    pub fn is_ancestor(&self, ancestor: usize, mut bone: usize) -> bool {
        loop {
            if bone == ancestor {
                return true;
            }
            match self.bones[bone].parent {
                Some(p) => bone = p,
                None => return false,
            }
        }
    }
}

/// Global transform of every bone: `global(b) = global(parent) ∘ T(offset) ∘ R(axis, angle)`.
pub fn forward_kinematics(skel: &Skeleton, angles: &[f64]) -> Result<Vec<Transform>, AnimationError> {
    if angles.len() != skel.len() {
        return Err(AnimationError::AngleCountMismatch {
            expected: skel.len(),
            got: angles.len(),
        });
    }
    let mut out: Vec<Transform> = Vec::with_capacity(skel.len());
    for (b, &angle) in skel.bones.iter().zip(angles) {
        let local = Transform::translation(b.offset).compose(&Transform::rotation(b.axis, angle));
        let global = match b.parent {
            Some(p) => out[p].compose(&local),
            None => local,
        };
        out.push(global);
    }
    Ok(out)
}

/// Tip of `bone` under the given global transforms.
pub fn bone_tip(skel: &Skeleton, transforms: &[Transform], bone: usize) -> Vec3 {
    transforms[bone].apply([skel.bones[bone].length, 0.0, 0.0])
}

/// Per-vertex `(bone, weight)` influences.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinWeights(pub Vec<Vec<(usize, f64)>>);

impl SkinWeights {
    pub fn validate(&self) -> Result<(), AnimationError> {
        for (i, ws) in self.0.iter().enumerate() {
            let sum: f64 = ws.iter().map(|(_, w)| w).sum();
            if (sum - 1.0).abs() > 1e-6 || ws.iter().any(|(_, w)| *w < 0.0) {
                return Err(AnimationError::WeightSumError { vertex: i, sum });
            }
        }
        Ok(())
    }
}

/// Linear blend skinning: `v' = Σ_b w_b · (T_b ∘ T_rest_b⁻¹)(v)`.
pub fn skin(
    base: &Mesh,
    transforms: &[Transform],
    weights: &SkinWeights,
    rest: &[Transform],
) -> Result<Mesh, AnimationError> {
    if weights.0.len() != base.vertices.len() {
        return Err(AnimationError::LengthMismatch {
            expected: base.vertices.len(),
            got: weights.0.len(),
        });
    }
    if transforms.len() != rest.len() {
        return Err(AnimationError::LengthMismatch {
            expected: rest.len(),
            got: transforms.len(),
        });
    }
    weights.validate()?;
    let skinning: Vec<Transform> = transforms
        .iter()
        .zip(rest)
        .map(|(t, r)| t.compose(&r.inverse()))
        .collect();
    let vertices = base
        .vertices
        .iter()
        .zip(&weights.0)
        .map(|(v, ws)| {
            let mut acc = [0.0; 3];
            for &(b, w) in ws {
                let p = skinning[b].apply(*v);
                for k in 0..3 {
                    acc[k] += w * p[k];
                }
            }
            acc
        })
        .collect();
    Ok(Mesh { vertices })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice_gradient(seed: u64, i: i64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(i as u64));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Classic 1-D gradient noise in [-1, 1]; zero on integer lattice points.
pub fn perlin_1d(seed: u64, t: f64) -> f64 {
    let i0 = t.floor();
    let f = t - i0;
    let i0 = i0 as i64;
    let g0 = lattice_gradient(seed, i0);
    let g1 = lattice_gradient(seed, i0 + 1);
    let s = f * f * (3.0 - 2.0 * f);
    let n0 = g0 * f;
    let n1 = g1 * (f - 1.0);
    // the raw interpolant peaks at 0.5 in magnitude
    (2.0 * (n0 + s * (n1 - n0))).clamp(-1.0, 1.0)
}

/// Temporal smoothing kernel applied to the noise stream.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseKernel {
    pub taps: Vec<f64>,
    /// Spacing of the taps, in noise-time units.
    pub step: f64,
}

impl Default for NoiseKernel {
    fn default() -> Self {
        Self {
            taps: vec![1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0],
            step: 0.25,
        }
    }
}

impl NoiseKernel {
    /// Largest possible |response| to noise bounded by 1.
    pub fn max_response(&self) -> f64 {
        self.taps.iter().map(|w| w.abs()).sum()
    }

    pub fn smoothed(&self, seed: u64, t: f64) -> f64 {
        let centre = (self.taps.len() / 2) as f64;
        self.taps
            .iter()
            .enumerate()
            .map(|(j, w)| w * perlin_1d(seed, t + (j as f64 - centre) * self.step))
            .sum()
    }
}

/// Bone angles plus morph weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseParams {
    pub angles: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PoseParams {
    pub fn new(angles: Vec<f64>, weights: Vec<f64>) -> Self {
        Self {
            angles,
            weights: weights.into_iter().map(|w| w.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn zeros(bones: usize, morphs: usize) -> Self {
        Self::new(vec![0.0; bones], vec![0.0; morphs])
    }

    /// CSV: `kind,index,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "kind,index,value")?;
        for (i, a) in self.angles.iter().enumerate() {
            writeln!(out, "angle,{i},{a}")?;
        }
        for (i, w) in self.weights.iter().enumerate() {
            writeln!(out, "weight,{i},{w}")?;
        }
        Ok(())
    }
}

/// Seed of the noise stream driving parameter `k`.
pub fn derived_seed(seed: u64, k: usize) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(k as u64 + 1)))
}

/// Adds smoothed Perlin noise to every parameter; weights are re-clamped.
pub fn perturb_params(params: &PoseParams, seed: u64, t: f64, amplitude: f64, kernel: &NoiseKernel) -> PoseParams {
    if amplitude == 0.0 {
        return params.clone();
    }
    let mut k = 0;
    let mut next = |v: f64| {
        let out = v + amplitude * kernel.smoothed(derived_seed(seed, k), t);
        k += 1;
        out
    };
    let angles = params.angles.iter().map(|&a| next(a)).collect();
    let weights = params.weights.iter().map(|&w| next(w).clamp(0.0, 1.0)).collect();
    PoseParams { angles, weights }
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x <= -PI {
        x += 2.0 * PI;
    } else if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Shortest-arc angle interpolation, linear weight interpolation.
pub fn blend_poses(a: &PoseParams, b: &PoseParams, t: f64) -> Result<PoseParams, AnimationError> {
    if a.angles.len() != b.angles.len() || a.weights.len() != b.weights.len() {
        return Err(AnimationError::LayoutMismatch);
    }
    if t <= 0.0 {
        return Ok(a.clone());
    }
    if t >= 1.0 {
        return Ok(b.clone());
    }
    let angles = a
        .angles
        .iter()
        .zip(&b.angles)
        .map(|(x, y)| x + t * wrap_angle(y - x))
        .collect();
    let weights = a
        .weights
        .iter()
        .zip(&b.weights)
        .map(|(x, y)| (x + t * (y - x)).clamp(0.0, 1.0))
        .collect();
    Ok(PoseParams { angles, weights })
}

/// Labels of the shipped morph-target library (42 primitives).
pub const MORPH_LABELS: [&str; 42] = [
    "BrowRaiseInnerL",
    "BrowRaiseInnerR",
    "BrowRaiseOuterL",
    "BrowRaiseOuterR",
    "BrowLowerL",
    "BrowLowerR",
    "BrowSqueeze",
    "EyeBlinkL",
    "EyeBlinkR",
    "EyeWideL",
    "EyeWideR",
    "EyeSquintL",
    "EyeSquintR",
    "CheekPuffL",
    "CheekPuffR",
    "CheekRaiseL",
    "CheekRaiseR",
    "NoseSneer",
    "JawOpen",
    "JawLeft",
    "JawRight",
    "MouthSmileL",
    "MouthSmileR",
    "MouthFrownL",
    "MouthFrownR",
    "MouthPucker",
    "MouthFunnel",
    "MouthStretchL",
    "MouthStretchR",
    "MouthPress",
    "MouthRollUpper",
    "MouthRollLower",
    "VisemeAA",
    "VisemeEE",
    "VisemeOO",
    "VisemeFV",
    "VisemeMBP",
    "TongueOut",
    "TongueUp",
    "TongueLeft",
    "TongueRight",
    "TongueCurl",
];

/// Low-poly face: a 9x9 vertex grid on a shallow dome, x and y in [-1, 1].
pub fn face_mesh() -> Mesh {
    let mut vertices = Vec::with_capacity(81);
    for j in 0..9 {
        for i in 0..9 {
            let x = i as f64 / 4.0 - 1.0;
            let y = 1.0 - j as f64 / 4.0;
            let z = 0.5 * (1.0 - 0.5 * (x * x + y * y)).max(0.0);
            vertices.push([x, y, z]);
        }
    }
    Mesh { vertices }
}

fn target_field(label: &str) -> (Vec3, f64, Vec3) {
    // (centre, radius, displacement direction)
    let side = if label.ends_with('L') {
        -1.0
    } else if label.ends_with('R') {
        1.0
    } else {
        0.0
    };
    let s = |x: f64| if side == 0.0 { 0.0 } else { side * x };
    match label {
        l if l.starts_with("BrowRaiseInner") => ([s(0.25), 0.6, 0.0], 0.3, [0.0, 0.15, 0.0]),
        l if l.starts_with("BrowRaiseOuter") => ([s(0.65), 0.6, 0.0], 0.3, [0.0, 0.15, 0.0]),
        l if l.starts_with("BrowLower") => ([s(0.45), 0.6, 0.0], 0.35, [0.0, -0.12, 0.0]),
        "BrowSqueeze" => ([0.0, 0.55, 0.0], 0.35, [0.0, -0.05, 0.05]),
        l if l.starts_with("EyeBlink") => ([s(0.45), 0.3, 0.0], 0.2, [0.0, -0.1, 0.0]),
        l if l.starts_with("EyeWide") => ([s(0.45), 0.3, 0.0], 0.25, [0.0, 0.08, 0.0]),
        l if l.starts_with("EyeSquint") => ([s(0.45), 0.25, 0.0], 0.25, [0.0, 0.05, -0.02]),
        l if l.starts_with("CheekPuff") => ([s(0.55), -0.2, 0.0], 0.35, [s(0.05), 0.0, 0.12]),
        l if l.starts_with("CheekRaise") => ([s(0.5), -0.1, 0.0], 0.3, [0.0, 0.1, 0.02]),
        "NoseSneer" => ([0.0, 0.05, 0.0], 0.25, [0.0, 0.06, 0.02]),
        "JawOpen" => ([0.0, -0.8, 0.0], 0.6, [0.0, -0.25, 0.0]),
        "JawLeft" => ([0.0, -0.8, 0.0], 0.6, [-0.12, 0.0, 0.0]),
        "JawRight" => ([0.0, -0.8, 0.0], 0.6, [0.12, 0.0, 0.0]),
        l if l.starts_with("MouthSmile") => ([s(0.35), -0.45, 0.0], 0.25, [s(0.08), 0.12, 0.0]),
        l if l.starts_with("MouthFrown") => ([s(0.35), -0.45, 0.0], 0.25, [s(0.04), -0.12, 0.0]),
        "MouthPucker" => ([0.0, -0.45, 0.0], 0.3, [0.0, 0.0, 0.15]),
        "MouthFunnel" => ([0.0, -0.45, 0.0], 0.3, [0.0, -0.05, 0.12]),
        l if l.starts_with("MouthStretch") => ([s(0.35), -0.5, 0.0], 0.25, [s(0.1), -0.04, 0.0]),
        "MouthPress" => ([0.0, -0.45, 0.0], 0.25, [0.0, 0.03, -0.03]),
        "MouthRollUpper" => ([0.0, -0.38, 0.0], 0.2, [0.0, -0.05, -0.05]),
        "MouthRollLower" => ([0.0, -0.52, 0.0], 0.2, [0.0, 0.05, -0.05]),
        "VisemeAA" => ([0.0, -0.55, 0.0], 0.35, [0.0, -0.18, 0.0]),
        "VisemeEE" => ([0.0, -0.45, 0.0], 0.4, [0.0, -0.05, -0.02]),
        "VisemeOO" => ([0.0, -0.5, 0.0], 0.3, [0.0, -0.08, 0.1]),
        "VisemeFV" => ([0.0, -0.52, 0.0], 0.25, [0.0, 0.06, -0.04]),
        "VisemeMBP" => ([0.0, -0.45, 0.0], 0.25, [0.0, 0.0, -0.06]),
        "TongueOut" => ([0.0, -0.5, 0.0], 0.2, [0.0, -0.05, 0.2]),
        "TongueUp" => ([0.0, -0.45, 0.0], 0.2, [0.0, 0.08, 0.05]),
        "TongueLeft" => ([-0.1, -0.5, 0.0], 0.2, [-0.1, 0.0, 0.05]),
        "TongueRight" => ([0.1, -0.5, 0.0], 0.2, [0.1, 0.0, 0.05]),
        "TongueCurl" => ([0.0, -0.48, 0.0], 0.2, [0.0, 0.05, 0.08]),
        _ => ([0.0, 0.0, 0.0], 0.2, [0.0, 0.0, 0.01]),
    }
}

/// The procedurally generated 42-entry morph library on [`face_mesh`].
pub fn morph_library() -> Vec<MorphTarget> {
    let base = face_mesh();
    MORPH_LABELS
        .iter()
        .map(|&label| {
            let (c, r, d) = target_field(label);
            let deltas = base
                .vertices
                .iter()
                .map(|v| {
                    let dist2 = (v[0] - c[0]).powi(2) + (v[1] - c[1]).powi(2);
                    let falloff = (-dist2 / (r * r)).exp();
                    d.map(|x| x * falloff)
                })
                .collect();
            MorphTarget {
                label: label.to_string(),
                deltas,
            }
        })
        .collect()
}

/// Canonical morph weights of a recognised expression, for mimicry.
pub fn expression_weights(expression: &str) -> Vec<(&'static str, f64)> {
    match expression {
        "Smile" => vec![("MouthSmileL", 1.0), ("MouthSmileR", 1.0), ("CheekRaiseL", 0.6), ("CheekRaiseR", 0.6)],
        "Frown" => vec![("MouthFrownL", 1.0), ("MouthFrownR", 1.0), ("BrowLowerL", 0.7), ("BrowLowerR", 0.7)],
        "EyebrowRaise" => vec![
            ("BrowRaiseInnerL", 1.0),
            ("BrowRaiseInnerR", 1.0),
            ("BrowRaiseOuterL", 0.8),
            ("BrowRaiseOuterR", 0.8),
            ("EyeWideL", 0.4),
            ("EyeWideR", 0.4),
        ],
        _ => Vec::new(),
    }
}

/// Dense weight vector over [`MORPH_LABELS`].
pub fn weight_vector(pairs: &[(&str, f64)]) -> Vec<f64> {
    let mut w = vec![0.0; MORPH_LABELS.len()];
    for (label, v) in pairs {
        if let Some(i) = MORPH_LABELS.iter().position(|l| l == label) {
            w[i] = v.clamp(0.0, 1.0);
        }
    }
    w
}
