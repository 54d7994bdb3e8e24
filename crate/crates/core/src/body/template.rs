//! The toy body: a 24-joint stick figure with a sparse vertex hull.
//!
//! Vertices are scattered around each bone with a fixed seed. Skinning
//! weights blend the bone's parent joint with its child near the child end,
//! and the joint regressor is a normalised Gaussian kernel around each
//! designed joint location. Rest joints are defined as `W · rest_vertices`,
//! so regressing the unposed mesh reproduces them exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

pub const NUM_BETAS: usize = 10;
pub const DEFAULT_JOINTS: usize = 24;
pub const DEFAULT_VERTICES: usize = 64;

const MAGIC: &str = "BODYTEMPLATE";
const FORMAT_VERSION: u32 = 1;
const ROW_SUM_TOL: f64 = 1e-9;

/// Kinematic tree of the default skeleton (parent of each joint).
pub const DEFAULT_PARENTS: [Option<usize>; DEFAULT_JOINTS] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
    Some(20),
    Some(21),
];

// Designed joint locations in metres, y up, T-pose, pelvis at the origin.
const SKELETON: [[f64; 3]; DEFAULT_JOINTS] = [
    [0.0, 0.0, 0.0],
    [0.08, -0.08, 0.0],
    [-0.08, -0.08, 0.0],
    [0.0, 0.10, -0.01],
    [0.09, -0.48, 0.01],
    [-0.09, -0.48, 0.01],
    [0.0, 0.23, 0.0],
    [0.09, -0.88, -0.03],
    [-0.09, -0.88, -0.03],
    [0.0, 0.30, 0.01],
    [0.10, -0.94, 0.10],
    [-0.10, -0.94, 0.10],
    [0.0, 0.50, -0.01],
    [0.07, 0.42, 0.0],
    [-0.07, 0.42, 0.0],
    [0.0, 0.62, 0.04],
    [0.18, 0.45, -0.01],
    [-0.18, 0.45, -0.01],
    [0.44, 0.45, -0.02],
    [-0.44, 0.45, -0.02],
    [0.70, 0.45, 0.0],
    [-0.70, 0.45, 0.0],
    [0.78, 0.44, 0.0],
    [-0.78, 0.44, 0.0],
];

#[derive(Debug, Clone, PartialEq)]
pub struct BodyTemplate {
    pub parents: Vec<Option<usize>>,
    pub rest_vertices: Vec<[f64; 3]>,
    pub rest_joints: Vec<[f64; 3]>,
    /// V×J, row-major.
    pub skin_weights: Vec<f64>,
    /// (3V)×NUM_BETAS, row-major; row 3v+d is coordinate d of vertex v.
    pub shape_basis: Vec<f64>,
    /// J×V, row-major.
    pub joint_regressor: Vec<f64>,
}

impl BodyTemplate {
    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.rest_vertices.len()
    }

    /// Default template: 24 joints, 64 vertices, seed 0.
    pub fn standard() -> Self {
        BodyTemplate::generate(DEFAULT_VERTICES, 0).expect("default template is valid")
    }

    /// Procedural template with `num_vertices` hull vertices.
    pub fn generate(num_vertices: usize, seed: u64) -> Result<Self> {
        if num_vertices == 0 {
            return Err(Error::Validation("template needs at least one vertex".into()));
        }
        let j = DEFAULT_JOINTS;
        let parents = DEFAULT_PARENTS.to_vec();
        let mut rng = rng::stream(seed, "template", 0);
        let bones: Vec<usize> = (1..j).collect();

        let mut rest_vertices = Vec::with_capacity(num_vertices);
        let mut radial = Vec::with_capacity(num_vertices);
        let mut bone_of = Vec::with_capacity(num_vertices);
        let mut skin_weights = vec![0.0; num_vertices * j];
        for v in 0..num_vertices {
            let child = bones[v % bones.len()];
            let parent = parents[child].expect("non-root");
            let (p, c) = (SKELETON[parent], SKELETON[child]);
            let t: f64 = rng.gen_range(0.0..1.0);
            let axis = sub(&c, &p);
            let dir = random_perpendicular(&axis, &mut rng);
            let r: f64 = rng.gen_range(0.03..0.06);
            let pos = std::array::from_fn(|d| p[d] + t * axis[d] + r * dir[d]);
            rest_vertices.push(pos);
            radial.push(dir);
            bone_of.push(v % bones.len());
            let to_child = 0.5 * t * t;
            skin_weights[v * j + parent] = 1.0 - to_child;
            skin_weights[v * j + child] = to_child;
        }

        let sigma2 = 2.0 * 0.05f64.powi(2);
        let mut joint_regressor = vec![0.0; j * num_vertices];
        for (jj, target) in SKELETON.iter().enumerate() {
            let d2: Vec<f64> = rest_vertices.iter().map(|v| dist2(v, target)).collect();
            let dmin = d2.iter().cloned().fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = d2.iter().map(|d| (-(d - dmin) / sigma2).exp()).collect();
            let s: f64 = w.iter().sum();
            for (v, wv) in w.iter().enumerate() {
                joint_regressor[jj * num_vertices + v] = wv / s;
            }
        }
        let rest_joints = regress(&joint_regressor, &rest_vertices);

        let bone_noise: Vec<f64> = (0..(NUM_BETAS - 4) * bones.len())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let mut shape_basis = vec![0.0; 3 * num_vertices * NUM_BETAS];
        for (v, pos) in rest_vertices.iter().enumerate() {
            let row = |d: usize, k: usize| (3 * v + d) * NUM_BETAS + k;
            for d in 0..3 {
                shape_basis[row(d, 0)] = 0.05 * pos[d];
            }
            shape_basis[row(1, 1)] = 0.05 * pos[1];
            shape_basis[row(0, 2)] = 0.05 * pos[0];
            shape_basis[row(2, 3)] = 0.1 * pos[2] + 0.01;
            for k in 4..NUM_BETAS {
                let n = bone_noise[(k - 4) * bones.len() + bone_of[v]];
                for d in 0..3 {
                    shape_basis[row(d, k)] = 0.01 * n * radial[v][d];
                }
            }
        }

        let tmpl = BodyTemplate {
            parents,
            rest_vertices,
            rest_joints,
            skin_weights,
            shape_basis,
            joint_regressor,
        };
        tmpl.validate()?;
        Ok(tmpl)
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.num_joints();
        let v = self.num_vertices();
        if j == 0 || v == 0 {
            return Err(Error::Validation("template needs joints and vertices".into()));
        }
        let roots = self.parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 || self.parents[0].is_some() {
            return Err(Error::Validation(format!(
                "kinematic tree needs exactly one root at index 0, found {roots} roots"
            )));
        }
        for (k, p) in self.parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < k => {}
                _ => {
                    return Err(Error::Validation(format!(
                        "joint {k} has parent {p:?}; parents must precede children"
                    )))
                }
            }
        }
        check_len("rest_joints", self.rest_joints.len(), j)?;
        check_len("skin_weights", self.skin_weights.len(), v * j)?;
        check_len("shape_basis", self.shape_basis.len(), 3 * v * NUM_BETAS)?;
        check_len("joint_regressor", self.joint_regressor.len(), j * v)?;
        check_stochastic("skin_weights", &self.skin_weights, j)?;
        check_stochastic("joint_regressor", &self.joint_regressor, v)?;
        let all_finite = self
            .rest_vertices
            .iter()
            .chain(&self.rest_joints)
            .flatten()
            .chain(&self.skin_weights)
            .chain(&self.shape_basis)
            .chain(&self.joint_regressor)
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::Validation("template contains non-finite values".into()));
        }
        Ok(())
    }

    /// Flat text form: a header line, counts, then named numeric blocks.
    /// Numbers are written in shortest round-trip form, so loading is exact.
    pub fn to_text(&self) -> String {
        let (j, v) = (self.num_joints(), self.num_vertices());
        let mut s = String::new();
        writeln!(s, "{MAGIC} {FORMAT_VERSION}").unwrap();
        writeln!(s, "joints {j}").unwrap();
        writeln!(s, "vertices {v}").unwrap();
        writeln!(s, "betas {NUM_BETAS}").unwrap();
        writeln!(s, "parent {j}").unwrap();
        let parents: Vec<String> = self
            .parents
            .iter()
            .map(|p| p.map_or("-1".to_string(), |p| p.to_string()))
            .collect();
        writeln!(s, "{}", parents.join(" ")).unwrap();
        let flat3 = |pts: &[[f64; 3]]| pts.iter().flatten().copied().collect::<Vec<_>>();
        write_block(&mut s, "rest_vertices", v, 3, &flat3(&self.rest_vertices));
        write_block(&mut s, "rest_joints", j, 3, &flat3(&self.rest_joints));
        write_block(&mut s, "skin_weights", v, j, &self.skin_weights);
        write_block(&mut s, "shape_basis", 3 * v, NUM_BETAS, &self.shape_basis);
        write_block(&mut s, "joint_regressor", j, v, &self.joint_regressor);
        writeln!(s, "end").unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = TextLines::new(text);
        let header = lines.next_line()?;
        let mut h = header.split_whitespace();
        if h.next() != Some(MAGIC) {
            return Err(lines.error("missing BODYTEMPLATE header"));
        }
        let version: u32 = h
            .next()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| lines.error("missing version"))?;
        if version != FORMAT_VERSION {
            return Err(lines.error(format!("unsupported version {version}")));
        }
        let j = lines.keyed_count("joints")?;
        let v = lines.keyed_count("vertices")?;
        let betas = lines.keyed_count("betas")?;
        if betas != NUM_BETAS {
            return Err(lines.error(format!("expected {NUM_BETAS} betas, found {betas}")));
        }
        let pj = lines.keyed_count("parent")?;
        if pj != j {
            return Err(lines.error("parent count differs from joint count"));
        }
        let parent_line = lines.next_line()?;
        let parents: Vec<Option<usize>> = parent_line
            .split_whitespace()
            .map(|tok| match tok.parse::<i64>() {
                Ok(-1) => Ok(None),
                Ok(p) if p >= 0 => Ok(Some(p as usize)),
                _ => Err(lines.error(format!("bad parent index {tok}"))),
            })
            .collect::<Result<_>>()?;
        if parents.len() != j {
            return Err(lines.error("wrong number of parent indices"));
        }
        let to3 = |flat: Vec<f64>| flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let rest_vertices = to3(lines.block("rest_vertices", v, 3)?);
        let rest_joints = to3(lines.block("rest_joints", j, 3)?);
        let skin_weights = lines.block("skin_weights", v, j)?;
        let shape_basis = lines.block("shape_basis", 3 * v, NUM_BETAS)?;
        let joint_regressor = lines.block("joint_regressor", j, v)?;
        if lines.next_line()?.trim() != "end" {
            return Err(lines.error("missing end marker"));
        }
        let tmpl = BodyTemplate {
            parents,
            rest_vertices,
            rest_joints,
            skin_weights,
            shape_basis,
            joint_regressor,
        };
        tmpl.validate()?;
        Ok(tmpl)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        BodyTemplate::from_text(&fs::read_to_string(path)?)
    }
}

/// X = W · vertices.
pub(crate) fn regress(w: &[f64], vertices: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let v = vertices.len();
    w.chunks_exact(v)
        .map(|row| {
            let mut out = [0.0; 3];
            for (wv, p) in row.iter().zip(vertices) {
                for d in 0..3 {
                    out[d] += wv * p[d];
                }
            }
            out
        })
        .collect()
}

fn check_len(name: &str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::mismatch(format!("length of {name}"), expected, found));
    }
    Ok(())
}

fn check_stochastic(name: &str, m: &[f64], cols: usize) -> Result<()> {
    for (i, row) in m.chunks_exact(cols).enumerate() {
        if row.iter().any(|&w| w < 0.0) {
            return Err(Error::Validation(format!("{name} row {i} has a negative entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Validation(format!("{name} row {i} sums to {s}")));
        }
    }
    Ok(())
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = sub(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

fn random_perpendicular<R: Rng>(axis: &[f64; 3], rng: &mut R) -> [f64; 3] {
    let n = dist2(axis, &[0.0; 3]).sqrt();
    let a = axis.map(|x| x / n);
    loop {
        let r: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let proj = r[0] * a[0] + r[1] * a[1] + r[2] * a[2];
        let p: [f64; 3] = std::array::from_fn(|d| r[d] - proj * a[d]);
        let pn = dist2(&p, &[0.0; 3]).sqrt();
        if pn > 1e-3 {
            return p.map(|x| x / pn);
        }
    }
}

fn write_block(s: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]) {
    writeln!(s, "{name} {rows} {cols}").unwrap();
    for row in data.chunks(cols.max(1)) {
        let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        writeln!(s, "{}", line.join(" ")).unwrap();
    }
}

struct TextLines<'a> {
    lines: std::str::Lines<'a>,
    offset: u64,
    line_no: usize,
}

impl<'a> TextLines<'a> {
    fn new(text: &'a str) -> Self {
        TextLines {
            lines: text.lines(),
            offset: 0,
            line_no: 0,
        }
    }

    fn error(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.offset, format!("line {}: {}", self.line_no, msg.into()))
    }

    fn next_line(&mut self) -> Result<&'a str> {
        let line = self
            .lines
            .next()
            .ok_or_else(|| self.error("unexpected end of file"))?;
        self.line_no += 1;
        self.offset += line.len() as u64 + 1;
        Ok(line)
    }

    fn keyed_count(&mut self, key: &str) -> Result<usize> {
        let line = self.next_line()?;
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(self.error(format!("expected '{key}'")));
        }
        it.next()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| self.error(format!("bad count for '{key}'")))
    }

    fn block(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let mut it = line.split_whitespace();
        let ok = it.next() == Some(name)
            && it.next().and_then(|x| x.parse::<usize>().ok()) == Some(rows)
            && it.next().and_then(|x| x.parse::<usize>().ok()) == Some(cols);
        if !ok {
            return Err(self.error(format!("expected block '{name} {rows} {cols}'")));
        }
        let mut out = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.next_line()?;
            let before = out.len();
            for tok in line.split_whitespace() {
                out.push(
                    tok.parse::<f64>()
                        .map_err(|_| self.error(format!("bad number '{tok}' in {name}")))?,
                );
            }
            if out.len() - before != cols {
                return Err(self.error(format!("row of {name} has {} values, expected {cols}", out.len() - before)));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_template_is_valid() {
        let t = BodyTemplate::standard();
        assert_eq!(t.num_joints(), 24);
        assert_eq!(t.num_vertices(), 64);
        t.validate().unwrap();
        assert_eq!(regress(&t.joint_regressor, &t.rest_vertices), t.rest_joints);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = BodyTemplate::generate(40, 9).unwrap();
        let back = BodyTemplate::from_text(&t.to_text()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn cyclic_or_multi_root_tree_rejected() {
        let mut t = BodyTemplate::standard();
        t.parents[5] = None;
        assert!(matches!(t.validate(), Err(Error::Validation(_))));
        let mut t = BodyTemplate::standard();
        t.parents[3] = Some(7);
        assert!(matches!(t.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn non_stochastic_weights_rejected() {
        let mut t = BodyTemplate::standard();
        t.skin_weights[0] += 1e-6;
        assert!(t.validate().is_err());
    }

    #[test]
    fn truncated_text_reports_offset() {
        let text = BodyTemplate::standard().to_text();
        let cut = &text[..text.len() / 2];
        match BodyTemplate::from_text(cut) {
            Err(Error::Parse { offset, .. }) => assert!(offset > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
