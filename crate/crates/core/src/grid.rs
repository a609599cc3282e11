// SPDX-License-Identifier: Apache-2.0

//! Uniform periodic discretization of the unit torus.
//!
//! Scalars live at nodes `x = (i h, j h)`. Vector fields are staggered: the
//! first component sits on x-faces `((i + 1/2) h, j h)` and the second on
//! y-faces `(i h, (j + 1/2) h)`. With this layout the forward-difference
//! [`gradient`] and backward-difference [`divergence`] are exact negative
//! adjoints, so `div(A grad z)` and `div C` telescope to zero total mass.
//!
//! Storage is row-major with the x1 index as the slow axis:
//! `values[i * n + j]`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
}

impl Grid {
    /// Square grid with `n` cells per axis. `n` must be even and at least 4.
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::Config(format!("grid needs n >= 4, got {n}")));
        }
        if !n.is_multiple_of(2) {
            return Err(Error::Config(format!("grid needs even n, got {n}")));
        }
        Ok(Grid { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of cells, `n²`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index with periodic wrap in both axes.
    #[inline]
    pub fn index(&self, i: isize, j: isize) -> usize {
        let n = self.n as isize;
        (i.rem_euclid(n) * n + j.rem_euclid(n)) as usize
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        [i as f64 * h, j as f64 * h]
    }

    #[inline]
    pub fn x_face(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        [(i as f64 + 0.5) * h, j as f64 * h]
    }

    #[inline]
    pub fn y_face(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        [i as f64 * h, (j as f64 + 0.5) * h]
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "n={} vs n={}",
                self.n, other.n
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!(
                "non-finite value at index {bad}"
            )));
        }
        Ok(ScalarField { grid, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..n {
            for j in 0..n {
                values.push(f(grid.node(i, j)));
            }
        }
        ScalarField { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Periodic lookup.
    #[inline]
    pub fn at(&self, i: isize, j: isize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Removes the spatial mean in place.
    pub fn project_zero_mean(&mut self) {
        let m = self.mean();
        self.values.iter_mut().for_each(|v| *v -= m);
    }

    pub fn scaled(&self, s: f64) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &ScalarField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    /// `(1 - w) * self + w * other`.
    pub fn lerp(&self, other: &ScalarField, w: f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect(),
        })
    }

    /// Discrete inner product `h² Σ f g`.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let h2 = self.grid.h().powi(2);
        Ok(h2
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Periodic shift by `(di, dj)` cells: `out(i, j) = self(i - di, j - dj)`.
    pub fn shifted(&self, di: isize, dj: isize) -> Self {
        let n = self.grid.n();
        let mut values = vec![0.0; self.grid.len()];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = self.at(i as isize - di, j as isize - dj);
            }
        }
        ScalarField {
            grid: self.grid,
            values,
        }
    }
}

/// Staggered vector field; see the module docs for the face layout.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        VectorField {
            grid,
            x: vec![0.0; grid.len()],
            y: vec![0.0; grid.len()],
        }
    }

    pub fn from_components(grid: Grid, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != grid.len() || y.len() != grid.len() {
            return Err(Error::GridMismatch("vector component length".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite vector component".into()));
        }
        Ok(VectorField { grid, x, y })
    }

    /// Samples `f` on the faces: component 0 on x-faces, component 1 on y-faces.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let n = grid.n();
        let mut x = Vec::with_capacity(grid.len());
        let mut y = Vec::with_capacity(grid.len());
        for i in 0..n {
            for j in 0..n {
                x.push(f(grid.x_face(i, j))[0]);
                y.push(f(grid.y_face(i, j))[1]);
            }
        }
        VectorField { grid, x, y }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Cell-sum inner product `h² Σ (u_x v_x + u_y v_y)`.
    pub fn inner(&self, other: &VectorField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let h2 = self.grid.h().powi(2);
        let sx: f64 = self.x.iter().zip(&other.x).map(|(a, b)| a * b).sum();
        let sy: f64 = self.y.iter().zip(&other.y).map(|(a, b)| a * b).sum();
        Ok(h2 * (sx + sy))
    }
}

/// Face-centred forward differences.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid();
    let n = grid.n();
    let inv_h = 1.0 / grid.h();
    let v = f.values();
    let mut gx = vec![0.0; grid.len()];
    let mut gy = vec![0.0; grid.len()];
    for i in 0..n {
        let ip = (i + 1) % n;
        for j in 0..n {
            let jp = (j + 1) % n;
            let c = v[i * n + j];
            gx[i * n + j] = (v[ip * n + j] - c) * inv_h;
            gy[i * n + j] = (v[i * n + jp] - c) * inv_h;
        }
    }
    VectorField { grid, x: gx, y: gy }
}

/// Backward differences of face fluxes; the result sums to zero exactly
/// in exact arithmetic.
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid();
    let n = grid.n();
    let inv_h = 1.0 / grid.h();
    let mut out = vec![0.0; grid.len()];
    for i in 0..n {
        let im = (i + n - 1) % n;
        for j in 0..n {
            let jm = (j + n - 1) % n;
            let k = i * n + j;
            out[k] = (v.x[k] - v.x[im * n + j] + v.y[k] - v.y[i * n + jm]) * inv_h;
        }
    }
    ScalarField { grid, values: out }
}

/// Discrete integral `h² Σ f` over the torus.
pub fn mass(f: &ScalarField) -> f64 {
    f.grid().h().powi(2) * f.values().iter().sum::<f64>()
}

pub fn norm_l2(f: &ScalarField) -> f64 {
    let h2 = f.grid().h().powi(2);
    (h2 * f.values().iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// L² distance between two fields on the same grid.
pub fn distance_l2(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.grid().check_same(&b.grid())?;
    let h2 = a.grid().h().powi(2);
    Ok((h2
        * a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>())
    .sqrt())
}

// ---------------------------------------------------------------------------
// Serialization: one header line `n=<int>`, then row-major values.

fn parse_header(path: &Path, line: &str) -> Result<Grid> {
    let n = line
        .trim()
        .strip_prefix("n=")
        .and_then(|s| s.trim().parse::<usize>().ok())
        .ok_or_else(|| Error::format(path, format!("bad header {line:?}")))?;
    Grid::new(n).map_err(|e| Error::format(path, e.to_string()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn encode_binary(n: usize, blocks: &[&[f64]]) -> Vec<u8> {
    let mut bytes = format!("n={n}\n").into_bytes();
    for block in blocks {
        for v in block.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

fn decode_binary(path: &Path, count: usize) -> Result<(Grid, Vec<Vec<f64>>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::io(path, e))?;
    let grid = parse_header(path, &header)?;
    let mut rest = Vec::new();
    reader
        .read_to_end(&mut rest)
        .map_err(|e| Error::io(path, e))?;
    if rest.len() != count * grid.len() * 8 {
        return Err(Error::format(
            path,
            format!(
                "expected {} payload bytes, got {}",
                count * grid.len() * 8,
                rest.len()
            ),
        ));
    }
    let all: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((grid, all.chunks(grid.len()).map(<[f64]>::to_vec).collect()))
}

fn encode_csv(n: usize, blocks: &[&[f64]]) -> String {
    let mut s = format!("n={n}\n");
    for block in blocks {
        for row in block.chunks(n) {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                // `{:?}` prints the shortest representation that round-trips.
                let _ = write!(s, "{v:?}");
            }
            s.push('\n');
        }
    }
    s
}

fn decode_csv(path: &Path, count: usize) -> Result<(Grid, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let grid = parse_header(path, lines.next().unwrap_or_default())?;
    let mut values = Vec::with_capacity(count * grid.len());
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let row: Vec<&str> = line.split(',').collect();
        if row.len() != grid.n() {
            return Err(Error::format(path, format!("row of {} values", row.len())));
        }
        for tok in row {
            values.push(
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::format(path, e.to_string()))?,
            );
        }
    }
    if values.len() != count * grid.len() {
        return Err(Error::format(path, "wrong number of rows"));
    }
    Ok((
        grid,
        values.chunks(grid.len()).map(<[f64]>::to_vec).collect(),
    ))
}

impl ScalarField {
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        write_bytes(path, &encode_binary(self.grid.n(), &[&self.values]))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let (grid, mut blocks) = decode_binary(path, 1)?;
        ScalarField::from_values(grid, blocks.remove(0))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_bytes(path, encode_csv(self.grid.n(), &[&self.values]).as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (grid, mut blocks) = decode_csv(path, 1)?;
        ScalarField::from_values(grid, blocks.remove(0))
    }

    /// Dispatches on the extension: `.csv` is text, anything else binary.
    pub fn read(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "csv") {
            Self::read_csv(path)
        } else {
            Self::read_binary(path)
        }
    }
}

/// Vector files carry the same header followed by the x-component block
/// and then the y-component block.
impl VectorField {
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        write_bytes(path, &encode_binary(self.grid.n(), &[&self.x, &self.y]))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let (grid, mut blocks) = decode_binary(path, 2)?;
        let y = blocks.pop().expect("two blocks");
        let x = blocks.pop().expect("two blocks");
        VectorField::from_components(grid, x, y)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_bytes(
            path,
            encode_csv(self.grid.n(), &[&self.x, &self.y]).as_bytes(),
        )
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (grid, mut blocks) = decode_csv(path, 2)?;
        let y = blocks.pop().expect("two blocks");
        let x = blocks.pop().expect("two blocks");
        VectorField::from_components(grid, x, y)
    }

    pub fn read(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "csv") {
            Self::read_csv(path)
        } else {
            Self::read_binary(path)
        }
    }
}
