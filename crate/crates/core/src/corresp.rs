//! Correspondence analysis of two-way tables through the canonical copula.
//!
//! Both margins get full score bases (`I-1` and `J-1` functions), so the
//! comoment matrix carries all the dependence in the table. Row category `i`
//! sits at `mu_ik = lambda_k phi_k(u_i)`, column `j` at
//! `nu_jk = lambda_k psi_k(v_j)`. The Goodman variant replaces the L2
//! kernel by the interaction matrix of the exponential copula.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::basis::{Order, ScoreBasis};
use crate::copula::{interaction_svd, CopulaModel, Direction};
use crate::dist::ContingencyTable;
use crate::error::{Error, Result};
use crate::linalg::{jacobi_svd, Svd};
use crate::moments::Joint;
use crate::select::Selection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Ca,
    Goodman,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ca => "ca",
            Variant::Goodman => "goodman",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ca" => Ok(Variant::Ca),
            "goodman" => Ok(Variant::Goodman),
            _ => Err(Error::InvalidInput(format!("unknown variant '{s}' (expected ca or goodman)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrespondenceResult {
    pub variant: Variant,
    pub rank: usize,
    /// Every singular value of the kernel, not only the retained ones.
    pub singular_values: Vec<f64>,
    /// `s_k^2 / sum s^2` for the retained dimensions.
    pub inertia_shares: Vec<f64>,
    /// `sum s_k^2` over all dimensions.
    pub total_inertia: f64,
    pub row_coords: Vec<Vec<f64>>,
    pub col_coords: Vec<Vec<f64>>,
    pub row_masses: Vec<f64>,
    pub col_masses: Vec<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

fn full_joint(t: &ContingencyTable) -> Result<Joint> {
    Joint::from_table(t, Order::Full, Order::Full)
}

fn check_rank(t: &ContingencyTable, r: usize) -> Result<()> {
    let max = t.rows().min(t.cols()) - 1;
    if r == 0 || r > max {
        return Err(Error::OutOfRange(format!("rank {r} outside 1..={max}")));
    }
    Ok(())
}

/// `s_k * sum_j W[j][k] T_j(x_i)` for each atom `i` and `k < r`.
fn coordinates(b: &ScoreBasis, w: &[Vec<f64>], s: &[f64], r: usize) -> Vec<Vec<f64>> {
    (0..b.dist().len())
        .map(|i| {
            let t = b.row(i);
            (0..r)
                .map(|k| s[k] * t.iter().zip(w).map(|(x, row)| x * row[k]).sum::<f64>())
                .collect()
        })
        .collect()
}

pub fn correspondence_analysis(
    t: &ContingencyTable,
    r: usize,
    variant: Variant,
) -> Result<CorrespondenceResult> {
    check_rank(t, r)?;
    let joint = full_joint(t)?;
    let svd: Svd = match variant {
        Variant::Ca => jacobi_svd(&joint.comoments().entries),
        Variant::Goodman => {
            let model = CopulaModel::exponential(&joint, &Selection::All)?;
            interaction_svd(&model).expect("exponential model")
        }
    };
    let mut s = svd.s.clone();
    s.resize(t.rows().min(t.cols()) - 1, 0.0);
    let total: f64 = s.iter().map(|v| v * v).sum();
    let share = |v: f64| if total > 0.0 { v * v / total } else { 0.0 };
    let (ur, vr) = pad(&svd, r);
    Ok(CorrespondenceResult {
        variant,
        rank: r,
        inertia_shares: s[..r].iter().map(|v| share(*v)).collect(),
        total_inertia: total,
        row_coords: coordinates(joint.x_basis(), &ur, &s, r),
        col_coords: coordinates(joint.y_basis(), &vr, &s, r),
        singular_values: s,
        row_masses: t.row_masses(),
        col_masses: t.col_masses(),
        row_labels: t.row_labels().to_vec(),
        col_labels: t.col_labels().to_vec(),
    })
}

/// Singular vectors with zero columns appended up to rank `r` (the Jacobi
/// routine drops exact-zero singular values).
fn pad(svd: &Svd, r: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let grow = |m: &[Vec<f64>]| {
        m.iter()
            .map(|row| {
                let mut row = row.clone();
                row.resize(r.max(row.len()), 0.0);
                row
            })
            .collect()
    };
    (grow(&svd.u), grow(&svd.v))
}

impl CorrespondenceResult {
    /// `label,kind,dim1..dimr,mass,inertia_share`, where the share is the
    /// point's `mass * |coords|^2` over the total inertia. Row shares (and
    /// column shares) sum to the inertia retained by the map.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,kind");
        for k in 1..=self.rank {
            let _ = write!(out, ",dim{k}");
        }
        out.push_str(",mass,inertia_share\n");
        let total = self.total_inertia;
        let mut emit = |label: &str, kind: &str, coords: &[f64], mass: f64| {
            let _ = write!(out, "{},{kind}", csv_field(label));
            for c in coords {
                let _ = write!(out, ",{c}");
            }
            let own = mass * coords.iter().map(|c| c * c).sum::<f64>();
            let share = if total > 0.0 { own / total } else { 0.0 };
            let _ = writeln!(out, ",{mass},{share}");
        };
        for (i, c) in self.row_coords.iter().enumerate() {
            emit(&self.row_labels[i], "row", c, self.row_masses[i]);
        }
        for (j, c) in self.col_coords.iter().enumerate() {
            emit(&self.col_labels[j], "col", c, self.col_masses[j]);
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Conditional comparison coefficients for one category, in two bases.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryShape {
    pub label: String,
    /// On the canonical functions of the other margin: `lambda_k phi_k(u_i)`.
    pub canonical: Vec<f64>,
    /// On the score functions of the other margin:
    /// `LP[k;Y|X=x_i] = sum_j LP[j,k] T_j(x_i;X)` using the rank-`r` kernel.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeMatch {
    pub rows: Vec<CategoryShape>,
    pub cols: Vec<CategoryShape>,
}

/// Per-category conditional comparison coefficients of the rank-`r`
/// canonical copula.
pub fn shape_match_report(t: &ContingencyTable, r: usize) -> Result<ShapeMatch> {
    check_rank(t, r)?;
    let joint = full_joint(t)?;
    let model = CopulaModel::canonical(&joint, r)?;
    let ca = correspondence_analysis(t, r, Variant::Ca)?;
    let rows = (0..t.rows())
        .map(|i| CategoryShape {
            label: t.row_labels()[i].clone(),
            canonical: ca.row_coords[i].clone(),
            scores: model.slice_coefficients(joint.x_basis().dist().mid()[i], Direction::YGivenX),
        })
        .collect();
    let cols = (0..t.cols())
        .map(|j| CategoryShape {
            label: t.col_labels()[j].clone(),
            canonical: ca.col_coords[j].clone(),
            scores: model.slice_coefficients(joint.y_basis().dist().mid()[j], Direction::XGivenY),
        })
        .collect();
    Ok(ShapeMatch { rows, cols })
}
