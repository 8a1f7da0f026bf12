//! LP (Legendre-polynomial-style) nonparametric modeling of mixed data.
//!
//! The crate builds orthonormal score functions for any discrete or
//! continuous variable and, on top of them, LP moments and comoments,
//! skew-G density estimates, copula density models, correspondence analysis,
//! LPINFOR dependence statistics, and conditional regression models.

pub mod basis;
pub mod copula;
pub mod corresp;
pub mod datasets;
pub mod dist;
pub mod error;
pub mod io;
pub mod lpinfor;
pub mod linalg;
pub mod maxent;
pub mod moments;
pub mod numeric;
pub mod regress;
pub mod select;
pub mod sim;
pub mod skew;

pub use basis::{legendre, LegendreBasis, Order, ScoreBasis};
pub use dist::{ContingencyTable, DiscreteDist, Sample};
pub use error::{Error, Result};
pub use moments::{Joint, LpComoments, LpMoments};
pub use select::Selection;
pub use skew::{Baseline, BaselineKind, ComparisonDensity};
