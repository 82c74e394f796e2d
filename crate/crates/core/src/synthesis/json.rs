//! Gain documents: `{"type": …, …}` with row-major matrices whose entries
//! are written with 17 significant digits.

use nalgebra::DMatrix;
use serde::ser::Error as _;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use super::{AffineGain, Gain, PcGain, ScGain, StaticGain};
use crate::error::{Error, Result};
use crate::orthopoly::{make_basis, LagrangeBasis, OrthoBasis};

struct Num(f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!("non-finite gain entry {}", self.0)));
        }
        RawValue::from_string(format!("{:.16e}", self.0)).map_err(S::Error::custom)?.serialize(s)
    }
}

struct Mat<'a>(&'a DMatrix<f64>);

impl Serialize for Mat<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Num>> = self.0.row_iter().map(|r| r.iter().map(|v| Num(*v)).collect()).collect();
        rows.serialize(s)
    }
}

fn mats(v: &[DMatrix<f64>]) -> Vec<Mat<'_>> {
    v.iter().map(Mat).collect()
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Out<'a> {
    Lti {
        #[serde(rename = "K")]
        k: Mat<'a>,
    },
    Lpv {
        #[serde(rename = "Y0")]
        y0: Mat<'a>,
        #[serde(rename = "Y1")]
        y1: Mat<'a>,
        #[serde(rename = "W0")]
        w0: Mat<'a>,
        #[serde(rename = "W1")]
        w1: Mat<'a>,
    },
    Pclpv {
        basis: &'a OrthoBasis,
        #[serde(rename = "Ybar")]
        ybar: Mat<'a>,
        #[serde(rename = "W")]
        w: Vec<Mat<'a>>,
    },
    Sclpv {
        lagrange: &'a LagrangeBasis,
        #[serde(rename = "Y")]
        y: Vec<Mat<'a>>,
        #[serde(rename = "W")]
        w: Vec<Mat<'a>>,
    },
}

type Rows = Vec<Vec<f64>>;

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum In {
    Lti {
        #[serde(rename = "K")]
        k: Rows,
    },
    Lpv {
        #[serde(rename = "Y0")]
        y0: Rows,
        #[serde(rename = "Y1")]
        y1: Rows,
        #[serde(rename = "W0")]
        w0: Rows,
        #[serde(rename = "W1")]
        w1: Rows,
    },
    Pclpv {
        basis: OrthoBasis,
        #[serde(rename = "Ybar")]
        ybar: Rows,
        #[serde(rename = "W")]
        w: Vec<Rows>,
    },
    Sclpv {
        lagrange: LagrangeBasis,
        #[serde(rename = "Y")]
        y: Vec<Rows>,
        #[serde(rename = "W")]
        w: Vec<Rows>,
    },
}

pub(super) fn to_string(gain: &Gain) -> Result<String> {
    let doc = match gain {
        Gain::Static(g) => Out::Lti { k: Mat(&g.k) },
        Gain::Affine(g) => Out::Lpv { y0: Mat(&g.y0), y1: Mat(&g.y1), w0: Mat(&g.w0), w1: Mat(&g.w1) },
        Gain::Pc(g) => Out::Pclpv { basis: &g.basis, ybar: Mat(&g.ybar), w: mats(&g.w) },
        Gain::Sc(g) => Out::Sclpv { lagrange: &g.lagrange, y: mats(&g.y), w: mats(&g.w) },
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

fn matrix(name: &str, rows: Rows, shape: Option<(usize, usize)>) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Input(format!("gain matrix {name} must be a non-empty rectangular array")));
    }
    if let Some(want) = shape {
        if (r, c) != want {
            return Err(Error::Dimension(format!("gain matrix {name} is {r}x{c}, expected {}x{}", want.0, want.1)));
        }
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

fn matrices(name: &str, list: Vec<Rows>, count: usize, shape: Option<(usize, usize)>) -> Result<Vec<DMatrix<f64>>> {
    if list.len() != count {
        return Err(Error::Dimension(format!("gain lists {} {name} matrices, expected {count}", list.len())));
    }
    let mut out = Vec::with_capacity(count);
    let mut shape = shape;
    for (i, rows) in list.into_iter().enumerate() {
        let m = matrix(&format!("{name}[{i}]"), rows, shape)?;
        shape = Some(m.shape());
        out.push(m);
    }
    Ok(out)
}

pub(super) fn from_str(text: &str) -> Result<Gain> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: In = serde_path_to_error::deserialize(de).map_err(|e| Error::Input(format!("gain file: {e}")))?;
    Ok(match doc {
        In::Lti { k } => Gain::Static(StaticGain { k: matrix("K", k, None)? }),
        In::Lpv { y0, y1, w0, w1 } => {
            let y0 = matrix("Y0", y0, None)?;
            let n = y0.nrows();
            if y0.ncols() != n {
                return Err(Error::Dimension("Y0 must be square".into()));
            }
            let w0 = matrix("W0", w0, None)?;
            let m = w0.nrows();
            Gain::Affine(AffineGain {
                y1: matrix("Y1", y1, Some((n, n)))?,
                w1: matrix("W1", w1, Some((m, n)))?,
                y0,
                w0: if w0.ncols() == n { w0 } else { return Err(Error::Dimension("W0 must have n columns".into())) },
            })
        }
        In::Pclpv { basis, ybar, w } => {
            let basis = make_basis(basis.distribution, basis.degree)?;
            let k = basis.len();
            let ybar = matrix("Ybar", ybar, None)?;
            if !ybar.is_square() || ybar.nrows() % k != 0 {
                return Err(Error::Dimension(format!("Ybar is {:?}, expected n(N+1) square with N+1 = {k}", ybar.shape())));
            }
            let n = ybar.nrows() / k;
            let w = matrices("W", w, k, None)?;
            if w[0].ncols() != n {
                return Err(Error::Dimension("W blocks must have n columns".into()));
            }
            Gain::Pc(PcGain { basis, ybar, w })
        }
        In::Sclpv { lagrange, y, w } => {
            let count = lagrange.nodes.len();
            if count == 0 || lagrange.node_expectations.len() != count {
                return Err(Error::Input("interpolant nodes and masses must be non-empty and equal in number".into()));
            }
            let y = matrices("Y", y, count, None)?;
            let n = y[0].nrows();
            if y[0].ncols() != n {
                return Err(Error::Dimension("Y blocks must be square".into()));
            }
            let w = matrices("W", w, count, None)?;
            if w[0].ncols() != n {
                return Err(Error::Dimension("W blocks must have n columns".into()));
            }
            Gain::Sc(ScGain { lagrange: LagrangeBasis { distribution: lagrange.distribution.validated()?, ..lagrange }, y, w })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::{make_lagrange, ParameterDistribution};

    fn dist() -> ParameterDistribution {
        ParameterDistribution::uniform(-20.0, 20.0).unwrap()
    }

    fn awkward(r: usize, c: usize, seed: f64) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |i, j| (seed + i as f64 * 0.1 + j as f64 / 3.0).sin() * 10f64.powi(i as i32 - 3) / 7.0)
    }

    #[test]
    fn round_trips_bit_exactly() {
        let basis = make_basis(dist(), 2).unwrap();
        let lag = make_lagrange(&basis).unwrap();
        let gains = [
            Gain::Static(StaticGain { k: awkward(1, 2, 0.3) }),
            Gain::Affine(AffineGain { y0: awkward(2, 2, 1.0), y1: awkward(2, 2, 2.0), w0: awkward(1, 2, 3.0), w1: awkward(1, 2, 4.0) }),
            Gain::Pc(PcGain { basis: basis.clone(), ybar: awkward(6, 6, 5.0), w: (0..3).map(|k| awkward(1, 2, k as f64)).collect() }),
            Gain::Sc(ScGain { lagrange: lag, y: (0..3).map(|k| awkward(2, 2, k as f64)).collect(), w: (0..3).map(|k| awkward(1, 2, -(k as f64))).collect() }),
        ];
        for g in gains {
            let text = to_string(&g).unwrap();
            assert_eq!(from_str(&text).unwrap(), g, "{text}");
        }
    }

    #[test]
    fn writes_seventeen_digits() {
        let text = to_string(&Gain::Static(StaticGain { k: DMatrix::from_element(1, 1, 0.1) })).unwrap();
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(from_str(r#"{"type":"lti","K":[[1.0],[1.0, 2.0]]}"#).is_err());
        assert!(from_str(r#"{"type":"lpv","Y0":[[1.0]],"Y1":[[1.0, 0.0]],"W0":[[1.0]],"W1":[[0.0]]}"#).is_err());
        assert!(from_str(r#"{"type":"mystery"}"#).is_err());
        let err = from_str(r#"{"type":"lti"}"#).unwrap_err().to_string();
        assert!(err.contains('K'), "{err}");
    }

    #[test]
    fn refuses_non_finite() {
        assert!(to_string(&Gain::Static(StaticGain { k: DMatrix::from_element(1, 1, f64::NAN) })).is_err());
    }
}
