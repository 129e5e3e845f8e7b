//! Exact path-dependent TreeSHAP on the boosted forest's margins, plus the
//! SHAP dependence table and its least-squares fit.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::ErrorClass;
use crate::error::{Error, Result};
use crate::wakeup::{BoostedForest, RegressionTree};

/// Per-class SHAP decomposition of the forest margins at one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    /// Cover-weighted expected margin per class.
    pub base_value: [f64; 3],
    /// `phi[class][feature]`.
    pub phi: [Vec<f64>; 3],
    pub prediction_margin: [f64; 3],
}

impl ShapAttribution {
    pub fn phi_for(&self, class: ErrorClass) -> &[f64] {
        &self.phi[class.index()]
    }

    /// Largest `|base + Σ phi − margin|` over classes.
    pub fn local_accuracy_error(&self) -> f64 {
        (0..3)
            .map(|k| (self.base_value[k] + self.phi[k].iter().sum::<f64>() - self.prediction_margin[k]).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

const NO_FEATURE: usize = usize::MAX;

fn extend(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: usize) {
    let l = path.len();
    path.push(PathElement { feature, zero_fraction, one_fraction, weight: if l == 0 { 1.0 } else { 0.0 } });
    for i in (0..l).rev() {
        path[i + 1].weight += one_fraction * path[i].weight * (i + 1) as f64 / (l + 1) as f64;
        path[i].weight = zero_fraction * path[i].weight * (l - i) as f64 / (l + 1) as f64;
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let l = path.len() - 1;
    let PathElement { one_fraction, zero_fraction, .. } = path[index];
    let mut next = path[l].weight;
    for j in (0..l).rev() {
        if one_fraction != 0.0 {
            let tmp = path[j].weight;
            path[j].weight = next * (l + 1) as f64 / ((j + 1) as f64 * one_fraction);
            next = tmp - path[j].weight * zero_fraction * (l - j) as f64 / (l + 1) as f64;
        } else {
            path[j].weight = path[j].weight * (l + 1) as f64 / (zero_fraction * (l - j) as f64);
        }
    }
    for j in index..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero_fraction = path[j + 1].zero_fraction;
        path[j].one_fraction = path[j + 1].one_fraction;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let mut p = path.to_vec();
    unwind(&mut p, index);
    p.iter().map(|e| e.weight).sum()
}

fn child_covers(tree: &RegressionTree, left: usize, right: usize) -> Result<(f64, f64)> {
    let cl = tree.nodes[left].cover.ok_or(Error::MissingCover)?;
    let cr = tree.nodes[right].cover.ok_or(Error::MissingCover)?;
    Ok((cl, cr))
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &RegressionTree,
    x: &[f64],
    phi: &mut [f64],
    node: usize,
    mut path: Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: usize,
) -> Result<()> {
    extend(&mut path, zero_fraction, one_fraction, feature);
    let n = &tree.nodes[node];
    let Some(split) = n.split else {
        for i in 1..path.len() {
            let w = unwound_sum(&path, i);
            let e = path[i];
            phi[e.feature] += w * (e.one_fraction - e.zero_fraction) * n.value;
        }
        return Ok(());
    };
    let (hot, cold) = if x[split.feature] < split.threshold {
        (split.left, split.right)
    } else {
        (split.right, split.left)
    };
    let (cl, cr) = child_covers(tree, split.left, split.right)?;
    let total = cl + cr;
    let cover_of = |c: usize| if c == split.left { cl } else { cr };

    let (mut iz, mut io) = (1.0, 1.0);
    if let Some(k) = path.iter().position(|e| e.feature == split.feature) {
        iz = path[k].zero_fraction;
        io = path[k].one_fraction;
        unwind(&mut path, k);
    }
    if total > 0.0 {
        // A zero-cover cold branch carries no mass and would make the path
        // weights singular.
        let cold_zero = iz * cover_of(cold) / total;
        if cold_zero > 0.0 {
            recurse(tree, x, phi, hot, path.clone(), iz * cover_of(hot) / total, io, split.feature)?;
            recurse(tree, x, phi, cold, path, cold_zero, 0.0, split.feature)?;
        } else {
            recurse(tree, x, phi, hot, path, iz * cover_of(hot) / total, io, split.feature)?;
        }
    } else {
        recurse(tree, x, phi, hot, path, iz, io, split.feature)?;
    }
    Ok(())
}

/// Cover-weighted mean leaf value.
pub fn expected_value(tree: &RegressionTree) -> Result<f64> {
    fn go(tree: &RegressionTree, i: usize) -> Result<f64> {
        match tree.nodes[i].split {
            None => Ok(tree.nodes[i].value),
            Some(s) => {
                let (cl, cr) = child_covers(tree, s.left, s.right)?;
                if cl + cr > 0.0 {
                    Ok((cl * go(tree, s.left)? + cr * go(tree, s.right)?) / (cl + cr))
                } else {
                    go(tree, s.left)
                }
            }
        }
    }
    if !tree.has_covers() {
        return Err(Error::MissingCover);
    }
    go(tree, 0)
}

/// SHAP values of one tree at `x`, accumulated into `phi`.
pub fn tree_shap_single(tree: &RegressionTree, x: &[f64], phi: &mut [f64]) -> Result<()> {
    if !tree.has_covers() {
        return Err(Error::MissingCover);
    }
    recurse(tree, x, phi, 0, Vec::with_capacity(16), 1.0, 1.0, NO_FEATURE)
}

/// Exact SHAP attribution of every class margin.
pub fn tree_shap(forest: &BoostedForest, x: &[f64]) -> Result<ShapAttribution> {
    if x.len() != forest.n_features {
        return Err(Error::DimensionMismatch { expected: forest.n_features, got: x.len() });
    }
    let mut base = [forest.base_score; 3];
    let mut phi: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; forest.n_features]);
    for round in &forest.trees {
        for (k, tree) in round.iter().enumerate() {
            base[k] += expected_value(tree)?;
            tree_shap_single(tree, x, &mut phi[k])?;
        }
    }
    Ok(ShapAttribution { base_value: base, phi, prediction_margin: forest.margins(x) })
}

/// One logged attribution: a feature's value and SHAP value for one class
/// margin at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapRecord {
    pub round: usize,
    pub class: u8,
    pub predicted_class: u8,
    pub feature: String,
    pub feature_value: f64,
    pub phi: f64,
}

impl ShapRecord {
    /// Rows for every (class, feature) of one attribution.
    pub fn from_attribution(
        round: usize,
        predicted: ErrorClass,
        names: &[String],
        features: &[f64],
        attr: &ShapAttribution,
    ) -> Vec<ShapRecord> {
        let mut out = Vec::with_capacity(3 * names.len());
        for class in ErrorClass::ALL {
            for (m, name) in names.iter().enumerate() {
                out.push(ShapRecord {
                    round,
                    class: class.label(),
                    predicted_class: predicted.label(),
                    feature: name.clone(),
                    feature_value: features[m],
                    phi: attr.phi_for(class)[m],
                });
            }
        }
        out
    }
}

pub fn write_shap_csv(path: &Path, records: &[ShapRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_shap_csv(path: &Path) -> Result<Vec<ShapRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Ordinary least squares `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Regression F-statistic on (1, n − 2) degrees of freedom.
    pub f_statistic: f64,
}

/// `None` with fewer than 3 points or a constant regressor.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Option<OlsFit> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let ssr = (syy - sse).max(0.0);
    let r_squared = if syy > 0.0 { (ssr / syy).clamp(0.0, 1.0) } else { 0.0 };
    let f_statistic = if ssr == 0.0 {
        0.0
    } else if sse == 0.0 {
        f64::INFINITY
    } else {
        ssr / (sse / (nf - 2.0))
    };
    Some(OlsFit { n, slope, intercept, r_squared, f_statistic })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencePoint {
    pub round: usize,
    pub feature_value: f64,
    pub phi: f64,
    pub predicted_class: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceTable {
    pub feature: String,
    pub points: Vec<DependencePoint>,
    pub fit: Option<OlsFit>,
}

/// Feature value against the SHAP value of the predicted class's margin.
pub fn shap_dependence_export(records: &[ShapRecord], feature: &str) -> DependenceTable {
    let points: Vec<DependencePoint> = records
        .iter()
        .filter(|r| r.feature == feature && r.class == r.predicted_class)
        .map(|r| DependencePoint {
            round: r.round,
            feature_value: r.feature_value,
            phi: r.phi,
            predicted_class: r.predicted_class,
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.feature_value).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.phi).collect();
    let fit = ols_fit(&xs, &ys);
    DependenceTable { feature: feature.to_string(), points, fit }
}

impl DependenceTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_fit_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let body = serde_json::json!({
            "feature": self.feature,
            "n_points": self.points.len(),
            "fit": self.fit.map(|f| serde_json::json!({
                "slope": f.slope,
                "intercept": f.intercept,
                "r_squared": f.r_squared,
                "f_statistic": if f.f_statistic.is_finite() { serde_json::json!(f.f_statistic) } else { serde_json::json!("inf") },
            })),
        });
        writeln!(f, "{}", serde_json::to_string_pretty(&body)?).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
