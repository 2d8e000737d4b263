//! Thin free boundaries `Γ± = ∂{±u(·,0) > 0}`, their separation, the zero
//! set, singular points and nondegeneracy exponents.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{bump, ScalarField};
use crate::grid::Point;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundarySet {
    pub gamma_plus: Vec<Point>,
    pub gamma_minus: Vec<Point>,
    pub singular: Vec<Point>,
}

impl FreeBoundarySet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Thin lattice edges as `(node, neighbour)` pairs, each edge once.
fn thin_edges(field: &ScalarField) -> Vec<(usize, usize)> {
    let g = field.grid();
    let mut out = Vec::new();
    for &id in g.thin_nodes() {
        let p = g.node_lattice(id);
        for d in 0..g.dim() - 1 {
            if let Some(q) = g.node_at(bump(p, d, 1)) {
                out.push((id, q));
            }
        }
    }
    out
}

fn lerp_point(x: &Point, y: &Point, t: f64) -> Point {
    [
        x[0] + t * (y[0] - x[0]),
        x[1] + t * (y[1] - x[1]),
        x[2] + t * (y[2] - x[2]),
    ]
}

/// Γ± with the default tolerance `tol = 0`.
pub fn extract_phases(field: &ScalarField) -> FreeBoundarySet {
    extract_phases_with_tol(field, 0.0)
}

/// Γ⁺ collects thin edges leaving `{u > tol}`; the point is the linear zero
/// crossing when the far end is below `−tol`, else the far node itself.
/// Γ⁻ is built the same way from `{u < −tol}`.
pub fn extract_phases_with_tol(field: &ScalarField, tol: f64) -> FreeBoundarySet {
    let g = field.grid();
    let u = field.values();
    let mut set = FreeBoundarySet::default();
    let locate = |inside: usize, outside: usize, sgn: f64| -> Point {
        let (ui, uo) = (sgn * u[inside], sgn * u[outside]);
        let (xi, xo) = (g.node_coords(inside), g.node_coords(outside));
        if uo < -tol {
            lerp_point(&xi, &xo, ui / (ui - uo))
        } else {
            xo
        }
    };
    for (i, j) in thin_edges(field) {
        for sgn in [1.0, -1.0] {
            let (ui, uj) = (sgn * u[i], sgn * u[j]);
            let target = if sgn > 0.0 { &mut set.gamma_plus } else { &mut set.gamma_minus };
            if ui > tol && uj <= tol {
                target.push(locate(i, j, sgn));
            } else if uj > tol && ui <= tol {
                target.push(locate(j, i, sgn));
            }
        }
    }
    set
}

/// A piece of the thin zero curve with the tangential gradient magnitude of
/// the bilinear interpolant at its midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroSegment {
    pub ends: [Point; 2],
    pub gradient: f64,
}

/// Zero-level segments of the thin trace (3D grids only): marching squares
/// on the bilinear thin faces, nonnegative corners counted as positive.
pub fn zero_segments(field: &ScalarField) -> Vec<ZeroSegment> {
    let g = field.grid();
    if g.dim() != 3 {
        return Vec::new();
    }
    let u = field.values();
    let h = g.spacing();
    let mut segs = Vec::new();
    // corners in cyclic order around the face: (0,0) (1,0) (1,1) (0,1)
    let cyc = [0usize, 1, 3, 2];
    for face in g.thin_faces() {
        let ids: Vec<usize> = cyc.iter().map(|&c| face.corners[c] as usize).collect();
        let vals: Vec<f64> = ids.iter().map(|&i| u[i]).collect();
        let origin = g.node_coords(ids[0]);
        let gradient_at = |p: &Point| -> f64 {
            let s = ((p[0] - origin[0]) / h).clamp(0.0, 1.0);
            let t = ((p[1] - origin[1]) / h).clamp(0.0, 1.0);
            let (v00, v10, v11, v01) = (vals[0], vals[1], vals[2], vals[3]);
            let gx = ((v10 - v00) * (1.0 - t) + (v11 - v01) * t) / h;
            let gy = ((v01 - v00) * (1.0 - s) + (v11 - v10) * s) / h;
            gx.hypot(gy)
        };
        let mut pts = Vec::new();
        for k in 0..4 {
            let (a, b) = (k, (k + 1) % 4);
            let (va, vb) = (vals[a], vals[b]);
            if (va >= 0.0) != (vb >= 0.0) {
                let t = va / (va - vb);
                pts.push(lerp_point(&g.node_coords(ids[a]), &g.node_coords(ids[b]), t));
            }
        }
        let mut push = |p: Point, q: Point| {
            let mid = lerp_point(&p, &q, 0.5);
            segs.push(ZeroSegment { ends: [p, q], gradient: gradient_at(&mid) });
        };
        match pts.len() {
            2 => push(pts[0], pts[1]),
            4 => {
                // Saddle: resolve with the face-centre value.
                let centre = vals.iter().sum::<f64>() / 4.0;
                if (centre >= 0.0) == (vals[0] >= 0.0) {
                    push(pts[0], pts[3]);
                    push(pts[1], pts[2]);
                } else {
                    push(pts[0], pts[1]);
                    push(pts[2], pts[3]);
                }
            }
            _ => {}
        }
    }
    segs
}

/// Endpoints of [`zero_segments`].
pub fn zero_curves(field: &ScalarField) -> Vec<[Point; 2]> {
    zero_segments(field).into_iter().map(|s| s.ends).collect()
}

pub(crate) fn dist(x: &Point, y: &Point) -> f64 {
    ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
}

fn directed_hausdorff(from: &[Point], to: &[Point]) -> f64 {
    crate::par::map(from, |x| to.iter().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
        .into_iter()
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between Γ⁺ and Γ⁻.
pub fn nonseparation_distance(fbs: &FreeBoundarySet) -> Result<f64> {
    if fbs.gamma_plus.is_empty() || fbs.gamma_minus.is_empty() {
        return Err(Error::NotApplicable("one of the phases has no free boundary".into()));
    }
    Ok(directed_hausdorff(&fbs.gamma_plus, &fbs.gamma_minus)
        .max(directed_hausdorff(&fbs.gamma_minus, &fbs.gamma_plus)))
}

/// Thin measure of `{|u(·,0)| ≤ tol}` for the piecewise (multi)linear
/// interpolant of the trace: exact on thin edges (n = 2), an 8×8 midpoint
/// rule on each bilinear thin face (n = 3).
pub fn zero_set_measure(field: &ScalarField, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let g = field.grid();
    let u = field.values();
    let area = g.spacing().powi(g.dim() as i32 - 1);
    let band = |x: f64| if x.abs() <= tol { 1.0 } else { 0.0 };
    let mut total = 0.0;
    for face in g.thin_faces() {
        let v: Vec<f64> = face.corners[..2 * (g.dim() - 1)].iter().map(|&c| u[c as usize]).collect();
        let share = if g.dim() == 2 {
            let d = v[1] - v[0];
            if d == 0.0 {
                band(v[0])
            } else {
                let (t0, t1) = ((-tol - v[0]) / d, (tol - v[0]) / d);
                (t0.max(t1).min(1.0) - t0.min(t1).max(0.0)).max(0.0)
            }
        } else {
            let m = 8;
            let mut hits = 0.0;
            for i in 0..m {
                let s = (i as f64 + 0.5) / m as f64;
                for j in 0..m {
                    let t = (j as f64 + 0.5) / m as f64;
                    let x = v[0] * (1.0 - s) * (1.0 - t) + v[1] * s * (1.0 - t) + v[2] * (1.0 - s) * t + v[3] * s * t;
                    hits += band(x);
                }
            }
            hits / (m * m) as f64
        };
        total += face.fraction * area * share;
    }
    Ok(total)
}

/// Default gradient threshold `(1 − a) h^{−a}`: the slope of
/// `|x_1|^{1−a}` one cell away from its zero.
pub fn default_grad_tol(field: &ScalarField) -> f64 {
    let g = field.grid();
    (1.0 - g.a()) * g.spacing().powf(-g.a())
}

/// Free boundary nodes whose tangential gradient is at most `grad_tol`,
/// clustered within two cells; each cluster reports its flattest node.
pub fn singular_candidates(field: &ScalarField, grad_tol: Option<f64>) -> Result<Vec<Point>> {
    let g = field.grid();
    if g.a() >= 0.0 {
        return Err(Error::NotApplicable(
            "singular points are detected through the gradient only for a < 0".into(),
        ));
    }
    let tol = grad_tol.unwrap_or_else(|| default_grad_tol(field));
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("grad_tol must be positive".into()));
    }
    let u = field.values();
    let h = g.spacing();
    let tdim = g.dim() - 1;
    let mut hits: Vec<(Point, f64)> = Vec::new();
    for &id in g.thin_nodes() {
        let p = g.node_lattice(id);
        let ui = u[id];
        let near = ui == 0.0
            || (0..3usize.pow(tdim as u32)).any(|k| {
                let mut q = p;
                let mut rem = k;
                for d in 0..tdim {
                    q[d] += (rem % 3) as i32 - 1;
                    rem /= 3;
                }
                g.node_at(q).is_some_and(|j| u[j] == 0.0 || (u[j] > 0.0) != (ui > 0.0))
            });
        if !near {
            continue;
        }
        let grad = field.thin_gradient(id);
        let mag = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
        if mag <= tol {
            hits.push((g.node_coords(id), mag));
        }
    }
    // Greedy clustering, flattest first.
    hits.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let mut reps: Vec<Point> = Vec::new();
    for (x, _) in hits {
        if reps.iter().all(|r| dist(r, &x) > 2.0 * h * (tdim as f64).sqrt() + 1e-12) {
            reps.push(x);
        }
    }
    Ok(reps)
}

/// Log–log growth of `sup_{B_r′} u^±` about a free boundary point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyFit {
    pub c_plus: f64,
    pub c_minus: f64,
    /// Common slope fitted to both phases.
    pub exponent: f64,
    pub exponent_plus: f64,
    pub exponent_minus: f64,
    /// Growth faster than `r^{1−a}` by more than 10%.
    pub violation: bool,
}

impl NondegeneracyFit {
    pub fn write_csv<W: Write>(&self, tag: &str, a: f64, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tag", "a", "expected", "exponent", "exponent_plus", "exponent_minus", "c_plus", "c_minus", "violation"])?;
        w.write_record([
            tag.to_string(),
            a.to_string(),
            (1.0 - a).to_string(),
            self.exponent.to_string(),
            self.exponent_plus.to_string(),
            self.exponent_minus.to_string(),
            self.c_plus.to_string(),
            self.c_minus.to_string(),
            self.violation.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

fn slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let s = sxy / sxx;
    (s, my - s * mx)
}

/// Fits `sup_{B_r′(c)} u^± ≈ C^± r^e` by least squares in log–log scale.
pub fn nondegeneracy_fit(field: &ScalarField, center: &Point, radii: &[f64]) -> Result<NondegeneracyFit> {
    let g = field.grid();
    let a = g.a();
    if a == 0.0 {
        return Err(Error::NotApplicable("nondegeneracy fit needs a != 0".into()));
    }
    if radii.len() < 2 {
        return Err(Error::InvalidParameter("need at least two radii".into()));
    }
    let u = field.values();
    let mut logr = Vec::new();
    let mut lp = Vec::new();
    let mut lm = Vec::new();
    for &r in radii {
        let (mut sp, mut sm) = (0.0f64, 0.0f64);
        for &id in g.thin_nodes() {
            if dist(&g.node_coords(id), center) <= r * (1.0 + 1e-12) {
                sp = sp.max(u[id]);
                sm = sm.max(-u[id]);
            }
        }
        if sp <= 0.0 || sm <= 0.0 {
            return Err(Error::Degenerate(format!(
                "phase missing in B_{r}′: sup u⁺ = {sp:.3e}, sup u⁻ = {sm:.3e}"
            )));
        }
        logr.push(r.ln());
        lp.push(sp.ln());
        lm.push(sm.ln());
    }
    let (ep, bp) = slope(&logr, &lp);
    let (em, bm) = slope(&logr, &lm);
    // Common slope: pooled within-phase regression.
    let n = logr.len() as f64;
    let mx = logr.iter().sum::<f64>() / n;
    let mp = lp.iter().sum::<f64>() / n;
    let mm = lm.iter().sum::<f64>() / n;
    let sxx: f64 = logr.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = logr
        .iter()
        .enumerate()
        .map(|(k, x)| (x - mx) * ((lp[k] - mp) + (lm[k] - mm)))
        .sum();
    let e = sxy / (2.0 * sxx);
    let _ = (bp, bm);
    Ok(NondegeneracyFit {
        c_plus: (mp - e * mx).exp(),
        c_minus: (mm - e * mx).exp(),
        exponent: e,
        exponent_plus: ep,
        exponent_minus: em,
        violation: e > 1.1 * (1.0 - a),
    })
}
